// flownorm/dnf.hpp

// Copyright 2026  The Flownorm Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef FLOWNORM_DNF_HPP_
#define FLOWNORM_DNF_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flownorm/dataset.hpp"
#include "flownorm/flow.hpp"
#include "flownorm/types.hpp"

namespace flownorm {

/// One latent Gaussian mean per class, unit covariance implied.
using ClassPriors = std::map<std::int64_t, Vec>;

enum class TrainMode { kVanillaNf, kDnf };
enum class PriorUpdate { kGradient, kReestimate };

struct TrainConfig {
  TrainMode mode = TrainMode::kDnf;
  Index n_blocks = 10;
  Index hidden = 0;  // 0 = conditioner hidden widths equal to dim
  int epochs = 20;
  Index batch_size = 300;
  double lr = 0.003;
  std::uint64_t seed = 0;
  PriorUpdate prior_update = PriorUpdate::kGradient;
  int trace_every = 0;  // 0 = record nll only, skip diagnostic probes
  Index probe_max_classes = 50;
  Index probe_max_samples = 100;  // per probe class
  double early_stop_delta = 1e-4;
  int patience = 3;
};

/// Mean per-sample negative log likelihood of z under the class prior (mean
/// mu_y, identity covariance), minus the mean log-determinant:
///   nll = -(1/N) sum_i [ log N(z_i; mu_{y_i}, I) + logdet_i ].
/// d_z, d_logdet, d_means receive the exact gradients for flow_backward.
double dnf_loss(const Mat& z, const Vec& logdet,
                const std::vector<std::int64_t>& labels,
                const ClassPriors& means, Mat& d_z, Vec& d_logdet,
                ClassPriors& d_means);
double dnf_loss_value(const Mat& z, const Vec& logdet,
                      const std::vector<std::int64_t>& labels,
                      const ClassPriors& means);

/// Same objective with a single zero-mean prior (the labels are unused).
double nf_loss(const Mat& z, const Vec& logdet, Mat& d_z, Vec& d_logdet);
double nf_loss_value(const Mat& z, const Vec& logdet);

/// One diagnostics row; written as CSV with a fixed column order by
/// write_trace.  Epoch 0 is the untrained flow.
struct TraceRow {
  int epoch = 0;
  double nll = 0;
  double avg_kurtosis = 0;
  double avg_skewness = 0;
  double pc1_dir_var = 0;
  double pc2_dir_var = 0;
  double avg_pc_dir_var = 0;
  double pc_shape_var_avg = 0;
  double between_var = 0;
  double within_var = 0;
  double bw_ratio = 0;
  double ce_inner = 0;
  double ce_cosine = 0;
  double train_eer_cosine = 0;
};

struct TrainResult {
  FlowStack flow;
  ClassPriors priors;  // empty in vanilla mode
  std::vector<TraceRow> trace;
  int epochs_run = 0;
  double final_nll = 0;
};

/// Minibatch Adam over the stacked flow (and, in dnf mode, the class means;
/// with PriorUpdate::kReestimate the means are instead reset to the per-class
/// latent means after each epoch).  Per-epoch shuffling, the probe subset and
/// all arithmetic orderings are fixed by cfg.seed, so a rerun is bit
/// identical.  A non-finite epoch loss restores the last finite state and
/// stops with a warning.
TrainResult train(const VectorSet& data, const TrainConfig& cfg);

/// Push a whole set through the normalizing direction.
VectorSet normalize_set(const FlowStack& stack, const VectorSet& in);

void write_trace(const std::string& path, const std::vector<TraceRow>& trace);

}  // namespace flownorm

#endif  // FLOWNORM_DNF_HPP_
