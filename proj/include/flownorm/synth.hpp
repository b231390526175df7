// flownorm/synth.hpp

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

#ifndef FLOWNORM_SYNTH_HPP_
#define FLOWNORM_SYNTH_HPP_

#include <cstdint>
#include <utility>

#include "flownorm/dataset.hpp"
#include "flownorm/types.hpp"

namespace flownorm {

/// Generator settings for synthetic irregular class-conditional data.
///
/// Per class c: mean mu_c ~ N(0, mean_spread^2 I); a covariance factor
/// L_c = R_c diag(s) with a random rotation R_c and per-axis scales
/// s_j ~ U(cov_scale_lo, cov_scale_hi); samples start from u ~ N(0, I),
/// each axis is warped as u_j + a_j u_j^2 + b_j u_j^3 with
/// a_j ~ U(0, skew_strength) * random sign and b_j ~ U(0, tail_strength),
/// and the emitted vector is mu_c + L_c * warped(u).  The quadratic term
/// controls skewness and the cubic term controls tail weight (kurtosis)
/// independently per axis.
struct SynthConfig {
  Index classes = 10;
  Index samples_per_class = 20;
  Index dim = 8;
  double mean_spread = 3.0;
  double cov_scale_lo = 1.0;
  double cov_scale_hi = 1.0;
  double skew_strength = 0.0;
  double tail_strength = 0.0;
  std::uint64_t seed = 0;
};

/// Deterministic under cfg.seed: two runs give bit-identical sets.
VectorSet synth_generate(const SynthConfig& cfg);

/// Class-disjoint split: every class lands wholly on one side.  Throws
/// DataError if either side would be empty or the input has < 4 classes.
std::pair<VectorSet, VectorSet> split_open_set(const VectorSet& set,
                                               double train_fraction_of_classes,
                                               std::uint64_t seed);

/// All same-class pairs become targets.  Imposter partners are sampled
/// without replacement among higher-index records of other classes, at most
/// max_imposter_per_target per enroll record (0 = exhaustive).  Classes with
/// a single sample contribute no target trials (warned).
TrialList make_trials(const VectorSet& set, Index max_imposter_per_target,
                      std::uint64_t seed);

}  // namespace flownorm

#endif  // FLOWNORM_SYNTH_HPP_
