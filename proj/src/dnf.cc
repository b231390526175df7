// src/dnf.cc

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

#include "flownorm/dnf.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "flownorm/adam.hpp"
#include "flownorm/io_util.hpp"
#include "flownorm/metrics.hpp"
#include "flownorm/rng.hpp"

namespace flownorm {

namespace {

constexpr double kLn2Pi = 1.8378770664093454836;  // ln(2*pi)

/// Shared nll core; a null means map stands for the single zero-mean prior.
/// The gradient outputs may be null for value-only evaluation; summation
/// order is fixed (sample order), so value and gradient paths agree bitwise.
double loss_core(const Mat& z, const Vec& logdet,
                 const std::vector<std::int64_t>* labels,
                 const ClassPriors* means, Mat* d_z, Vec* d_logdet,
                 ClassPriors* d_means) {
  const Index n = z.rows();
  const Index d = z.cols();
  if (n == 0) throw ArgError("loss: empty batch");
  if (logdet.size() != n) throw ArgError("loss: logdet size mismatch");
  if (means && (!labels || static_cast<Index>(labels->size()) != n))
    throw ArgError("loss: labels size mismatch");

  const double inv_n = 1.0 / static_cast<double>(n);
  const Vec zero = Vec::Zero(d);
  if (d_z) *d_z = Mat(n, d);
  if (d_logdet) *d_logdet = Vec::Constant(n, -inv_n);
  if (d_means) {
    d_means->clear();
    if (means)
      for (const auto& [label, mean] : *means) (*d_means)[label] = Vec::Zero(d);
  }

  double sum = 0.0;  // sum of per-sample log-likelihood + logdet
  for (Index i = 0; i < n; ++i) {
    const Vec* mu = &zero;
    std::int64_t label = 0;
    if (means) {
      label = (*labels)[static_cast<std::size_t>(i)];
      auto it = means->find(label);
      if (it == means->end())
        throw DataError("loss: no prior mean for label " +
                        std::to_string(label));
      if (it->second.size() != d)
        throw DataError("loss: prior mean dim mismatch for label " +
                        std::to_string(label));
      mu = &it->second;
    }
    Vec diff = z.row(i).transpose() - *mu;
    sum += -0.5 * static_cast<double>(d) * kLn2Pi -
           0.5 * diff.squaredNorm() + logdet[i];
    if (d_z) d_z->row(i) = (diff * inv_n).transpose();
    if (d_means && means) (*d_means)[label] -= diff * inv_n;
  }
  return -sum * inv_n;
}

}  // namespace

double dnf_loss(const Mat& z, const Vec& logdet,
                const std::vector<std::int64_t>& labels,
                const ClassPriors& means, Mat& d_z, Vec& d_logdet,
                ClassPriors& d_means) {
  return loss_core(z, logdet, &labels, &means, &d_z, &d_logdet, &d_means);
}

double dnf_loss_value(const Mat& z, const Vec& logdet,
                      const std::vector<std::int64_t>& labels,
                      const ClassPriors& means) {
  return loss_core(z, logdet, &labels, &means, nullptr, nullptr, nullptr);
}

double nf_loss(const Mat& z, const Vec& logdet, Mat& d_z, Vec& d_logdet) {
  return loss_core(z, logdet, nullptr, nullptr, &d_z, &d_logdet, nullptr);
}

double nf_loss_value(const Mat& z, const Vec& logdet) {
  return loss_core(z, logdet, nullptr, nullptr, nullptr, nullptr, nullptr);
}

VectorSet normalize_set(const FlowStack& stack, const VectorSet& in) {
  if (in.dim() != stack.dim)
    throw DataError("normalize_set: vector dim does not match flow dim");
  VectorSet out;
  out.ids = in.ids;
  out.labels = in.labels;
  Vec logdet;
  normalize_batch(stack, in.x, out.x, logdet);
  return out;
}

namespace {

ClassPriors class_means(const VectorSet& data) {
  ClassPriors means;
  for (const auto& [label, rows] : group_by_label(data)) {
    Vec m = Vec::Zero(data.dim());
    for (Index r : rows) m += data.x.row(r).transpose();
    means[label] = m / static_cast<double>(rows.size());
  }
  return means;
}

struct FlatParams {
  Vec values;          // flow parameters, then prior means in label order
  Index flow_count = 0;

  void pull(const FlowStack& flow, const ClassPriors& priors) {
    Index pos = flow_count;
    values.head(flow_count) = flow.get_params();
    for (const auto& [label, mean] : priors) {
      values.segment(pos, mean.size()) = mean;
      pos += mean.size();
    }
  }

  void push(FlowStack& flow, ClassPriors& priors) const {
    flow.set_params(values.head(flow_count));
    Index pos = flow_count;
    for (auto& [label, mean] : priors) {
      mean = values.segment(pos, mean.size());
      pos += mean.size();
    }
  }
};

VectorSet probe_subset(const VectorSet& data, Index max_classes,
                       Index max_samples) {
  std::vector<Index> rows;
  Index used_classes = 0;
  for (const auto& [label, members] : group_by_label(data)) {
    if (used_classes == max_classes) break;
    ++used_classes;
    Index take = std::min<Index>(static_cast<Index>(members.size()),
                                 max_samples);
    for (Index i = 0; i < take; ++i) rows.push_back(members[static_cast<std::size_t>(i)]);
  }
  VectorSet probe;
  probe.x = Mat(static_cast<Index>(rows.size()), data.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    probe.x.row(static_cast<Index>(i)) = data.x.row(rows[i]);
    probe.ids.push_back(data.ids[static_cast<std::size_t>(rows[i])]);
    probe.labels.push_back(data.labels[static_cast<std::size_t>(rows[i])]);
  }
  return probe;
}

}  // namespace

TrainResult train(const VectorSet& data, const TrainConfig& cfg) {
  validate(data);
  const Index n = data.size();
  const Index d = data.dim();
  if (n < 1) throw DataError("train: empty dataset");
  if (d < 2) throw DataError("train: dim must be >= 2");
  if (cfg.batch_size < 1) throw ArgError("train: batch_size must be >= 1");
  if (cfg.lr <= 0.0) throw ArgError("train: lr must be positive");
  if (cfg.epochs < 0) throw ArgError("train: epochs must be >= 0");
  const bool dnf = (cfg.mode == TrainMode::kDnf);
  if (dnf && group_by_label(data).size() < 2)
    throw DataError("train: dnf mode needs at least 2 classes");

  Rng rng(cfg.seed);
  TrainResult res;
  res.flow = make_flow(d, cfg.n_blocks, cfg.hidden, rng);
  // The initial flow is the identity, so per-class input means are exactly
  // the per-class latent means at epoch 0.
  if (dnf) res.priors = class_means(data);

  const Index flow_count = res.flow.param_count();
  const Index prior_count = dnf ? static_cast<Index>(res.priors.size()) * d : 0;
  FlatParams params;
  params.flow_count = flow_count;
  params.values = Vec(flow_count + prior_count);
  params.pull(res.flow, res.priors);
  AdamState adam = make_adam(params.values.size(), cfg.lr);

  const VectorSet probe =
      probe_subset(data, cfg.probe_max_classes, cfg.probe_max_samples);

  auto full_nll = [&]() {
    Mat z;
    Vec logdet;
    normalize_batch(res.flow, data.x, z, logdet);
    return dnf
        ? dnf_loss_value(z, logdet, data.labels, res.priors)
        : nf_loss_value(z, logdet);
  };

  bool warned_probe = false;
  auto trace_row = [&](int epoch, double nll, bool diagnostics) {
    TraceRow row;
    row.epoch = epoch;
    row.nll = nll;
    if (diagnostics) {
      VectorSet pz = normalize_set(res.flow, probe);
      try {
        RegulationReport reg =
            regulation_report(pz, std::min<Index>(10, d), 25);
        row.avg_kurtosis = reg.avg_kurtosis;
        row.avg_skewness = reg.avg_skewness;
        row.pc1_dir_var = reg.pc_dir_var.empty() ? 0.0 : reg.pc_dir_var[0];
        row.pc2_dir_var =
            reg.pc_dir_var.size() > 1 ? reg.pc_dir_var[1] : 0.0;
        row.avg_pc_dir_var = reg.avg_pc_dir_var;
        row.pc_shape_var_avg = reg.pc_shape_var_avg;
      } catch (const DataError& e) {
        if (!warned_probe)
          warn(std::string("train: probe regulation skipped (") + e.what() +
               ")");
        warned_probe = true;
      }
      try {
        DiscriminationReport disc =
            discrimination_report(pz, dnf ? res.priors : ClassPriors{});
        row.between_var = disc.between_var;
        row.within_var = disc.within_var;
        row.bw_ratio = disc.bw_ratio;
        row.ce_inner = disc.ce_inner;
        row.ce_cosine = disc.ce_cosine;
        row.train_eer_cosine = disc.train_eer_cosine;
      } catch (const DataError& e) {
        if (!warned_probe)
          warn(std::string("train: probe discrimination skipped (") + e.what() +
               ")");
        warned_probe = true;
      }
    }
    res.trace.push_back(row);
  };

  double prev_nll = full_nll();
  trace_row(0, prev_nll, cfg.trace_every > 0);

  Vec last_good = params.values;
  double last_good_nll = prev_nll;
  int stall = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    bool failed = false;
    try {
      std::vector<Index> order = rng.permutation(n);
      for (Index start = 0; start < n; start += cfg.batch_size) {
        Index count = std::min<Index>(cfg.batch_size, n - start);
        Mat xb(count, d);
        std::vector<std::int64_t> lb(static_cast<std::size_t>(count));
        for (Index i = 0; i < count; ++i) {
          Index src = order[static_cast<std::size_t>(start + i)];
          xb.row(i) = data.x.row(src);
          lb[static_cast<std::size_t>(i)] =
              data.labels[static_cast<std::size_t>(src)];
        }
        Mat z;
        Vec logdet;
        FlowActs acts;
        normalize_batch(res.flow, xb, z, logdet, &acts);

        Mat d_z;
        Vec d_logdet;
        ClassPriors d_means;
        if (dnf)
          dnf_loss(z, logdet, lb, res.priors, d_z, d_logdet, d_means);
        else
          nf_loss(z, logdet, d_z, d_logdet);

        Vec grads = Vec::Zero(params.values.size());
        Vec flow_grad = Vec::Zero(flow_count);
        flow_backward(res.flow, acts, d_z, d_logdet, flow_grad);
        grads.head(flow_count) = flow_grad;
        if (dnf && cfg.prior_update == PriorUpdate::kGradient) {
          Index pos = flow_count;
          for (const auto& [label, g] : d_means) {
            grads.segment(pos, d) = g;
            pos += d;
          }
        }
        adam_step(params.values, grads, adam);
        params.push(res.flow, res.priors);
      }
      if (dnf && cfg.prior_update == PriorUpdate::kReestimate) {
        VectorSet z_all = normalize_set(res.flow, data);
        res.priors = class_means(z_all);
        params.pull(res.flow, res.priors);
      }
      double nll = full_nll();
      if (!std::isfinite(nll)) throw NumericError("train: non-finite nll");
      res.epochs_run = epoch;
      trace_row(epoch, nll,
                cfg.trace_every > 0 && (epoch % cfg.trace_every == 0 ||
                                        epoch == cfg.epochs));
      last_good = params.values;
      last_good_nll = nll;
      if (prev_nll - nll < cfg.early_stop_delta)
        ++stall;
      else
        stall = 0;
      prev_nll = nll;
      if (stall >= cfg.patience) break;
    } catch (const NumericError& e) {
      warn(std::string("train: epoch ") + std::to_string(epoch) +
           " failed (" + e.what() + "); restoring last finite state");
      params.values = last_good;
      params.push(res.flow, res.priors);
      prev_nll = last_good_nll;
      failed = true;
    }
    if (failed) break;
  }
  res.final_nll = prev_nll;
  return res;
}

void write_trace(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ostringstream ss;
  ss << "epoch,nll,avg_kurtosis,avg_skewness,pc1_dir_var,pc2_dir_var,"
        "avg_pc_dir_var,pc_shape_var_avg,between_var,within_var,bw_ratio,"
        "ce_inner,ce_cosine,train_eer_cosine\n";
  for (const auto& r : trace) {
    ss << r.epoch << ',' << fmt_g17(r.nll) << ',' << fmt_g17(r.avg_kurtosis)
       << ',' << fmt_g17(r.avg_skewness) << ',' << fmt_g17(r.pc1_dir_var)
       << ',' << fmt_g17(r.pc2_dir_var) << ',' << fmt_g17(r.avg_pc_dir_var)
       << ',' << fmt_g17(r.pc_shape_var_avg) << ',' << fmt_g17(r.between_var)
       << ',' << fmt_g17(r.within_var) << ',' << fmt_g17(r.bw_ratio) << ','
       << fmt_g17(r.ce_inner) << ',' << fmt_g17(r.ce_cosine) << ','
       << fmt_g17(r.train_eer_cosine) << "\n";
  }
  write_file_atomic(path, ss.str());
}

}  // namespace flownorm
