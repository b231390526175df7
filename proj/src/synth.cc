// src/synth.cc

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

#include "flownorm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "flownorm/rng.hpp"

namespace flownorm {

namespace {

/// Rotation uniform over the orthogonal group: QR of a Gaussian matrix with
/// the R diagonal forced positive (otherwise column signs bias the result).
Mat random_rotation(Index dim, Rng& rng) {
  Mat g = rng.normal_mat(dim, dim);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  Mat r = qr.matrixQR();
  for (Index j = 0; j < dim; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace

VectorSet synth_generate(const SynthConfig& cfg) {
  if (cfg.classes < 1 || cfg.samples_per_class < 1 || cfg.dim < 1)
    throw ArgError("synth_generate: counts and dim must be >= 1");
  if (cfg.cov_scale_lo > cfg.cov_scale_hi || cfg.cov_scale_lo <= 0.0)
    throw ArgError("synth_generate: need 0 < cov_scale_lo <= cov_scale_hi");
  if (cfg.skew_strength < 0.0 || cfg.tail_strength < 0.0)
    throw ArgError("synth_generate: warp strengths must be >= 0");
  if (cfg.mean_spread < 0.0)
    throw ArgError("synth_generate: mean_spread must be >= 0");

  Rng rng(cfg.seed);
  VectorSet set;
  set.x = Mat(cfg.classes * cfg.samples_per_class, cfg.dim);

  // The draw order below is fixed; in particular the warp coefficients are
  // always drawn (then scaled by the strengths), so runs that differ only in
  // skew_strength/tail_strength share every other draw and stay pairable.
  Index row = 0;
  for (Index c = 0; c < cfg.classes; ++c) {
    Vec mu = cfg.mean_spread * rng.normal_vec(cfg.dim);
    Mat rot = random_rotation(cfg.dim, rng);
    Vec scales(cfg.dim);
    for (Index j = 0; j < cfg.dim; ++j)
      scales[j] = rng.uniform(cfg.cov_scale_lo, cfg.cov_scale_hi);
    Vec a(cfg.dim), b(cfg.dim);
    for (Index j = 0; j < cfg.dim; ++j) {
      double mag = rng.uniform();
      double sign = (rng.uniform() < 0.5) ? 1.0 : -1.0;
      a[j] = sign * cfg.skew_strength * mag;
      b[j] = cfg.tail_strength * rng.uniform();
    }
    for (Index i = 0; i < cfg.samples_per_class; ++i) {
      Vec u = rng.normal_vec(cfg.dim);
      Vec w(cfg.dim);
      for (Index j = 0; j < cfg.dim; ++j)
        w[j] = u[j] + a[j] * u[j] * u[j] + b[j] * u[j] * u[j] * u[j];
      set.x.row(row) = (mu + rot * scales.cwiseProduct(w).eval()).transpose();
      set.ids.push_back("c" + std::to_string(c) + "_u" + std::to_string(i));
      set.labels.push_back(c);
      ++row;
    }
  }
  return set;
}

namespace {

VectorSet take_rows(const VectorSet& set, const std::vector<Index>& rows) {
  VectorSet out;
  out.x = Mat(static_cast<Index>(rows.size()), set.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Index>(i)) = set.x.row(rows[i]);
    out.ids.push_back(set.ids[static_cast<std::size_t>(rows[i])]);
    out.labels.push_back(set.labels[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

}  // namespace

std::pair<VectorSet, VectorSet> split_open_set(
    const VectorSet& set, double train_fraction_of_classes,
    std::uint64_t seed) {
  auto groups = group_by_label(set);
  const auto n_classes = static_cast<Index>(groups.size());
  if (n_classes < 4)
    throw DataError("split_open_set: need at least 4 classes, have " +
                    std::to_string(n_classes));

  auto n_train = static_cast<Index>(
      std::llround(train_fraction_of_classes * static_cast<double>(n_classes)));
  if (n_train < 1 || n_train >= n_classes)
    throw DataError("split_open_set: fraction leaves one side empty");

  std::vector<std::int64_t> labels;
  for (const auto& [label, rows] : groups) labels.push_back(label);
  Rng rng(seed);
  rng.shuffle(labels);
  std::set<std::int64_t> train_labels(labels.begin(),
                                      labels.begin() + n_train);

  std::vector<Index> train_rows, eval_rows;  // original record order
  for (Index i = 0; i < set.size(); ++i) {
    if (train_labels.count(set.labels[static_cast<std::size_t>(i)]))
      train_rows.push_back(i);
    else
      eval_rows.push_back(i);
  }
  return {take_rows(set, train_rows), take_rows(set, eval_rows)};
}

TrialList make_trials(const VectorSet& set, Index max_imposter_per_target,
                      std::uint64_t seed) {
  auto groups = group_by_label(set);
  if (groups.size() < 2)
    throw DataError("make_trials: need at least 2 classes");

  TrialList trials;
  Index singletons = 0;
  for (const auto& [label, rows] : groups) {
    if (rows.size() < 2) {
      ++singletons;
      continue;
    }
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = i + 1; j < rows.size(); ++j)
        trials.push_back({set.ids[static_cast<std::size_t>(rows[i])],
                          set.ids[static_cast<std::size_t>(rows[j])], true});
  }
  if (singletons > 0)
    warn("make_trials: " + std::to_string(singletons) +
         " class(es) with a single sample contribute no target trials");

  // Each cross-class unordered pair is owned by its lower-index record, so
  // exhaustive mode emits every pair exactly once.
  Rng rng(seed);
  for (Index i = 0; i < set.size(); ++i) {
    std::vector<Index> cands;
    for (Index j = i + 1; j < set.size(); ++j)
      if (set.labels[static_cast<std::size_t>(j)] !=
          set.labels[static_cast<std::size_t>(i)])
        cands.push_back(j);
    auto cap = static_cast<std::size_t>(max_imposter_per_target);
    if (max_imposter_per_target > 0 && cands.size() > cap) {
      // Partial Fisher-Yates: the first `cap` entries are a uniform
      // without-replacement sample.
      for (std::size_t k = 0; k < cap; ++k) {
        std::size_t pick =
            k + static_cast<std::size_t>(rng.uniform_int(cands.size() - k));
        std::swap(cands[k], cands[pick]);
      }
      cands.resize(cap);
    }
    for (Index j : cands)
      trials.push_back({set.ids[static_cast<std::size_t>(i)],
                        set.ids[static_cast<std::size_t>(j)], false});
  }
  return trials;
}

}  // namespace flownorm
