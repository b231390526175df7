// src/metrics.cc

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

#include "flownorm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "flownorm/sym_eig.hpp"

namespace flownorm {

namespace {

Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

double pop_variance(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return var / static_cast<double>(v.size());
}

/// Rows of data, L2-normalized; a zero row is a DataError.
Mat unit_rows(const VectorSet& data, const char* what) {
  Mat xn = data.x;
  for (Index i = 0; i < xn.rows(); ++i) {
    double norm = xn.row(i).norm();
    if (norm == 0.0)
      throw DataError(std::string(what) + ": zero vector \"" +
                      data.ids[static_cast<std::size_t>(i)] + "\"");
    xn.row(i) /= norm;
  }
  return xn;
}

/// Cosine EER over every (i, j) pair, i < j: same label = target trial,
/// different label = imposter trial.
double exhaustive_cosine_eer(const VectorSet& data) {
  const Index n = data.size();
  Mat xn = unit_rows(data, "cosine eer");
  std::size_t total = static_cast<std::size_t>(n) * (n - 1) / 2;
  std::size_t n_targets = 0;
  for (const auto& [label, rows] : group_by_label(data))
    n_targets += rows.size() * (rows.size() - 1) / 2;
  std::vector<double> targets, imposters;
  targets.reserve(n_targets);
  imposters.reserve(total - n_targets);
  for (Index i = 0; i + 1 < n; ++i) {
    Vec scores = xn.bottomRows(n - i - 1) * xn.row(i).transpose();
    for (Index j = i + 1; j < n; ++j) {
      double s = scores[j - i - 1];
      if (data.labels[static_cast<std::size_t>(j)] ==
          data.labels[static_cast<std::size_t>(i)])
        targets.push_back(s);
      else
        imposters.push_back(s);
    }
  }
  return eer(targets, imposters).eer;
}

}  // namespace

double cosine_score(const Vec& a, const Vec& b) {
  if (a.size() != b.size())
    throw DataError("cosine_score: dimension mismatch");
  double na = a.norm();
  double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw DataError("cosine_score: zero vector");
  return a.dot(b) / (na * nb);
}

EerResult eer(const std::vector<double>& target_scores,
              const std::vector<double>& imposter_scores) {
  if (target_scores.empty() || imposter_scores.empty())
    throw DataError("eer: empty target or imposter score list");
  for (double s : target_scores)
    if (!std::isfinite(s)) throw DataError("eer: non-finite target score");
  for (double s : imposter_scores)
    if (!std::isfinite(s)) throw DataError("eer: non-finite imposter score");

  std::vector<double> thr;
  thr.reserve(target_scores.size() + imposter_scores.size() + 2);
  thr.insert(thr.end(), target_scores.begin(), target_scores.end());
  thr.insert(thr.end(), imposter_scores.begin(), imposter_scores.end());
  std::sort(thr.begin(), thr.end());
  thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
  // Sentinels: one threshold below every score (accept all), one above
  // (reject all), so the FRR - FAR curve always brackets zero.
  thr.insert(thr.begin(), thr.front() - 1.0);
  thr.push_back(thr.back() + 1.0);

  auto n_t = static_cast<double>(target_scores.size());
  auto n_i = static_cast<double>(imposter_scores.size());
  std::vector<double> sorted_t = target_scores;
  std::vector<double> sorted_i = imposter_scores;
  std::sort(sorted_t.begin(), sorted_t.end());
  std::sort(sorted_i.begin(), sorted_i.end());
  auto frr_at = [&](double t) {  // targets rejected: score < t
    return static_cast<double>(std::lower_bound(sorted_t.begin(),
                                                sorted_t.end(), t) -
                               sorted_t.begin()) / n_t;
  };
  auto far_at = [&](double t) {  // imposters accepted: score >= t
    return static_cast<double>(sorted_i.end() -
                               std::lower_bound(sorted_i.begin(),
                                                sorted_i.end(), t)) / n_i;
  };

  double prev_g = frr_at(thr[0]) - far_at(thr[0]);  // -1 at the low sentinel
  for (std::size_t k = 1; k < thr.size(); ++k) {
    double frr = frr_at(thr[k]);
    double far = far_at(thr[k]);
    double g = frr - far;
    if (g >= 0.0) {
      double far_prev = far_at(thr[k - 1]);
      double t = -prev_g / (g - prev_g);
      EerResult r;
      r.eer = far_prev + t * (far - far_prev);
      r.threshold = thr[k - 1] + t * (thr[k] - thr[k - 1]);
      return r;
    }
    prev_g = g;
  }
  throw NumericError("eer: no crossing found");  // unreachable
}

RegulationReport regulation_report(const VectorSet& data, Index k,
                                   Index min_class_samples) {
  if (k < 1) throw ArgError("regulation_report: k must be >= 1");
  if (min_class_samples < 1)
    throw ArgError("regulation_report: min_class_samples must be >= 1");
  validate(data);
  const Index d = data.dim();
  const Index k_eff = std::min(k, d);

  auto groups = group_by_label(data);
  std::vector<std::pair<std::int64_t, std::vector<Index>>> used;
  for (const auto& [label, rows] : groups) {
    if (static_cast<Index>(rows.size()) >= min_class_samples)
      used.emplace_back(label, rows);
  }
  RegulationReport rep;
  rep.n_classes_used = static_cast<Index>(used.size());
  rep.n_classes_skipped = static_cast<Index>(groups.size() - used.size());
  if (used.size() < 2)
    throw DataError("regulation_report: need at least 2 classes with " +
                    std::to_string(min_class_samples) + " samples, have " +
                    std::to_string(used.size()));

  double sum_kurt = 0, sum_kurt_abs = 0, sum_skew = 0, sum_skew_abs = 0;
  std::vector<Mat> dirs;     // per class: d x k_eff principal directions
  std::vector<Vec> shapes;   // per class: k_eff leading eigenvalues
  dirs.reserve(used.size());
  shapes.reserve(used.size());
  for (const auto& [label, rows] : used) {
    Mat xc(static_cast<Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i)
      xc.row(static_cast<Index>(i)) = data.x.row(rows[i]);
    Vec cmean = xc.colwise().mean().transpose();
    xc.rowwise() -= cmean.transpose();
    Mat cov = symmetrized(xc.transpose() * xc /
                          static_cast<double>(rows.size()));
    SymEig e = sym_eig(cov);
    dirs.push_back(e.vectors.leftCols(k_eff));
    shapes.push_back(e.values.head(k_eff));

    Mat proj = xc * e.vectors.leftCols(k_eff);
    for (Index m = 0; m < k_eff; ++m) {
      // Moments about the projection's own mean (zero up to roundoff).
      Eigen::ArrayXd p = proj.col(m).array() - proj.col(m).mean();
      double m2 = p.square().mean();
      double m3 = p.cube().mean();
      double m4 = p.square().square().mean();
      double kurt = 0.0, skew = 0.0;
      if (m2 > 0.0) {
        kurt = m4 / (m2 * m2) - 3.0;
        skew = m3 / std::pow(m2, 1.5);
      }
      sum_kurt += kurt;
      sum_kurt_abs += std::abs(kurt);
      sum_skew += skew;
      sum_skew_abs += std::abs(skew);
    }
  }
  auto denom = static_cast<double>(used.size()) * static_cast<double>(k_eff);
  rep.avg_kurtosis = sum_kurt / denom;
  rep.avg_kurtosis_abs = sum_kurt_abs / denom;
  rep.avg_skewness = sum_skew_abs / denom;
  rep.avg_skewness_signed = sum_skew / denom;

  rep.pc_dir_var.resize(static_cast<std::size_t>(k_eff));
  rep.pc_shape_var.resize(static_cast<std::size_t>(k_eff));
  for (Index m = 0; m < k_eff; ++m) {
    // Eigenvector sign is arbitrary, so fold each class's direction onto a
    // provisional reference before averaging, then measure the spread of
    // cosines against that mean direction.
    Vec ref = dirs[0].col(m);
    Vec mean_dir = Vec::Zero(d);
    for (const Mat& v : dirs)
      mean_dir += (v.col(m).dot(ref) < 0.0) ? -v.col(m) : Vec(v.col(m));
    mean_dir /= static_cast<double>(dirs.size());
    if (mean_dir.norm() == 0.0) mean_dir = ref;

    std::vector<double> cosines, lams;
    cosines.reserve(dirs.size());
    lams.reserve(dirs.size());
    for (std::size_t c = 0; c < dirs.size(); ++c) {
      double cosv = std::abs(dirs[c].col(m).dot(mean_dir)) / mean_dir.norm();
      cosines.push_back(cosv);
      lams.push_back(shapes[c][m]);
    }
    rep.pc_dir_var[static_cast<std::size_t>(m)] = pop_variance(cosines);
    rep.pc_shape_var[static_cast<std::size_t>(m)] = pop_variance(lams);
  }
  double dsum = 0, ssum = 0;
  for (Index m = 0; m < k_eff; ++m) {
    dsum += rep.pc_dir_var[static_cast<std::size_t>(m)];
    ssum += rep.pc_shape_var[static_cast<std::size_t>(m)];
  }
  rep.avg_pc_dir_var = dsum / static_cast<double>(k_eff);
  rep.pc_shape_var_avg = ssum / static_cast<double>(k_eff);

  // Scatter of the qualifying subset only, so skipped tiny classes cannot
  // perturb the variance ratio.
  VectorSet subset;
  if (used.size() == groups.size()) {
    subset = data;
  } else {
    Index n_rows = 0;
    for (const auto& [label, rows] : used)
      n_rows += static_cast<Index>(rows.size());
    subset.x.resize(n_rows, d);
    Index r = 0;
    for (const auto& [label, rows] : used) {
      for (Index row : rows) {
        subset.ids.push_back(data.ids[static_cast<std::size_t>(row)]);
        subset.labels.push_back(label);
        subset.x.row(r++) = data.x.row(row);
      }
    }
  }
  ScatterStats s = compute_scatter(subset);
  rep.between_var = s.between.diagonal().mean();
  rep.within_var = s.within.diagonal().mean();
  rep.bw_ratio = rep.within_var > 0.0 ? rep.between_var / rep.within_var : 0.0;
  return rep;
}

DiscriminationReport discrimination_report(const VectorSet& data,
                                           const ClassPriors& centers) {
  validate(data);
  auto groups = group_by_label(data);
  if (groups.size() < 2)
    throw DataError("discrimination_report: need at least 2 classes");
  const Index d = data.dim();

  // Column order = ascending label.  Only labels present in data take part
  // in the softmax, so reports with trained centers and with empirical means
  // stay comparable.
  std::map<std::int64_t, Index> col;
  Mat cmat(static_cast<Index>(groups.size()), d);
  Index next = 0;
  for (const auto& [label, rows] : groups) {
    Vec center;
    if (centers.empty()) {
      Vec sum = Vec::Zero(d);
      for (Index row : rows) sum += data.x.row(row).transpose();
      center = sum / static_cast<double>(rows.size());
    } else {
      auto it = centers.find(label);
      if (it == centers.end())
        throw DataError("discrimination_report: no center for label " +
                        std::to_string(label));
      if (it->second.size() != d)
        throw DataError("discrimination_report: center dim mismatch for "
                        "label " + std::to_string(label));
      center = it->second;
    }
    cmat.row(next) = center.transpose();
    col[label] = next++;
  }
  Mat cunit = cmat;
  for (Index c = 0; c < cunit.rows(); ++c) {
    double norm = cunit.row(c).norm();
    if (norm == 0.0)
      throw DataError("discrimination_report: zero class center");
    cunit.row(c) /= norm;
  }

  auto ce_of = [&](const Mat& logits) {
    double ce = 0.0;
    for (Index i = 0; i < data.size(); ++i) {
      double mx = logits.row(i).maxCoeff();
      double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
      ce -= logits(i, col.at(data.labels[static_cast<std::size_t>(i)])) - lse;
    }
    return ce / static_cast<double>(data.size());
  };

  DiscriminationReport rep;
  rep.ce_inner = ce_of(data.x * cmat.transpose());
  rep.ce_cosine = ce_of(unit_rows(data, "discrimination_report") *
                        cunit.transpose());

  ScatterStats s = compute_scatter(data);
  rep.between_var = s.between.diagonal().mean();
  rep.within_var = s.within.diagonal().mean();
  rep.bw_ratio = rep.within_var > 0.0 ? rep.between_var / rep.within_var : 0.0;
  rep.train_eer_cosine = exhaustive_cosine_eer(data);
  return rep;
}

std::vector<SubgroupReport> subgroup_report(const VectorSet& data,
                                            const LinearTransform& transform,
                                            Index group_size, Index k,
                                            Index min_class_samples) {
  if (group_size < 1) throw ArgError("subgroup_report: group_size must be >= 1");
  if (transform.kind == "lengthnorm")
    throw ArgError("subgroup_report: transform must be a projection");
  VectorSet y = apply_set(transform, data);
  const Index od = y.dim();
  if (od % group_size != 0)
    throw ArgError("subgroup_report: group_size " + std::to_string(group_size) +
                   " does not divide output dim " + std::to_string(od));
  const Index n_groups = od / group_size;
  if (n_groups < 2)
    throw ArgError("subgroup_report: need at least 2 groups, have " +
                   std::to_string(n_groups));

  std::vector<SubgroupReport> out;
  out.reserve(static_cast<std::size_t>(n_groups));
  for (Index g = 0; g < n_groups; ++g) {
    VectorSet sub;
    sub.ids = y.ids;
    sub.labels = y.labels;
    sub.x = y.x.middleCols(g * group_size, group_size);
    SubgroupReport r;
    r.first_dim = g * group_size;
    r.group_size = group_size;
    r.regulation = regulation_report(sub, k, min_class_samples);
    r.cosine_eer = exhaustive_cosine_eer(sub);
    r.between_var = r.regulation.between_var;
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

void row(std::ostream& os, const std::string& name, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%-24s %14.6g\n", name.c_str(), v);
  os << buf;
}

void row(std::ostream& os, const std::string& name, Index v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%-24s %14lld\n", name.c_str(),
                static_cast<long long>(v));
  os << buf;
}

}  // namespace

void print_regulation(std::ostream& os, const RegulationReport& r) {
  row(os, "classes_used", r.n_classes_used);
  row(os, "classes_skipped", r.n_classes_skipped);
  row(os, "avg_kurtosis", r.avg_kurtosis);
  row(os, "avg_kurtosis_abs", r.avg_kurtosis_abs);
  row(os, "avg_skewness", r.avg_skewness);
  row(os, "avg_skewness_signed", r.avg_skewness_signed);
  for (std::size_t m = 0; m < r.pc_dir_var.size(); ++m)
    row(os, "pc" + std::to_string(m + 1) + "_dir_var", r.pc_dir_var[m]);
  row(os, "avg_pc_dir_var", r.avg_pc_dir_var);
  for (std::size_t m = 0; m < r.pc_shape_var.size(); ++m)
    row(os, "pc" + std::to_string(m + 1) + "_shape_var", r.pc_shape_var[m]);
  row(os, "pc_shape_var_avg", r.pc_shape_var_avg);
  row(os, "between_var", r.between_var);
  row(os, "within_var", r.within_var);
  row(os, "bw_ratio", r.bw_ratio);
}

void print_discrimination(std::ostream& os, const DiscriminationReport& r) {
  row(os, "ce_inner", r.ce_inner);
  row(os, "ce_cosine", r.ce_cosine);
  row(os, "between_var", r.between_var);
  row(os, "within_var", r.within_var);
  row(os, "bw_ratio", r.bw_ratio);
  row(os, "train_eer_cosine", r.train_eer_cosine);
}

void print_subgroups(std::ostream& os, const std::vector<SubgroupReport>& rs) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-6s %-12s %12s %12s %12s %12s\n", "group",
                "dims", "cosine_eer", "between_var", "avg_kurt", "avg_skew");
  os << buf;
  for (std::size_t g = 0; g < rs.size(); ++g) {
    const SubgroupReport& r = rs[g];
    std::string dims = "[" + std::to_string(r.first_dim) + "," +
                       std::to_string(r.first_dim + r.group_size) + ")";
    std::snprintf(buf, sizeof buf, "%-6zu %-12s %12.6g %12.6g %12.6g %12.6g\n",
                  g, dims.c_str(), r.cosine_eer, r.between_var,
                  r.regulation.avg_kurtosis, r.regulation.avg_skewness);
    os << buf;
  }
}

}  // namespace flownorm
