// src/plda.cc

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

#include "flownorm/plda.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "flownorm/io_util.hpp"
#include "flownorm/linear.hpp"

namespace flownorm {

namespace {

constexpr char kPldaMagic[4] = {'P', 'L', 'D', '1'};
constexpr std::uint32_t kPldaVersion = 1;
constexpr double kLn2Pi = 1.8378770664093454836;

Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// Cholesky that throws instead of returning an unusable factor.
Eigen::LLT<Mat> llt_of(const Mat& m, const char* what) {
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericError(std::string(what) + ": matrix not positive definite");
  return llt;
}

double logdet_of(const Eigen::LLT<Mat>& llt) {
  Mat l = llt.matrixL();
  return 2.0 * l.diagonal().array().log().sum();
}

/// Makes m safely positive definite, adding 1e-8 * trace / dim on the
/// diagonal (with a warning) when the factorization fails or the Cholesky
/// pivots put the condition number past ~1e10.  A singular within-class
/// covariance would otherwise poison within + n*between too.
Eigen::LLT<Mat> llt_with_ridge(Mat& m, const char* what) {
  Eigen::LLT<Mat> llt(m);
  bool bad = llt.info() != Eigen::Success;
  if (!bad) {
    Vec diag = Mat(llt.matrixL()).diagonal();
    double dmin = diag.minCoeff();
    double dmax = diag.maxCoeff();
    bad = !(dmin > 0.0) || (dmax / dmin) * (dmax / dmin) > 1e10;
  }
  if (!bad) return llt;
  double ridge = 1e-8 * m.trace() / static_cast<double>(m.rows());
  if (!(ridge > 0.0)) ridge = 1e-12;
  warn(std::string(what) + ": singular covariance, adding ridge " +
       fmt_g17(ridge));
  m += ridge * Mat::Identity(m.rows(), m.cols());
  return llt_of(m, what);
}

/// Sufficient statistics of one class, centered on the global mean.
struct ClassStats {
  double n = 0;
  Vec ybar;   // class mean minus global mean
  Mat inner;  // scatter about the class's own mean (unnormalized)
};

}  // namespace

PldaModel plda_fit(const VectorSet& data, int iters,
                   std::vector<double>* ll_trace) {
  if (iters < 0) throw ArgError("plda_fit: iters must be >= 0");
  ScatterStats scatter = compute_scatter(data);  // validates, needs 2 classes
  const Index d = data.dim();
  const auto n_total = static_cast<double>(data.size());
  auto groups = group_by_label(data);
  if (n_total < 2.0 * static_cast<double>(groups.size()))
    warn("plda_fit: fewer than 2 samples per class on average; "
         "the within-class covariance estimate will be weak");

  PldaModel model;
  model.mean = scatter.mean;
  model.between = scatter.between;
  model.within = scatter.within;

  std::vector<ClassStats> stats;
  stats.reserve(groups.size());
  for (const auto& [label, rows] : groups) {
    ClassStats cs;
    cs.n = static_cast<double>(rows.size());
    Mat xc(static_cast<Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i)
      xc.row(static_cast<Index>(i)) = data.x.row(rows[i]);
    Vec cmean = xc.colwise().mean().transpose();
    cs.ybar = cmean - model.mean;
    xc.rowwise() -= cmean.transpose();
    cs.inner = symmetrized(xc.transpose() * xc);
    stats.push_back(std::move(cs));
  }

  // Exact marginal log likelihood.  Per class the observations are jointly
  // Gaussian with covariance I (x) within + J (x) between, which splits into
  // one (within + n*between) mode and n-1 within modes.
  auto marginal_ll = [&]() {
    Eigen::LLT<Mat> llt_w = llt_with_ridge(model.within, "plda_fit");
    double ld_w = logdet_of(llt_w);
    double ll = 0.0;
    for (const ClassStats& cs : stats) {
      Mat pooled = symmetrized(model.within + cs.n * model.between);
      Eigen::LLT<Mat> llt_p = llt_of(pooled, "plda_fit");
      double quad = cs.n * cs.ybar.dot(llt_p.solve(cs.ybar));
      double tr = llt_w.solve(cs.inner).trace();
      ll += -0.5 * (cs.n * static_cast<double>(d) * kLn2Pi +
                    logdet_of(llt_p) + (cs.n - 1.0) * ld_w + tr + quad);
    }
    return ll;
  };

  double prev_ll = 0.0;
  for (int it = 0; it < iters; ++it) {
    double ll = marginal_ll();
    if (ll_trace) ll_trace->push_back(ll);
    if (it > 0 && ll - prev_ll < 1e-6 * std::abs(ll)) break;
    prev_ll = ll;

    // E-step posterior per class c, in variables centered on the mean:
    //   cov   P_c = between * (within + n_c between)^-1 * within
    //   mean  b_c = n_c * between * (within + n_c between)^-1 * ybar_c
    // (this form never inverts the between matrix, which may be singular).
    // marginal_ll above has already ridged a singular within matrix.
    Mat acc_b = Mat::Zero(d, d);
    Mat acc_w = Mat::Zero(d, d);
    for (const ClassStats& cs : stats) {
      Mat pooled = symmetrized(model.within + cs.n * model.between);
      Eigen::LLT<Mat> llt_p = llt_of(pooled, "plda_fit");
      Mat p_c = symmetrized(model.between * llt_p.solve(model.within));
      Vec b_c = cs.n * (model.between * llt_p.solve(cs.ybar));
      Vec r = cs.ybar - b_c;
      acc_b += p_c + b_c * b_c.transpose();
      acc_w += cs.inner + cs.n * (p_c + r * r.transpose());
    }
    model.between = symmetrized(acc_b / static_cast<double>(stats.size()));
    model.within = symmetrized(acc_w / n_total);
  }
  return model;
}

double PldaScorer::score(const Vec& enroll, const Vec& test) const {
  if (enroll.size() != mean.size() || test.size() != mean.size())
    throw DataError("plda score: vector dim does not match model dim");
  if (!enroll.allFinite() || !test.allFinite())
    throw DataError("plda score: non-finite input vector");
  Vec s = (enroll - mean) + (test - mean);
  Vec d = enroll - test;
  return offset - 0.25 * (s.dot(q_plus * s) + d.dot(q_minus * d));
}

PldaScorer make_scorer(const PldaModel& model) {
  const Index d = model.dim();
  if (d == 0) throw DataError("make_scorer: empty model");
  if (!model.mean.allFinite() || !model.between.allFinite() ||
      !model.within.allFinite())
    throw DataError("make_scorer: model contains non-finite values");

  // llr(e, t) = offset - 1/4 [ s^T (Q + B) s + d^T (Q - B) d ]
  // with s = e + t - 2 mean, d = e - t, Q = M^-1 - T^-1, B = -T^-1 Sb M^-1,
  // T = Sb + Sw and M = T - Sb T^-1 Sb.  Grouping by s and d keeps the score
  // exactly symmetric in its arguments, and a zero between-covariance gives
  // M == T so every term vanishes.
  Mat total = model.between + model.within;
  Eigen::LLT<Mat> llt_t = llt_of(total, "make_scorer");
  Mat eye = Mat::Identity(d, d);
  Mat t_inv = llt_t.solve(eye);
  Mat m = total - model.between * llt_t.solve(model.between);
  Eigen::LLT<Mat> llt_m = llt_of(m, "make_scorer");
  Mat a = llt_m.solve(eye);
  Mat q = a - t_inv;
  Mat b = symmetrized(-t_inv * model.between * a);

  PldaScorer scorer;
  scorer.mean = model.mean;
  scorer.q_plus = q + b;
  scorer.q_minus = q - b;
  scorer.offset = 0.5 * (logdet_of(llt_t) - logdet_of(llt_m));
  return scorer;
}

void write_plda(std::ostream& os, const PldaModel& m) {
  write_magic(os, kPldaMagic);
  write_u32(os, kPldaVersion);
  write_u32(os, static_cast<std::uint32_t>(m.dim()));
  write_vec(os, m.mean);
  write_mat(os, m.between);
  write_mat(os, m.within);
}

PldaModel read_plda(std::istream& is) {
  expect_magic(is, kPldaMagic);
  std::uint32_t version = read_u32(is, "plda version");
  if (version != kPldaVersion)
    throw DataError("unsupported plda version " + std::to_string(version));
  auto d = static_cast<Index>(read_u32(is, "plda dim"));
  if (d == 0) throw DataError("plda model has dim 0");
  PldaModel m;
  m.mean = read_vec(is, d, "plda mean");
  m.between = read_mat(is, d, d, "plda between");
  m.within = read_mat(is, d, d, "plda within");
  if (!m.mean.allFinite() || !m.between.allFinite() || !m.within.allFinite())
    throw DataError("plda model contains non-finite values");
  return m;
}

void save_plda(const std::string& path, const PldaModel& m) {
  std::ostringstream ss;
  write_plda(ss, m);
  write_file_atomic(path, ss.str());
}

PldaModel load_plda(const std::string& path) {
  std::istringstream is(read_file(path));
  return read_plda(is);
}

}  // namespace flownorm
