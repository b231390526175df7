// tests/test_plda.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "flownorm/linear.hpp"
#include "flownorm/plda.hpp"
#include "flownorm/rng.hpp"
#include "test_util.hpp"

using namespace flownorm;
using testutil::temp_dir;

namespace {

VectorSet make_clusters(Index classes, Index n_per, Index d, Rng& rng,
                        double spread = 3.0) {
  VectorSet s;
  s.x = Mat(classes * n_per, d);
  for (Index c = 0; c < classes; ++c)
    for (Index i = 0; i < n_per; ++i) {
      Index r = c * n_per + i;
      s.x.row(r) = rng.normal_vec(d).transpose();
      s.x(r, c % d) += spread * static_cast<double>(c + 1);
      s.ids.push_back("c" + std::to_string(c) + "_u" + std::to_string(i));
      s.labels.push_back(c);
    }
  return s;
}

double log_normal_pdf(double x, double mean, double var) {
  double d = x - mean;
  return -0.5 * (std::log(2.0 * 3.14159265358979323846 * var) + d * d / var);
}

/// log integral of N(e; y, w) N(t; y, w) N(y; m, b) dy by Simpson's rule.
double log_same_class_density(double e, double t, double m, double b,
                              double w) {
  const double lo = -16.0, hi = 16.0;
  const int n = 32000;  // intervals; 32001 evaluation points
  const double h = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    double y = lo + h * i;
    double f = std::exp(log_normal_pdf(e, y, w) + log_normal_pdf(t, y, w) +
                        log_normal_pdf(y, m, b));
    double coef = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    acc += coef * f;
  }
  return std::log(acc * h / 3.0);
}

}  // namespace

TEST_CASE("zero iterations returns the moment initialization") {
  Rng rng(51);
  VectorSet data = make_clusters(4, 10, 3, rng);
  std::vector<double> trace;
  PldaModel m = plda_fit(data, 0, &trace);
  CHECK(trace.empty());

  ScatterStats s = compute_scatter(data);
  CHECK((m.mean - s.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m.between - s.between).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m.within - s.within).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(plda_fit(data, -1), ArgError);
}

TEST_CASE("the marginal likelihood matches the stacked joint Gaussian") {
  Rng rng(52);
  const Index d = 3;
  VectorSet data;
  std::vector<Index> sizes = {4, 3, 5};
  Index n = 12;
  data.x = Mat(n, d);
  Index r = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c)
    for (Index i = 0; i < sizes[c]; ++i, ++r) {
      data.x.row(r) = rng.normal_vec(d).transpose().array() +
                      3.0 * static_cast<double>(c);
      data.ids.push_back("s" + std::to_string(r));
      data.labels.push_back(static_cast<std::int64_t>(c));
    }

  PldaModel m0 = plda_fit(data, 0);
  std::vector<double> trace;
  plda_fit(data, 1, &trace);
  REQUIRE(trace.size() == 1);

  // Oracle: per class, the stacked observations are one big Gaussian with
  // covariance blocks  within * delta_ij + between  and mean tiled from the
  // model mean.
  const double ln2pi = std::log(2.0 * 3.14159265358979323846);
  double ll_ref = 0.0;
  Index base = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    Index nc = sizes[c];
    Mat cov = Mat::Zero(nc * d, nc * d);
    Vec resid(nc * d);
    for (Index i = 0; i < nc; ++i) {
      resid.segment(i * d, d) =
          data.x.row(base + i).transpose() - m0.mean;
      for (Index j = 0; j < nc; ++j) {
        cov.block(i * d, j * d, d, d) = m0.between;
        if (i == j) cov.block(i * d, j * d, d, d) += m0.within;
      }
    }
    Eigen::LLT<Mat> llt(cov);
    REQUIRE(llt.info() == Eigen::Success);
    Mat l = llt.matrixL();
    double logdet = 2.0 * l.diagonal().array().log().sum();
    double quad = resid.dot(llt.solve(resid));
    ll_ref += -0.5 * (static_cast<double>(nc * d) * ln2pi + logdet + quad);
    base += nc;
  }
  CHECK(trace[0] == doctest::Approx(ll_ref).epsilon(1e-9));
}

TEST_CASE("the likelihood trace is non-decreasing") {
  Rng rng(53);
  VectorSet data = make_clusters(5, 12, 4, rng);
  std::vector<double> trace;
  plda_fit(data, 8, &trace);
  REQUIRE(trace.size() >= 2);
  for (std::size_t i = 1; i < trace.size(); ++i)
    CHECK(trace[i] >= trace[i - 1] - 1e-8 * std::abs(trace[i]));
}

TEST_CASE("scalar EM converges to the analysis-of-variance fixed point") {
  Rng rng(54);
  const Index classes = 50, n_per = 16;
  VectorSet data;
  data.x = Mat(classes * n_per, 1);
  for (Index c = 0; c < classes; ++c) {
    double center = 3.0 * rng.normal();
    for (Index i = 0; i < n_per; ++i) {
      data.x(c * n_per + i, 0) = center + rng.normal();
      data.ids.push_back("c" + std::to_string(c) + "_u" + std::to_string(i));
      data.labels.push_back(c);
    }
  }
  PldaModel m = plda_fit(data, 500);

  // With a fixed global mean and balanced classes the likelihood is maximized
  // in closed form: within = SSW / (N - C) and within + n*between = SSB / C.
  const double n = static_cast<double>(classes * n_per);
  double gmean = data.x.col(0).mean();
  double ssw = 0.0, ssb = 0.0;
  for (Index c = 0; c < classes; ++c) {
    double cmean = 0.0;
    for (Index i = 0; i < n_per; ++i) cmean += data.x(c * n_per + i, 0);
    cmean /= static_cast<double>(n_per);
    for (Index i = 0; i < n_per; ++i) {
      double dv = data.x(c * n_per + i, 0) - cmean;
      ssw += dv * dv;
    }
    ssb += static_cast<double>(n_per) * (cmean - gmean) * (cmean - gmean);
  }
  double w_ref = ssw / (n - static_cast<double>(classes));
  double pooled_ref = ssb / static_cast<double>(classes);
  CHECK(m.within(0, 0) == doctest::Approx(w_ref).epsilon(1e-2));
  CHECK(m.within(0, 0) + static_cast<double>(n_per) * m.between(0, 0) ==
        doctest::Approx(pooled_ref).epsilon(1e-2));
}

TEST_CASE("scalar scores match numerical integration of the model") {
  PldaModel m;
  m.mean = Vec::Constant(1, 0.3);
  m.between = Mat::Constant(1, 1, 1.3);
  m.within = Mat::Constant(1, 1, 0.8);
  PldaScorer scorer = make_scorer(m);

  const double total_var = 1.3 + 0.8;
  double worst = 0.0;
  for (int i = 0; i < 21; ++i)
    for (int j = 0; j < 21; ++j) {
      double e = 0.3 - 3.0 + 6.0 * i / 20.0;
      double t = 0.3 - 3.0 + 6.0 * j / 20.0;
      double ref = log_same_class_density(e, t, 0.3, 1.3, 0.8) -
                   log_normal_pdf(e, 0.3, total_var) -
                   log_normal_pdf(t, 0.3, total_var);
      double got = scorer.score(Vec::Constant(1, e), Vec::Constant(1, t));
      worst = std::max(worst, std::abs(got - ref));
    }
  CHECK(worst < 1e-6);
}

TEST_CASE("zero between-covariance scores exactly zero") {
  Rng rng(55);
  const Index d = 3;
  PldaModel m;
  m.mean = rng.normal_vec(d);
  m.between = Mat::Zero(d, d);
  Mat a = rng.normal_mat(d, d);
  m.within = a * a.transpose() + Mat::Identity(d, d);
  PldaScorer scorer = make_scorer(m);
  for (int i = 0; i < 20; ++i)
    CHECK(scorer.score(rng.normal_vec(d), rng.normal_vec(d)) == 0.0);
}

TEST_CASE("scores are exactly symmetric in enroll and test") {
  Rng rng(56);
  VectorSet data = make_clusters(4, 10, 3, rng);
  PldaModel m = plda_fit(data, 5);
  PldaScorer scorer = make_scorer(m);
  for (int i = 0; i < 50; ++i) {
    Vec a = rng.normal_vec(3);
    Vec b = rng.normal_vec(3);
    CHECK(scorer.score(a, b) == scorer.score(b, a));
  }
}

TEST_CASE("an invertible affine map of the data leaves scores unchanged") {
  Rng rng(57);
  const Index d = 4;
  VectorSet data = make_clusters(8, 12, d, rng);

  // Well-conditioned map: random rotation times a mild diagonal stretch.
  Eigen::HouseholderQR<Mat> qr(rng.normal_mat(d, d));
  Mat rot = qr.householderQ() * Mat::Identity(d, d);
  Vec scales(d);
  scales << 0.5, 0.8, 1.25, 2.0;
  Mat a = rot * scales.asDiagonal();
  Vec c = rng.normal_vec(d);

  VectorSet mapped = data;
  for (Index i = 0; i < data.size(); ++i)
    mapped.x.row(i) = (a * data.x.row(i).transpose() + c).transpose();

  std::vector<double> t1, t2;
  PldaScorer s1 = make_scorer(plda_fit(data, 5, &t1));
  PldaScorer s2 = make_scorer(plda_fit(mapped, 5, &t2));
  REQUIRE(t1.size() == t2.size());  // same number of EM updates ran

  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    Index i = rng.uniform_int(data.size());
    Index j = rng.uniform_int(data.size());
    double v1 = s1.score(data.x.row(i).transpose(), data.x.row(j).transpose());
    double v2 = s2.score(mapped.x.row(i).transpose(),
                         mapped.x.row(j).transpose());
    worst = std::max(worst, std::abs(v1 - v2));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("a duplicated coordinate takes the ridge path and still scores") {
  Rng rng(58);
  VectorSet data = make_clusters(3, 10, 3, rng);
  data.x.col(2) = data.x.col(0);  // exact singular within-class covariance
  PldaModel m = plda_fit(data, 3);
  CHECK(m.within.allFinite());
  CHECK(m.between.allFinite());
  PldaScorer scorer = make_scorer(m);
  double v = scorer.score(data.x.row(0).transpose(), data.x.row(1).transpose());
  CHECK(std::isfinite(v));
}

TEST_CASE("scorer construction and scoring reject bad inputs") {
  Rng rng(59);
  PldaModel bad;
  bad.mean = Vec::Zero(2);
  bad.between = Mat::Identity(2, 2) * 0.1;
  bad.within = -0.5 * Mat::Identity(2, 2);
  CHECK_THROWS_AS(make_scorer(bad), NumericError);

  PldaModel nan_model = bad;
  nan_model.within = Mat::Identity(2, 2);
  nan_model.mean[0] = std::nan("");
  CHECK_THROWS_AS(make_scorer(nan_model), DataError);

  VectorSet data = make_clusters(3, 8, 2, rng);
  PldaScorer ok = make_scorer(plda_fit(data, 2));
  CHECK_THROWS_AS(ok.score(Vec::Zero(3), Vec::Zero(2)), DataError);
  Vec inf_vec = Vec::Zero(2);
  inf_vec[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(ok.score(inf_vec, Vec::Zero(2)), DataError);
}

TEST_CASE("models round-trip through their binary form") {
  Rng rng(60);
  VectorSet data = make_clusters(4, 10, 3, rng);
  PldaModel m = plda_fit(data, 4);

  std::filesystem::path dir = temp_dir();
  std::string path = (dir / "plda.bin").string();
  save_plda(path, m);
  PldaModel back = load_plda(path);
  CHECK((back.mean - m.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.between - m.between).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.within - m.within).cwiseAbs().maxCoeff() == 0.0);

  std::string raw;
  {
    std::stringstream ss;
    write_plda(ss, m);
    raw = ss.str();
  }
  std::stringstream bad_magic(raw);
  raw[0] = 'Q';
  std::stringstream corrupted(raw);
  CHECK_THROWS_AS(read_plda(corrupted), DataError);
  std::stringstream truncated(std::string(raw.data(), raw.size() / 2));
  CHECK_THROWS_AS(read_plda(truncated), DataError);

  std::filesystem::remove_all(dir);
}
