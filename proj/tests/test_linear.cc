// tests/test_linear.cc

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
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "flownorm/dnf.hpp"
#include "flownorm/linear.hpp"
#include "flownorm/rng.hpp"
#include "test_util.hpp"

using namespace flownorm;
using testutil::randomize_stack;
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

/// Orthonormal basis of the row span, for subspace comparisons.
Mat row_span_projector(const Mat& rows) {
  Eigen::HouseholderQR<Mat> qr(rows.transpose());
  Mat q = qr.householderQ() * Mat::Identity(rows.cols(), rows.rows());
  return q * q.transpose();
}

}  // namespace

TEST_CASE("scatter matrices match an explicit double loop") {
  Rng rng(31);
  const Index d = 4;
  VectorSet data;
  // Deliberately unbalanced classes.
  std::vector<Index> sizes = {7, 12, 5};
  Index n = 0;
  for (Index s : sizes) n += s;
  data.x = Mat(n, d);
  Index r = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c)
    for (Index i = 0; i < sizes[c]; ++i, ++r) {
      data.x.row(r) = rng.normal_vec(d).transpose().array() +
                      2.0 * static_cast<double>(c);
      data.ids.push_back("s" + std::to_string(r));
      data.labels.push_back(static_cast<std::int64_t>(c));
    }

  ScatterStats s = compute_scatter(data);
  CHECK(s.n_samples == n);
  CHECK(s.n_classes == 3);

  Vec mean = Vec::Zero(d);
  for (Index i = 0; i < n; ++i) mean += data.x.row(i).transpose();
  mean /= static_cast<double>(n);
  CHECK((s.mean - mean).cwiseAbs().maxCoeff() < 1e-12);

  Mat within = Mat::Zero(d, d);
  Mat between = Mat::Zero(d, d);
  Index base = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    Vec cm = Vec::Zero(d);
    for (Index i = 0; i < sizes[c]; ++i)
      cm += data.x.row(base + i).transpose();
    cm /= static_cast<double>(sizes[c]);
    for (Index i = 0; i < sizes[c]; ++i) {
      Vec dv = data.x.row(base + i).transpose() - cm;
      for (Index a = 0; a < d; ++a)
        for (Index b = 0; b < d; ++b) within(a, b) += dv[a] * dv[b];
    }
    Vec mv = cm - mean;
    for (Index a = 0; a < d; ++a)
      for (Index b = 0; b < d; ++b)
        between(a, b) += static_cast<double>(sizes[c]) * mv[a] * mv[b];
    base += sizes[c];
  }
  within /= static_cast<double>(n);
  between /= static_cast<double>(n);
  CHECK((s.within - within).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((s.between - between).cwiseAbs().maxCoeff() < 1e-12);

  // Population convention: the two parts sum to the total covariance.
  Mat centered = data.x.rowwise() - mean.transpose();
  Mat total = centered.transpose() * centered / static_cast<double>(n);
  CHECK((s.within + s.between - total).cwiseAbs().maxCoeff() < 1e-12);

  VectorSet one = data;
  for (auto& l : one.labels) l = 5;
  CHECK_THROWS_AS(compute_scatter(one), DataError);
}

TEST_CASE("length normalization scales to norm sqrt(dim)") {
  Vec e1 = Vec::Zero(4);
  e1[0] = 1.0;
  Vec out = length_normalize(e1);
  CHECK(out[0] == 2.0);  // sqrt(4) / 1
  CHECK(out.tail(3).cwiseAbs().maxCoeff() == 0.0);

  Vec v(4);
  v << 3.0, 4.0, 0.0, 0.0;
  Vec w = length_normalize(v);
  CHECK(w[0] == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(w[1] == doctest::Approx(1.6).epsilon(1e-15));
  CHECK(w.norm() == doctest::Approx(2.0).epsilon(1e-15));

  CHECK_THROWS_AS(length_normalize(Vec::Zero(3)), DataError);

  Rng rng(32);
  VectorSet data = make_clusters(2, 4, 3, rng);
  VectorSet lset = length_normalize_set(data);
  CHECK(lset.ids == data.ids);
  for (Index i = 0; i < data.size(); ++i) {
    Vec expect = length_normalize(data.x.row(i).transpose());
    CHECK((lset.x.row(i).transpose() - expect).cwiseAbs().maxCoeff() == 0.0);
  }

  LinearTransform marker = make_length_norm();
  CHECK(marker.kind == "lengthnorm");
  Vec via_apply = apply(marker, v);
  CHECK((via_apply - w).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lda rows solve the generalized eigenproblem") {
  Rng rng(33);
  VectorSet data = make_clusters(4, 25, 5, rng);
  const double lambda = 0.1;
  const Index k = 2;
  LinearTransform t = lda_fit(data, k, lambda);
  CHECK(t.kind == "lda");
  REQUIRE(t.projection.rows() == k);
  REQUIRE(t.projection.cols() == 5);

  ScatterStats s = compute_scatter(data);
  CHECK((t.offset - s.mean).cwiseAbs().maxCoeff() == 0.0);

  // Independent oracle: eigenvectors of the pencil (Sb, lambda*Sb + Sw).
  Mat m = lambda * s.between + s.within;
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(s.between, m);
  REQUIRE(ges.info() == Eigen::Success);
  Mat top = ges.eigenvectors().rightCols(k).transpose();  // ascending order

  Mat p_fit = row_span_projector(t.projection);
  Mat p_ref = row_span_projector(top);
  CHECK((p_fit - p_ref).norm() < 1e-8);

  // Projected scatters: Sb diagonal, Sw exactly the identity.
  Mat pb = t.projection * s.between * t.projection.transpose();
  Mat pw = t.projection * s.within * t.projection.transpose();
  Mat pb_off = pb - pb.diagonal().asDiagonal().toDenseMatrix();
  Mat pw_err = pw - Mat::Identity(k, k);
  CHECK(pb_off.norm() < 1e-8);
  CHECK(pw_err.norm() < 1e-8);
  CHECK(pb(0, 0) >= pb(1, 1));  // leading row carries the larger ratio
}

TEST_CASE("whitening then principal directions of the class means "
          "reproduces plain lda") {
  Rng rng(34);
  VectorSet data = make_clusters(4, 25, 5, rng);  // balanced on purpose
  const Index k = 3;
  LinearTransform direct = lda_fit(data, k, 0.0);

  LinearTransform white = ldan_fit(data);
  VectorSet wdata = apply_set(white, data);
  VectorSet means;
  means.x = Mat(4, 5);
  Index c = 0;
  for (const auto& [label, rows] : group_by_label(wdata)) {
    Vec m = Vec::Zero(5);
    for (Index r : rows) m += wdata.x.row(r).transpose();
    means.x.row(c) = (m / static_cast<double>(rows.size())).transpose();
    means.ids.push_back("m" + std::to_string(label));
    means.labels.push_back(label);
    ++c;
  }
  LinearTransform pc = pca_fit(means, k);
  Mat two_step = pc.projection * white.projection;

  for (Index i = 0; i < k; ++i) {
    double cos = std::abs(two_step.row(i).dot(direct.projection.row(i))) /
                 (two_step.row(i).norm() * direct.projection.row(i).norm());
    CHECK(cos >= 1.0 - 1e-8);
  }
}

TEST_CASE("lda output dimension defaults and limits") {
  Rng rng(35);
  VectorSet data = make_clusters(3, 10, 5, rng);
  CHECK(lda_fit(data).projection.rows() == 2);       // min(5, 3-1)
  CHECK(lda_fit(data, 4).projection.rows() == 4);    // beyond classes-1 is ok
  CHECK(lda_fit(data, 9).projection.rows() == 5);    // clipped to dim
  CHECK_THROWS_AS(lda_fit(data, 2, -0.5), ArgError);
}

TEST_CASE("within-class whitening produces identity projected scatter") {
  Rng rng(36);
  VectorSet data = make_clusters(3, 30, 4, rng);
  LinearTransform t = ldan_fit(data);
  CHECK(t.kind == "ldan");
  CHECK(t.projection.rows() == 4);
  VectorSet w = apply_set(t, data);
  ScatterStats s = compute_scatter(w);
  CHECK((s.within - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("total-covariance whitening centers and spheres the data") {
  Rng rng(37);
  VectorSet data = make_clusters(3, 30, 4, rng);
  LinearTransform t = whiten_fit(data);
  CHECK(t.kind == "whiten");
  VectorSet w = apply_set(t, data);
  Vec mean = w.x.colwise().mean().transpose();
  CHECK(mean.cwiseAbs().maxCoeff() < 1e-10);
  Mat cov = w.x.transpose() * w.x / static_cast<double>(w.size());
  CHECK((cov - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("pca keeps orthonormal leading directions") {
  Rng rng(38);
  VectorSet data = make_clusters(3, 40, 5, rng);
  LinearTransform t = pca_fit(data, 3);
  CHECK(t.kind == "pca");
  REQUIRE(t.projection.rows() == 3);
  Mat gram = t.projection * t.projection.transpose();
  CHECK((gram - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);

  // Projected covariance is diagonal with the top eigenvalues, descending.
  Vec mean = data.x.colwise().mean().transpose();
  Mat centered = data.x.rowwise() - mean.transpose();
  Mat total = centered.transpose() * centered / static_cast<double>(data.size());
  Mat pcov = t.projection * total * t.projection.transpose();
  Mat off = pcov - pcov.diagonal().asDiagonal().toDenseMatrix();
  CHECK(off.cwiseAbs().maxCoeff() < 1e-10);
  CHECK(pcov(0, 0) >= pcov(1, 1));
  CHECK(pcov(1, 1) >= pcov(2, 2));

  Eigen::SelfAdjointEigenSolver<Mat> es(total);
  for (Index i = 0; i < 3; ++i)
    CHECK(pcov(i, i) == doctest::Approx(es.eigenvalues()[4 - i]).epsilon(1e-10));

  CHECK(pca_fit(data).projection.rows() == 5);  // out_dim 0 keeps all
}

TEST_CASE("degenerate scatter takes the ridge path without blowing up") {
  Rng rng(39);
  const Index d = 4;
  VectorSet data;
  data.x = Mat(30, d);
  for (Index i = 0; i < 30; ++i) {
    // All mass inside a 2-D subspace; Sw and Sb are rank deficient.
    data.x(i, 0) = rng.normal() + static_cast<double>(i % 3);
    data.x(i, 1) = rng.normal();
    data.x(i, 2) = 0.0;
    data.x(i, 3) = 0.0;
    data.ids.push_back("s" + std::to_string(i));
    data.labels.push_back(i % 3);
  }
  LinearTransform t = lda_fit(data, 2, 0.1);
  CHECK(t.projection.allFinite());
  VectorSet w = apply_set(t, data);
  CHECK(w.x.allFinite());
}

TEST_CASE("apply matches apply_set row by row") {
  Rng rng(40);
  VectorSet data = make_clusters(3, 8, 4, rng);
  LinearTransform t = lda_fit(data, 2);
  VectorSet out = apply_set(t, data);
  CHECK(out.ids == data.ids);
  CHECK(out.labels == data.labels);
  for (Index i = 0; i < data.size(); ++i) {
    Vec one = apply(t, data.x.row(i).transpose());
    CHECK((out.x.row(i).transpose() - one).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK_THROWS_AS(apply(t, Vec::Zero(5)), DataError);
  VectorSet bad = data;
  bad.x = Mat::Zero(3, 6);
  bad.ids = {"a", "b", "c"};
  bad.labels = {0, 1, 2};
  CHECK_THROWS_AS(apply_set(t, bad), DataError);
}

TEST_CASE("linear transforms round-trip through their binary form") {
  Rng rng(41);
  VectorSet data = make_clusters(3, 10, 4, rng);
  LinearTransform t = lda_fit(data, 2);

  std::filesystem::path dir = temp_dir();
  std::string path = (dir / "lda.bin").string();
  save_linear(path, t);
  LinearTransform back = load_linear(path);
  CHECK(back.kind == t.kind);
  CHECK((back.offset - t.offset).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.projection - t.projection).cwiseAbs().maxCoeff() == 0.0);

  // The parameter-free marker stage survives as well.
  std::string mpath = (dir / "ln.bin").string();
  save_linear(mpath, make_length_norm());
  LinearTransform marker = load_linear(mpath);
  CHECK(marker.kind == "lengthnorm");
  CHECK(marker.projection.size() == 0);

  // Unknown kinds and corrupted magics are data errors.
  std::stringstream ss;
  LinearTransform bogus = t;
  bogus.kind = "mystery";
  write_linear(ss, bogus);
  CHECK_THROWS_AS(read_linear(ss), DataError);

  std::string raw;
  {
    std::stringstream ok;
    write_linear(ok, t);
    raw = ok.str();
  }
  raw[0] = 'X';
  std::stringstream bad(raw);
  CHECK_THROWS_AS(read_linear(bad), DataError);

  std::filesystem::remove_all(dir);
}

TEST_CASE("pipelines chain saved stages in file order") {
  Rng rng(42);
  VectorSet data = make_clusters(3, 12, 3, rng);
  LinearTransform white = whiten_fit(data);
  FlowStack flow = make_flow(3, 2, 0, rng);
  randomize_stack(flow, rng, 0.2);

  std::filesystem::path dir = temp_dir();
  std::string lin_path = (dir / "stage_0_whiten.bin").string();
  std::string flow_path = (dir / "stage_1_dnf.bin").string();
  save_linear(lin_path, white);
  save_flow(flow_path, flow);

  Pipeline p = Pipeline::from_model_files({lin_path, flow_path});
  REQUIRE(p.size() == 2);
  CHECK(!p.stage(0).is_flow);
  CHECK(p.stage(1).is_flow);

  VectorSet expect = normalize_set(flow, apply_set(white, data));
  VectorSet got = p.apply_set(data);
  CHECK((got.x - expect.x).cwiseAbs().maxCoeff() == 0.0);
  Vec one = p.apply(data.x.row(0).transpose());
  CHECK((one - expect.x.row(0).transpose()).cwiseAbs().maxCoeff() == 0.0);

  // A manifest with comments and relative paths loads the same chain.
  std::string manifest = (dir / "pipeline.txt").string();
  {
    std::ofstream mf(manifest);
    mf << "# normalization chain\n\nstage_0_whiten.bin\nstage_1_dnf.bin\n";
  }
  Pipeline pm = Pipeline::from_manifest(manifest);
  VectorSet got2 = pm.apply_set(data);
  CHECK((got2.x - expect.x).cwiseAbs().maxCoeff() == 0.0);

  // Comment-only manifests and unrecognized files are rejected.
  std::string empty_manifest = (dir / "empty.txt").string();
  {
    std::ofstream mf(empty_manifest);
    mf << "# nothing here\n";
  }
  CHECK_THROWS_AS(Pipeline::from_manifest(empty_manifest), DataError);

  std::string junk = (dir / "junk.bin").string();
  {
    std::ofstream jf(junk, std::ios::binary);
    jf << "XYZ1 not a model";
  }
  CHECK_THROWS_AS(Pipeline::from_model_files({junk}), DataError);

  std::filesystem::remove_all(dir);
}

TEST_CASE("pipeline errors name the failing stage") {
  Rng rng(43);
  VectorSet data = make_clusters(2, 6, 3, rng);
  Pipeline p;
  p.add_linear(whiten_fit(data));
  p.add_flow(make_flow(4, 1, 0, rng));  // wrong dim on purpose
  try {
    p.apply_set(data);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("stage 1") != std::string::npos);
  }
}
