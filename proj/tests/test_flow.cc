// tests/test_flow.cc

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

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flownorm/flow.hpp"
#include "flownorm/gradcheck.hpp"
#include "flownorm/io_util.hpp"
#include "flownorm/rng.hpp"
#include "flownorm/types.hpp"
#include "test_util.hpp"

using namespace flownorm;

TEST_CASE("fresh flow is the exact identity with zero log-determinant") {
  Rng rng(1);
  FlowStack stack = make_flow(5, 4, 0, rng);
  Mat x = rng.normal_mat(7, 5);
  Mat z;
  Vec logdet;
  normalize_batch(stack, x, z, logdet);
  CHECK((z.array() == x.array()).all());
  CHECK((logdet.array() == 0.0).all());
}

TEST_CASE("zero conditioner parameters give the identity for any perms") {
  Rng rng(2);
  FlowStack stack = make_flow(6, 3, 0, rng);
  // Scramble the block orders, then zero every parameter.
  for (auto& block : stack.blocks) block.perm = rng.permutation(6);
  stack.set_params(Vec::Zero(stack.param_count()));
  Mat x = rng.normal_mat(4, 6);
  Mat z;
  Vec logdet;
  normalize_batch(stack, x, z, logdet);
  CHECK((z.array() == x.array()).all());
  CHECK((logdet.array() == 0.0).all());
}

TEST_CASE("block permutation layout: identity first, then reversals") {
  Rng rng(3);
  FlowStack stack = make_flow(4, 3, 0, rng);
  REQUIRE(stack.blocks.size() == 3);
  CHECK(stack.blocks[0].perm == std::vector<Index>{0, 1, 2, 3});
  CHECK(stack.blocks[1].perm == std::vector<Index>{3, 2, 1, 0});
  CHECK(stack.blocks[2].perm == std::vector<Index>{3, 2, 1, 0});
}

TEST_CASE("conditioner outputs depend only on earlier coordinates") {
  Rng rng(5);
  const Index d = 6;
  FlowStack stack = make_flow(d, 1, 8, rng);
  testutil::randomize_stack(stack, rng, 0.5);
  const MaskedConditioner& cond = stack.blocks[0].cond;

  Mat base = rng.normal_mat(1, d);
  Mat mu0, alpha0;
  conditioner_forward(cond, base, mu0, alpha0);
  for (Index j = 0; j < d; ++j) {
    for (Index i = j; i < d; ++i) {
      // Kicking input i must leave outputs 0..i unchanged (output j may use
      // inputs strictly before j only).
      Mat kicked = base;
      kicked(0, i) += 1.7;
      Mat mu, alpha;
      conditioner_forward(cond, kicked, mu, alpha);
      CHECK(mu(0, j) == mu0(0, j));
      CHECK(alpha(0, j) == alpha0(0, j));
    }
  }
  // The first output is bias-only, and later outputs do react to input 0.
  Mat kicked = base;
  kicked(0, 0) += 1.7;
  Mat mu, alpha;
  conditioner_forward(cond, kicked, mu, alpha);
  CHECK(mu(0, 0) == mu0(0, 0));
  bool some_change = false;
  for (Index j = 1; j < d; ++j) some_change |= mu(0, j) != mu0(0, j);
  CHECK(some_change);
}

TEST_CASE("bias-only conditioner matches the closed-form affine map") {
  Rng rng(7);
  FlowStack stack = make_flow(2, 1, 0, rng);
  stack.set_params(Vec::Zero(stack.param_count()));
  MaskedConditioner& cond = stack.blocks[0].cond;
  cond.b_mu << 0.3, -0.2;
  cond.b_alpha << 0.5, -0.25;

  Vec x(2);
  x << 1.5, -2.5;
  auto [z, logdet] = normalize(stack, x);
  CHECK(z[0] == doctest::Approx((1.5 - 0.3) * std::exp(-0.5)).epsilon(1e-15));
  CHECK(z[1] ==
        doctest::Approx((-2.5 + 0.2) * std::exp(0.25)).epsilon(1e-15));
  CHECK(logdet == doctest::Approx(-(0.5 - 0.25)).epsilon(1e-15));

  Vec back = generate(stack, z);
  CHECK((back - x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("reversal block applies its coordinate parameters in place") {
  // Under a reversal permutation, permuted slot j reads input coordinate
  // perm[j] and writes output coordinate perm[j]; slot parameters stay with
  // the slot.  Checked against explicit index bookkeeping.
  Rng rng(11);
  FlowStack stack = make_flow(2, 2, 0, rng);
  stack.set_params(Vec::Zero(stack.param_count()));
  MaskedConditioner& cond = stack.blocks[1].cond;  // reversal block
  REQUIRE(stack.blocks[1].perm == std::vector<Index>{1, 0});
  cond.b_mu << 0.4, -0.6;
  cond.b_alpha << 0.2, 0.7;

  Vec x(2);
  x << 2.0, 3.0;
  auto [z, logdet] = normalize(stack, x);
  // Slot 0 handles coordinate 1, slot 1 handles coordinate 0.
  CHECK(z[1] == doctest::Approx((3.0 - 0.4) * std::exp(-0.2)).epsilon(1e-15));
  CHECK(z[0] == doctest::Approx((2.0 + 0.6) * std::exp(-0.7)).epsilon(1e-15));
  CHECK(logdet == doctest::Approx(-0.9).epsilon(1e-15));
}

TEST_CASE("normalize then generate recovers the input") {
  Rng rng(13);
  for (int rep = 0; rep < 25; ++rep) {
    Index d = 2 + static_cast<Index>(rng.uniform_int(10));
    Index t = 1 + static_cast<Index>(rng.uniform_int(5));
    FlowStack stack = make_flow(d, t, 0, rng);
    testutil::randomize_stack(stack, rng, 0.4);
    Mat x = rng.normal_mat(3, d) * 2.0;
    Mat z;
    Vec logdet;
    normalize_batch(stack, x, z, logdet);
    Mat back = generate_batch(stack, z);
    CHECK((back - x).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("analytic log-determinant matches the numeric Jacobian") {
  Rng rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    Index d = 2 + static_cast<Index>(rng.uniform_int(3));
    FlowStack stack = make_flow(d, 2, 0, rng);
    testutil::randomize_stack(stack, rng, 0.5);
    Vec x = rng.normal_vec(d);
    auto [z, logdet] = normalize(stack, x);

    const double h = 1e-5;
    Mat jac(d, d);
    for (Index j = 0; j < d; ++j) {
      Vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      jac.col(j) = (normalize(stack, xp).first -
                    normalize(stack, xm).first) / (2.0 * h);
    }
    double numeric = std::log(std::abs(jac.determinant()));
    CHECK(logdet == doctest::Approx(numeric).epsilon(1e-5));
  }
}

TEST_CASE("single-block Jacobian is triangular in the permuted coordinates") {
  Rng rng(19);
  const Index d = 5;
  FlowStack stack = make_flow(d, 1, 0, rng);
  testutil::randomize_stack(stack, rng, 0.5);
  Vec x = rng.normal_vec(d);
  const double h = 1e-6;
  for (Index out = 0; out < d; ++out) {
    for (Index in = out + 1; in < d; ++in) {
      Vec xp = x, xm = x;
      xp[in] += h;
      xm[in] -= h;
      double deriv =
          (normalize(stack, xp).first[out] - normalize(stack, xm).first[out]) /
          (2.0 * h);
      CHECK(std::abs(deriv) < 1e-8);
    }
  }
}

TEST_CASE("log-scale saturates at +-7 and stops feeding the gradient") {
  Rng rng(23);
  FlowStack stack = make_flow(2, 1, 0, rng);
  stack.set_params(Vec::Zero(stack.param_count()));
  stack.blocks[0].cond.b_alpha << 9.0, -9.0;

  Vec x(2);
  x << 2.0, 2.0;
  auto [z, logdet] = normalize(stack, x);
  CHECK(z[0] == doctest::Approx(2.0 * std::exp(-7.0)).epsilon(1e-15));
  CHECK(z[1] == doctest::Approx(2.0 * std::exp(7.0)).epsilon(1e-15));
  CHECK(logdet == doctest::Approx(0.0));

  Vec param_grad;
  Mat d_z = Mat::Ones(1, 2);
  Vec d_logdet = Vec::Ones(1);
  FlowActs acts;
  Mat xm = x.transpose();
  Mat zz;
  Vec ld;
  normalize_batch(stack, xm, zz, ld, &acts);
  flow_backward(stack, acts, d_z, d_logdet, param_grad);
  // b_alpha entries sit last in the block layout; saturated scales must not
  // receive gradient.
  CHECK(param_grad[stack.param_count() - 2] == 0.0);
  CHECK(param_grad[stack.param_count() - 1] == 0.0);
}

TEST_CASE("batch normalize equals per-row normalize") {
  Rng rng(29);
  FlowStack stack = make_flow(4, 3, 6, rng);
  testutil::randomize_stack(stack, rng, 0.4);
  Mat x = rng.normal_mat(6, 4);
  Mat z;
  Vec logdet;
  normalize_batch(stack, x, z, logdet);
  for (Index i = 0; i < 6; ++i) {
    auto [zi, ldi] = normalize(stack, x.row(i).transpose());
    CHECK((z.row(i).transpose() - zi).cwiseAbs().maxCoeff() == 0.0);
    CHECK(logdet[i] == ldi);
  }
}

TEST_CASE("backward pass matches finite differences on params and inputs") {
  Rng rng(31);
  const Index d = 3, n = 2;
  FlowStack stack = make_flow(d, 2, 0, rng);
  testutil::randomize_stack(stack, rng, 0.4);
  Mat w1 = rng.normal_mat(n, d);  // fixed loss weights
  Vec w2 = rng.normal_vec(n);

  Mat x_current = rng.normal_mat(n, d);
  auto loss_at = [&](const Vec& params) {
    FlowStack s2 = stack;
    s2.set_params(params);
    Mat z;
    Vec logdet;
    normalize_batch(s2, x_current, z, logdet);
    return (z.array() * w1.array()).sum() + logdet.dot(w2);
  };

  FlowActs acts;
  Mat z;
  Vec logdet;
  normalize_batch(stack, x_current, z, logdet, &acts);
  Vec param_grad;
  Mat dx = flow_backward(stack, acts, w1, w2, param_grad);

  Vec num = finite_diff_gradient(loss_at, stack.get_params(), 1e-6);
  double scale = num.cwiseAbs().maxCoeff() + 1e-8;
  CHECK((param_grad - num).cwiseAbs().maxCoeff() / scale < 1e-6);

  // Input gradient, one coordinate at a time.
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) {
      Mat xp = x_current, xm = x_current;
      xp(i, j) += 1e-6;
      xm(i, j) -= 1e-6;
      Mat zp, zm;
      Vec lp, lm;
      normalize_batch(stack, xp, zp, lp);
      normalize_batch(stack, xm, zm, lm);
      double fp = (zp.array() * w1.array()).sum() + lp.dot(w2);
      double fm = (zm.array() * w1.array()).sum() + lm.dot(w2);
      double numeric = (fp - fm) / 2e-6;
      CHECK(dx(i, j) == doctest::Approx(numeric).epsilon(1e-5));
    }
  }
}

TEST_CASE("single-sample backward agrees with the batch form") {
  Rng rng(37);
  const Index d = 4;
  FlowStack stack = make_flow(d, 2, 0, rng);
  testutil::randomize_stack(stack, rng, 0.4);
  Vec x = rng.normal_vec(d);
  Vec d_z = rng.normal_vec(d);
  double d_logdet = 0.7;

  Vec pg_single;
  Vec dx_single = flow_backward_at(stack, x, d_z, d_logdet, pg_single);

  FlowActs acts;
  Mat z;
  Vec logdet;
  Mat xm = x.transpose();
  normalize_batch(stack, xm, z, logdet, &acts);
  Vec pg_batch;
  Vec dl(1);
  dl << d_logdet;
  Mat dx_batch = flow_backward(stack, acts, d_z.transpose(), dl, pg_batch);
  CHECK((pg_single - pg_batch).cwiseAbs().maxCoeff() == 0.0);
  CHECK((dx_single - dx_batch.row(0).transpose()).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("overflowing input raises a numeric error naming the block") {
  Rng rng(41);
  FlowStack stack = make_flow(2, 1, 0, rng);
  stack.set_params(Vec::Zero(stack.param_count()));
  stack.blocks[0].cond.b_alpha << -9.0, 0.0;  // clamp to -7: scale by e^7
  Mat x(1, 2);
  x << 1e308, 0.0;
  Mat z;
  Vec logdet;
  CHECK_THROWS_WITH_AS(normalize_batch(stack, x, z, logdet),
                       doctest::Contains("block"), NumericError);
}

TEST_CASE("binary serialization roundtrips bit exactly, priors included") {
  Rng rng(43);
  FlowStack stack = make_flow(5, 3, 4, rng);
  testutil::randomize_stack(stack, rng, 0.6);
  std::map<std::int64_t, Vec> priors;
  priors[3] = rng.normal_vec(5);
  priors[-8] = rng.normal_vec(5);

  std::string dir = testutil::temp_dir();
  save_flow(dir + "/f.bin", stack, priors);
  std::map<std::int64_t, Vec> back_priors;
  FlowStack back = load_flow(dir + "/f.bin", &back_priors);

  CHECK(back.dim == stack.dim);
  REQUIRE(back.blocks.size() == stack.blocks.size());
  for (std::size_t b = 0; b < back.blocks.size(); ++b)
    CHECK(back.blocks[b].perm == stack.blocks[b].perm);
  CHECK((back.get_params().array() == stack.get_params().array()).all());
  REQUIRE(back_priors.size() == 2);
  CHECK((back_priors[3].array() == priors[3].array()).all());
  CHECK((back_priors[-8].array() == priors[-8].array()).all());

  Mat x = rng.normal_mat(3, 5);
  Mat z1, z2;
  Vec l1, l2;
  normalize_batch(stack, x, z1, l1);
  normalize_batch(back, x, z2, l2);
  CHECK((z1.array() == z2.array()).all());
}

TEST_CASE("text serialization roundtrips bit exactly and is sniffed") {
  Rng rng(47);
  FlowStack stack = make_flow(3, 2, 0, rng);
  testutil::randomize_stack(stack, rng, 0.6);
  std::map<std::int64_t, Vec> priors;
  priors[0] = rng.normal_vec(3);

  std::ostringstream os;
  write_flow_text(os, stack, priors);
  std::string text = os.str();
  CHECK(text.substr(0, 9) == "DNF1-TEXT");

  std::istringstream is(text);
  std::map<std::int64_t, Vec> back_priors;
  FlowStack back = read_flow_text(is, &back_priors);
  CHECK((back.get_params().array() == stack.get_params().array()).all());
  CHECK((back_priors[0].array() == priors[0].array()).all());

  // load_flow dispatches on the byte after the magic.
  std::string dir = testutil::temp_dir();
  write_file_atomic(dir + "/f.txt", text);
  FlowStack sniffed = load_flow(dir + "/f.txt");
  CHECK((sniffed.get_params().array() == stack.get_params().array()).all());
}

TEST_CASE("malformed flow files are data errors") {
  Rng rng(53);
  FlowStack stack = make_flow(3, 1, 0, rng);
  std::ostringstream os;
  write_flow(os, stack);
  std::string good = os.str();

  {
    std::istringstream is(good.substr(0, good.size() / 2));
    CHECK_THROWS_AS(read_flow(is), DataError);
  }
  {
    std::string bad = good;
    bad[0] = 'X';
    std::istringstream is(bad);
    CHECK_THROWS_AS(read_flow(is), DataError);
  }
  {
    // First permutation entry lives right after the 16-byte header; pointing
    // it past dim breaks the bijection.
    std::string bad = good;
    bad[16] = 9;
    std::istringstream is(bad);
    CHECK_THROWS_AS(read_flow(is), DataError);
  }
}
