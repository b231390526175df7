// src/flow.cc

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

#include "flownorm/flow.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "flownorm/io_util.hpp"

namespace flownorm {

namespace {

constexpr char kFlowMagic[4] = {'D', 'N', 'F', '1'};
constexpr std::uint32_t kFlowVersion = 1;

/// MADE degrees: input i carries degree i+1; hidden units cycle 1..dim-1;
/// output j accepts hidden degrees <= j, which leaves output 0 bias-only.
void build_masks(MaskedConditioner& c) {
  const Index d = c.dim;
  auto hidden_degree = [d](Index k) { return 1 + (k % (d - 1)); };

  c.m1 = Mat::Zero(c.hidden[0], d);
  for (Index k = 0; k < c.hidden[0]; ++k)
    for (Index i = 0; i < d; ++i)
      if (i + 1 <= hidden_degree(k)) c.m1(k, i) = 1.0;

  c.m2 = Mat::Zero(c.hidden[1], c.hidden[0]);
  for (Index k2 = 0; k2 < c.hidden[1]; ++k2)
    for (Index k1 = 0; k1 < c.hidden[0]; ++k1)
      if (hidden_degree(k1) <= hidden_degree(k2)) c.m2(k2, k1) = 1.0;

  c.m3 = Mat::Zero(c.hidden[2], c.hidden[1]);
  for (Index k3 = 0; k3 < c.hidden[2]; ++k3)
    for (Index k2 = 0; k2 < c.hidden[1]; ++k2)
      if (hidden_degree(k2) <= hidden_degree(k3)) c.m3(k3, k2) = 1.0;

  c.m_out = Mat::Zero(d, c.hidden[2]);
  for (Index j = 0; j < d; ++j)
    for (Index k = 0; k < c.hidden[2]; ++k)
      if (hidden_degree(k) <= j) c.m_out(j, k) = 1.0;
}

/// Masks built, all tensors allocated and zeroed.
MaskedConditioner make_conditioner_shell(Index dim,
                                         std::array<Index, 3> hidden) {
  if (dim < 2) throw ArgError("conditioner: dim must be >= 2");
  for (Index h : hidden)
    if (h < 1) throw ArgError("conditioner: hidden widths must be >= 1");
  MaskedConditioner c;
  c.dim = dim;
  c.hidden = hidden;
  build_masks(c);
  c.w1 = Mat::Zero(hidden[0], dim);
  c.b1 = Vec::Zero(hidden[0]);
  c.w2 = Mat::Zero(hidden[1], hidden[0]);
  c.b2 = Vec::Zero(hidden[1]);
  c.w3 = Mat::Zero(hidden[2], hidden[1]);
  c.b3 = Vec::Zero(hidden[2]);
  c.w_mu = Mat::Zero(dim, hidden[2]);
  c.b_mu = Vec::Zero(dim);
  c.w_alpha = Mat::Zero(dim, hidden[2]);
  c.b_alpha = Vec::Zero(dim);
  return c;
}

Mat relu(const Mat& a) { return a.cwiseMax(0.0); }

// Flattening order per conditioner: w1 b1 w2 b2 w3 b3 w_mu b_mu w_alpha
// b_alpha, matrices row-major.
template <typename Cond, typename Fn>
void for_each_tensor(Cond& c, Fn&& fn) {
  fn("w1", c.w1);
  fn("b1", c.b1);
  fn("w2", c.w2);
  fn("b2", c.b2);
  fn("w3", c.w3);
  fn("b3", c.b3);
  fn("w_mu", c.w_mu);
  fn("b_mu", c.b_mu);
  fn("w_alpha", c.w_alpha);
  fn("b_alpha", c.b_alpha);
}

template <typename M>
void flatten_tensor(const M& m, Vec& out, Index& pos) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) out[pos++] = m(r, c);
}

template <typename M>
void unflatten_tensor(M& m, const Vec& in, Index& pos) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = in[pos++];
}

template <typename M>
void write_tensor(std::ostream& os, const M& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) write_f64(os, m(r, c));
}

template <typename M>
void read_tensor(std::istream& is, M& m, const std::string& what) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = read_f64(is, what);
}

}  // namespace

Index MaskedConditioner::param_count() const {
  Index n = 0;
  for_each_tensor(*this, [&](const char*, const auto& m) { n += m.size(); });
  return n;
}

MaskedConditioner make_conditioner(Index dim, std::array<Index, 3> hidden,
                                   Rng& rng) {
  MaskedConditioner c = make_conditioner_shell(dim, hidden);
  // Hidden weights ~ N(0, 1/fan_in); heads and biases stay zero, so the
  // initial map is exactly the identity.
  c.w1 = rng.normal_mat(hidden[0], dim) / std::sqrt(double(dim));
  c.w2 = rng.normal_mat(hidden[1], hidden[0]) / std::sqrt(double(hidden[0]));
  c.w3 = rng.normal_mat(hidden[2], hidden[1]) / std::sqrt(double(hidden[1]));
  return c;
}

void conditioner_forward(const MaskedConditioner& c, const Mat& in, Mat& mu,
                         Mat& alpha, ConditionerActs* acts) {
  if (in.cols() != c.dim)
    throw ArgError("conditioner_forward: input dim mismatch");
  Mat a1 = (in * c.w1.cwiseProduct(c.m1).transpose()).rowwise() +
           c.b1.transpose();
  Mat h1 = relu(a1);
  Mat a2 = (h1 * c.w2.cwiseProduct(c.m2).transpose()).rowwise() +
           c.b2.transpose();
  Mat h2 = relu(a2);
  Mat a3 = (h2 * c.w3.cwiseProduct(c.m3).transpose()).rowwise() +
           c.b3.transpose();
  Mat h3 = relu(a3);
  mu = (h3 * c.w_mu.cwiseProduct(c.m_out).transpose()).rowwise() +
       c.b_mu.transpose();
  Mat alpha_raw =
      (h3 * c.w_alpha.cwiseProduct(c.m_out).transpose()).rowwise() +
      c.b_alpha.transpose();
  alpha = alpha_raw.cwiseMax(-kAlphaClamp).cwiseMin(kAlphaClamp);
  if (acts) {
    acts->in = in;
    acts->a1 = std::move(a1);
    acts->h1 = std::move(h1);
    acts->a2 = std::move(a2);
    acts->h2 = std::move(h2);
    acts->a3 = std::move(a3);
    acts->h3 = std::move(h3);
    acts->alpha_raw = std::move(alpha_raw);
  }
}

Index FlowStack::param_count() const {
  Index n = 0;
  for (const auto& b : blocks) n += b.cond.param_count();
  return n;
}

Vec FlowStack::get_params() const {
  Vec p(param_count());
  Index pos = 0;
  for (const auto& b : blocks)
    for_each_tensor(b.cond, [&](const char*, const auto& m) {
      flatten_tensor(m, p, pos);
    });
  return p;
}

void FlowStack::set_params(const Vec& p) {
  if (p.size() != param_count())
    throw ArgError("FlowStack::set_params: wrong parameter count");
  Index pos = 0;
  for (auto& b : blocks)
    for_each_tensor(b.cond, [&](const char*, auto& m) {
      unflatten_tensor(m, p, pos);
    });
}

FlowStack make_flow(Index dim, Index n_blocks, Index hidden, Rng& rng) {
  if (n_blocks < 1) throw ArgError("make_flow: need at least one block");
  if (dim < 2) throw ArgError("make_flow: dim must be >= 2");
  Index h = (hidden == 0) ? dim : hidden;
  FlowStack stack;
  stack.dim = dim;
  for (Index b = 0; b < n_blocks; ++b) {
    MafBlock block;
    block.cond = make_conditioner(dim, {h, h, h}, rng);
    block.perm.resize(static_cast<std::size_t>(dim));
    for (Index j = 0; j < dim; ++j)
      // Block 0 keeps the input order; later blocks reverse it so they model
      // the conditional structure the first ordering cannot.
      block.perm[static_cast<std::size_t>(j)] = (b == 0) ? j : dim - 1 - j;
    stack.blocks.push_back(std::move(block));
  }
  return stack;
}

void normalize_batch(const FlowStack& stack, const Mat& x, Mat& z, Vec& logdet,
                     FlowActs* acts) {
  if (x.cols() != stack.dim)
    throw ArgError("normalize: input dim does not match flow dim");
  const Index n = x.rows();
  const Index d = stack.dim;
  if (acts) acts->blocks.assign(stack.blocks.size(), {});
  logdet = Vec::Zero(n);
  Mat cur = x;
  for (std::size_t b = 0; b < stack.blocks.size(); ++b) {
    const MafBlock& block = stack.blocks[b];
    Mat in_p(n, d);
    for (Index j = 0; j < d; ++j)
      in_p.col(j) = cur.col(block.perm[static_cast<std::size_t>(j)]);
    Mat mu, alpha;
    conditioner_forward(block.cond, in_p, mu, alpha,
                        acts ? &acts->blocks[b].cond : nullptr);
    Mat out_p = (in_p - mu).cwiseProduct((-alpha).array().exp().matrix());
    if (!out_p.allFinite())
      throw NumericError("normalize: non-finite value in block " +
                         std::to_string(b));
    logdet -= alpha.rowwise().sum();
    // Restore the original coordinate order; perm only set the
    // autoregressive ordering inside this block.
    for (Index j = 0; j < d; ++j)
      cur.col(block.perm[static_cast<std::size_t>(j)]) = out_p.col(j);
    if (acts) {
      acts->blocks[b].in_p = std::move(in_p);
      acts->blocks[b].mu = std::move(mu);
      acts->blocks[b].alpha = std::move(alpha);
      acts->blocks[b].out_p = std::move(out_p);
    }
  }
  z = std::move(cur);
}

std::pair<Vec, double> normalize(const FlowStack& stack, const Vec& x) {
  Mat z;
  Vec logdet;
  normalize_batch(stack, x.transpose(), z, logdet);
  return {z.row(0).transpose(), logdet[0]};
}

Mat generate_batch(const FlowStack& stack, const Mat& z) {
  if (z.cols() != stack.dim)
    throw ArgError("generate: input dim does not match flow dim");
  const Index n = z.rows();
  const Index d = stack.dim;
  Mat cur = z;
  for (std::size_t bi = stack.blocks.size(); bi-- > 0;) {
    const MafBlock& block = stack.blocks[bi];
    Mat u(n, d);
    for (Index j = 0; j < d; ++j)
      u.col(j) = cur.col(block.perm[static_cast<std::size_t>(j)]);
    // Sequential inversion: mu_j/alpha_j depend only on coordinates < j,
    // already recovered, so the zero-filled tail of p cannot affect them.
    Mat p = Mat::Zero(n, d);
    for (Index j = 0; j < d; ++j) {
      Mat mu, alpha;
      conditioner_forward(block.cond, p, mu, alpha);
      p.col(j) = mu.col(j) +
                 u.col(j).cwiseProduct(alpha.col(j).array().exp().matrix());
    }
    if (!p.allFinite())
      throw NumericError("generate: non-finite value in block " +
                         std::to_string(bi));
    for (Index j = 0; j < d; ++j)
      cur.col(block.perm[static_cast<std::size_t>(j)]) = p.col(j);
  }
  return cur;
}

Vec generate(const FlowStack& stack, const Vec& z) {
  return generate_batch(stack, z.transpose()).row(0).transpose();
}

Mat flow_backward(const FlowStack& stack, const FlowActs& acts, const Mat& d_z,
                  const Vec& d_logdet, Vec& param_grad) {
  if (acts.blocks.size() != stack.blocks.size())
    throw ArgError("flow_backward: activations do not match stack");
  if (param_grad.size() == 0) param_grad = Vec::Zero(stack.param_count());
  if (param_grad.size() != stack.param_count())
    throw ArgError("flow_backward: param_grad has wrong size");
  const Index d = stack.dim;

  std::vector<Index> offsets(stack.blocks.size() + 1, 0);
  for (std::size_t b = 0; b < stack.blocks.size(); ++b)
    offsets[b + 1] = offsets[b] + stack.blocks[b].cond.param_count();

  Mat d_out = d_z;  // gradient w.r.t. the block output, original order
  for (std::size_t b = stack.blocks.size(); b-- > 0;) {
    const MafBlock& block = stack.blocks[b];
    const MaskedConditioner& c = block.cond;
    const FlowActs::Block& a = acts.blocks[b];

    Mat d_u(d_out.rows(), d);
    for (Index j = 0; j < d; ++j)
      d_u.col(j) = d_out.col(block.perm[static_cast<std::size_t>(j)]);

    Mat e = (-a.alpha).array().exp().matrix();
    // u = (p - mu) * e: the alpha gradient through u is -u itself, and the
    // logdet contributes -1 per coordinate.
    Mat d_alpha = -d_u.cwiseProduct(a.out_p);
    d_alpha.colwise() -= d_logdet;
    // Clamped coordinates pass no gradient.
    Mat d_alpha_raw = d_alpha.cwiseProduct(
        (a.cond.alpha_raw.array().abs() < kAlphaClamp).cast<double>().matrix());
    Mat d_mu = -d_u.cwiseProduct(e);
    Mat d_p = d_u.cwiseProduct(e);  // direct affine path; conditioner added below

    // Output heads.  The forward multiplies weights by masks, so the chain
    // rule multiplies these gradients by the same masks.
    Mat d_w_mu = (d_mu.transpose() * a.cond.h3).cwiseProduct(c.m_out);
    Vec d_b_mu = d_mu.colwise().sum().transpose();
    Mat d_w_alpha = (d_alpha_raw.transpose() * a.cond.h3).cwiseProduct(c.m_out);
    Vec d_b_alpha = d_alpha_raw.colwise().sum().transpose();
    Mat d_h3 = d_mu * c.w_mu.cwiseProduct(c.m_out) +
               d_alpha_raw * c.w_alpha.cwiseProduct(c.m_out);

    // Hidden layers; ReLU gradient at exactly 0 is taken as 0.
    Mat d_a3 =
        d_h3.cwiseProduct((a.cond.a3.array() > 0.0).cast<double>().matrix());
    Mat d_w3 = (d_a3.transpose() * a.cond.h2).cwiseProduct(c.m3);
    Vec d_b3 = d_a3.colwise().sum().transpose();
    Mat d_h2 = d_a3 * c.w3.cwiseProduct(c.m3);

    Mat d_a2 =
        d_h2.cwiseProduct((a.cond.a2.array() > 0.0).cast<double>().matrix());
    Mat d_w2 = (d_a2.transpose() * a.cond.h1).cwiseProduct(c.m2);
    Vec d_b2 = d_a2.colwise().sum().transpose();
    Mat d_h1 = d_a2 * c.w2.cwiseProduct(c.m2);

    Mat d_a1 =
        d_h1.cwiseProduct((a.cond.a1.array() > 0.0).cast<double>().matrix());
    Mat d_w1 = (d_a1.transpose() * a.in_p).cwiseProduct(c.m1);
    Vec d_b1 = d_a1.colwise().sum().transpose();
    d_p += d_a1 * c.w1.cwiseProduct(c.m1);

    MaskedConditioner grads;  // same shapes, so the flatten order is reusable
    grads.dim = c.dim;
    grads.hidden = c.hidden;
    grads.w1 = std::move(d_w1);
    grads.b1 = std::move(d_b1);
    grads.w2 = std::move(d_w2);
    grads.b2 = std::move(d_b2);
    grads.w3 = std::move(d_w3);
    grads.b3 = std::move(d_b3);
    grads.w_mu = std::move(d_w_mu);
    grads.b_mu = std::move(d_b_mu);
    grads.w_alpha = std::move(d_w_alpha);
    grads.b_alpha = std::move(d_b_alpha);
    Index pos = offsets[b];
    for_each_tensor(grads, [&](const char* name, const auto& m) {
      if (!m.allFinite())
        throw NumericError("flow_backward: non-finite gradient in block " +
                           std::to_string(b) + " tensor " + name);
      for (Index r = 0; r < m.rows(); ++r)
        for (Index col = 0; col < m.cols(); ++col)
          param_grad[pos++] += m(r, col);
    });

    for (Index j = 0; j < d; ++j)
      d_out.col(block.perm[static_cast<std::size_t>(j)]) = d_p.col(j);
  }
  return d_out;
}

Vec flow_backward_at(const FlowStack& stack, const Vec& x, const Vec& d_z,
                     double d_logdet, Vec& param_grad) {
  Mat z;
  Vec logdet;
  FlowActs acts;
  normalize_batch(stack, x.transpose(), z, logdet, &acts);
  Vec dld(1);
  dld[0] = d_logdet;
  return flow_backward(stack, acts, d_z.transpose(), dld, param_grad)
      .row(0)
      .transpose();
}

// ---------------------------------------------------------------------------
// Serialization.

void write_flow(std::ostream& os, const FlowStack& stack,
                const std::map<std::int64_t, Vec>& prior_means) {
  write_magic(os, kFlowMagic);
  write_u32(os, kFlowVersion);
  write_u32(os, static_cast<std::uint32_t>(stack.dim));
  write_u32(os, static_cast<std::uint32_t>(stack.blocks.size()));
  for (const auto& b : stack.blocks) {
    for (Index j : b.perm) write_u32(os, static_cast<std::uint32_t>(j));
    for (Index h : b.cond.hidden) write_u32(os, static_cast<std::uint32_t>(h));
    for_each_tensor(b.cond, [&](const char*, const auto& m) {
      write_tensor(os, m);
    });
  }
  write_u32(os, static_cast<std::uint32_t>(prior_means.size()));
  for (const auto& [label, mean] : prior_means) {
    if (mean.size() != stack.dim)
      throw DataError("write_flow: prior mean dim mismatch");
    write_i64(os, label);
    write_vec(os, mean);
  }
}

FlowStack read_flow(std::istream& is,
                    std::map<std::int64_t, Vec>* prior_means) {
  expect_magic(is, kFlowMagic);
  std::uint32_t version = read_u32(is, "flow version");
  if (version != kFlowVersion)
    throw DataError("unsupported flow container version " +
                    std::to_string(version));
  auto dim = static_cast<Index>(read_u32(is, "flow dim"));
  auto n_blocks = static_cast<Index>(read_u32(is, "flow block count"));
  if (dim < 2 || n_blocks < 1) throw DataError("flow container: bad shape");
  FlowStack stack;
  stack.dim = dim;
  for (Index b = 0; b < n_blocks; ++b) {
    MafBlock block;
    std::vector<bool> seen(static_cast<std::size_t>(dim), false);
    for (Index j = 0; j < dim; ++j) {
      auto p = static_cast<Index>(read_u32(is, "flow permutation"));
      if (p < 0 || p >= dim || seen[static_cast<std::size_t>(p)])
        throw DataError("flow container: invalid permutation");
      seen[static_cast<std::size_t>(p)] = true;
      block.perm.push_back(p);
    }
    std::array<Index, 3> hidden{};
    for (auto& h : hidden)
      h = static_cast<Index>(read_u32(is, "flow hidden width"));
    block.cond = make_conditioner_shell(dim, hidden);
    for_each_tensor(block.cond, [&](const char* name, auto& m) {
      read_tensor(is, m, std::string("flow tensor ") + name);
    });
    stack.blocks.push_back(std::move(block));
  }
  auto n_priors = static_cast<Index>(read_u32(is, "prior count"));
  std::map<std::int64_t, Vec> priors;
  for (Index i = 0; i < n_priors; ++i) {
    std::int64_t label = read_i64(is, "prior label");
    priors[label] = read_vec(is, dim, "prior mean");
  }
  if (prior_means) *prior_means = std::move(priors);
  return stack;
}

void save_flow(const std::string& path, const FlowStack& stack,
               const std::map<std::int64_t, Vec>& prior_means) {
  std::ostringstream ss;
  write_flow(ss, stack, prior_means);
  write_file_atomic(path, ss.str());
}

FlowStack load_flow(const std::string& path,
                    std::map<std::int64_t, Vec>* prior_means) {
  std::string bytes = read_file(path);
  std::istringstream is(bytes);
  // The text dump shares the leading "DNF1"; byte 4 disambiguates.
  if (bytes.size() > 4 && bytes[4] == '-')
    return read_flow_text(is, prior_means);
  return read_flow(is, prior_means);
}

void write_flow_text(std::ostream& os, const FlowStack& stack,
                     const std::map<std::int64_t, Vec>& prior_means) {
  os << "DNF1-TEXT\n";
  os << "version " << kFlowVersion << "\n";
  os << "dim " << stack.dim << "\n";
  os << "blocks " << stack.blocks.size() << "\n";
  for (std::size_t b = 0; b < stack.blocks.size(); ++b) {
    const auto& block = stack.blocks[b];
    os << "block " << b << "\n";
    os << "perm";
    for (Index j : block.perm) os << ' ' << j;
    os << "\n";
    os << "hidden " << block.cond.hidden[0] << ' ' << block.cond.hidden[1]
       << ' ' << block.cond.hidden[2] << "\n";
    for_each_tensor(block.cond, [&](const char* name, const auto& m) {
      os << name;
      for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) os << ' ' << fmt_g17(m(r, c));
      os << "\n";
    });
  }
  os << "priors " << prior_means.size() << "\n";
  for (const auto& [label, mean] : prior_means) {
    os << "prior " << label;
    for (Index i = 0; i < mean.size(); ++i) os << ' ' << fmt_g17(mean[i]);
    os << "\n";
  }
}

namespace {

void expect_word(std::istream& is, const std::string& want) {
  std::string got;
  if (!(is >> got) || got != want)
    throw DataError("flow text dump: expected \"" + want + "\", got \"" + got +
                    "\"");
}

template <typename T>
T read_value(std::istream& is, const std::string& what) {
  T v{};
  if (!(is >> v)) throw DataError("flow text dump: bad " + what);
  return v;
}

}  // namespace

FlowStack read_flow_text(std::istream& is,
                         std::map<std::int64_t, Vec>* prior_means) {
  expect_word(is, "DNF1-TEXT");
  expect_word(is, "version");
  if (read_value<std::uint32_t>(is, "version") != kFlowVersion)
    throw DataError("unsupported flow text dump version");
  expect_word(is, "dim");
  auto dim = read_value<Index>(is, "dim");
  expect_word(is, "blocks");
  auto n_blocks = read_value<Index>(is, "block count");
  if (dim < 2 || n_blocks < 1) throw DataError("flow text dump: bad shape");
  FlowStack stack;
  stack.dim = dim;
  for (Index b = 0; b < n_blocks; ++b) {
    expect_word(is, "block");
    if (read_value<Index>(is, "block index") != b)
      throw DataError("flow text dump: block out of order");
    MafBlock block;
    expect_word(is, "perm");
    std::vector<bool> seen(static_cast<std::size_t>(dim), false);
    for (Index j = 0; j < dim; ++j) {
      auto p = read_value<Index>(is, "permutation entry");
      if (p < 0 || p >= dim || seen[static_cast<std::size_t>(p)])
        throw DataError("flow text dump: invalid permutation");
      seen[static_cast<std::size_t>(p)] = true;
      block.perm.push_back(p);
    }
    expect_word(is, "hidden");
    std::array<Index, 3> hidden{};
    for (auto& h : hidden) h = read_value<Index>(is, "hidden width");
    block.cond = make_conditioner_shell(dim, hidden);
    for_each_tensor(block.cond, [&](const char* name, auto& m) {
      expect_word(is, name);
      for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c)
          m(r, c) = read_value<double>(is, std::string("tensor ") + name);
    });
    stack.blocks.push_back(std::move(block));
  }
  expect_word(is, "priors");
  auto n_priors = read_value<Index>(is, "prior count");
  std::map<std::int64_t, Vec> priors;
  for (Index i = 0; i < n_priors; ++i) {
    expect_word(is, "prior");
    auto label = read_value<std::int64_t>(is, "prior label");
    Vec mean(dim);
    for (Index j = 0; j < dim; ++j)
      mean[j] = read_value<double>(is, "prior mean");
    priors[label] = std::move(mean);
  }
  if (prior_means) *prior_means = std::move(priors);
  return stack;
}

}  // namespace flownorm
