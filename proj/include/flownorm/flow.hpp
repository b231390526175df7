// flownorm/flow.hpp

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

#ifndef FLOWNORM_FLOW_HPP_
#define FLOWNORM_FLOW_HPP_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "flownorm/rng.hpp"
#include "flownorm/types.hpp"

namespace flownorm {

/// Masked three-hidden-layer MLP producing a shift head mu and a log-scale
/// head alpha, with binary connectivity masks arranged so that mu_j and
/// alpha_j depend only on input coordinates < j (MADE-style degrees: input i
/// carries degree i+1, hidden units cycle degrees 1..dim-1, a hidden unit of
/// degree d sees inputs of degree <= d, and output j sees hidden degrees
/// <= j).  Output 0 is therefore a pure bias.
///
/// Weights are stored unmasked; every use multiplies by the mask, so masked
/// entries receive zero gradient and stay zero under training.
struct MaskedConditioner {
  Index dim = 0;
  std::array<Index, 3> hidden{};
  Mat w1, w2, w3, w_mu, w_alpha;
  Vec b1, b2, b3, b_mu, b_alpha;
  Mat m1, m2, m3, m_out;  // 0/1 masks, same shapes as the weights

  Index param_count() const;
};

/// Hidden weights ~ N(0, 1/fan_in); output heads zero, so the initial
/// transform is exactly the identity.
MaskedConditioner make_conditioner(Index dim, std::array<Index, 3> hidden,
                                   Rng& rng);

/// Layer activations recorded by the forward pass for the backward pass.
struct ConditionerActs {
  Mat in, a1, h1, a2, h2, a3, h3, alpha_raw;
};

/// Batch conditioner evaluation; rows are samples.  alpha is clamped to
/// [-kAlphaClamp, kAlphaClamp] before use so exp cannot overflow.
void conditioner_forward(const MaskedConditioner& c, const Mat& in, Mat& mu,
                         Mat& alpha, ConditionerActs* acts = nullptr);

inline constexpr double kAlphaClamp = 7.0;

/// One masked autoregressive block.  Normalizing direction: permute
/// (p_j = in[perm[j]]), apply the elementwise affine map
/// u_j = (p_j - mu_j(p_{<j})) * exp(-alpha_j(p_{<j})), then restore the
/// original coordinate order (out[perm[j]] = u_j).  The permutation only
/// chooses the autoregressive ordering, so a block with zero conditioner
/// parameters is the identity regardless of perm.
struct MafBlock {
  MaskedConditioner cond;
  std::vector<Index> perm;
};

/// An ordered stack of MAF blocks sharing one dimension.  normalize applies
/// the blocks first to last; generate inverts them last to first.
struct FlowStack {
  Index dim = 0;
  std::vector<MafBlock> blocks;

  Index param_count() const;
  Vec get_params() const;
  void set_params(const Vec& p);
};

/// Identity-initialized stack with the conventional inter-block coordinate
/// reversal (block 0 keeps the input order, later blocks reverse it).
/// hidden = 0 picks hidden widths (dim, dim, dim).
FlowStack make_flow(Index dim, Index n_blocks, Index hidden, Rng& rng);

/// Per-block records for flow_backward, all in the block's permuted order.
struct FlowActs {
  struct Block {
    Mat in_p;  // post-permutation input
    ConditionerActs cond;
    Mat mu, alpha;
    Mat out_p;  // affine output before the order is restored
  };
  std::vector<Block> blocks;
};

/// Normalizing direction z = f^{-1}(x) with the exact log-determinant
/// logdet = sum over blocks and coordinates of -alpha_j (permutations
/// contribute nothing).  Throws NumericError naming the block if an
/// intermediate goes non-finite.
void normalize_batch(const FlowStack& stack, const Mat& x, Mat& z, Vec& logdet,
                     FlowActs* acts = nullptr);
std::pair<Vec, double> normalize(const FlowStack& stack, const Vec& x);

/// Generating direction x = f(z): per block in reverse, coordinate j is
/// recovered sequentially as p_j = mu_j(p_{<j}) + u_j * exp(alpha_j(p_{<j})),
/// then the inverse permutation restores the original order.
Mat generate_batch(const FlowStack& stack, const Mat& z);
Vec generate(const FlowStack& stack, const Vec& z);

/// Exact reverse-mode gradients of
///   L = sum_n <d_z.row(n), z.row(n)> + d_logdet[n] * logdet[n]
/// with respect to every conditioner parameter (accumulated into param_grad,
/// laid out as FlowStack::get_params; an empty param_grad is sized and
/// zeroed first) and the input x (returned).
Mat flow_backward(const FlowStack& stack, const FlowActs& acts, const Mat& d_z,
                  const Vec& d_logdet, Vec& param_grad);

/// Single-sample convenience: runs normalize internally, then the exact
/// backward pass for L = <d_z, z> + d_logdet * logdet.  Returns dL/dx.
Vec flow_backward_at(const FlowStack& stack, const Vec& x, const Vec& d_z,
                     double d_logdet, Vec& param_grad);

// Model container (magic "DNF1"): version, dim, block count, per-block
// permutation, hidden sizes and parameters as little-endian f64, then a
// prior-means section (class count 0 when absent).  The text dump carries
// the same content with round-trip-exact number formatting.

void write_flow(std::ostream& os, const FlowStack& stack,
                const std::map<std::int64_t, Vec>& prior_means = {});
FlowStack read_flow(std::istream& is,
                    std::map<std::int64_t, Vec>* prior_means = nullptr);
void save_flow(const std::string& path, const FlowStack& stack,
               const std::map<std::int64_t, Vec>& prior_means = {});
FlowStack load_flow(const std::string& path,
                    std::map<std::int64_t, Vec>* prior_means = nullptr);

void write_flow_text(std::ostream& os, const FlowStack& stack,
                     const std::map<std::int64_t, Vec>& prior_means = {});
FlowStack read_flow_text(std::istream& is,
                         std::map<std::int64_t, Vec>* prior_means = nullptr);

}  // namespace flownorm

#endif  // FLOWNORM_FLOW_HPP_
