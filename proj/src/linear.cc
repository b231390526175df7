// src/linear.cc

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

#include "flownorm/linear.hpp"

#include <cmath>
#include <filesystem>
#include <istream>
#include <ostream>
#include <sstream>

#include "flownorm/io_util.hpp"
#include "flownorm/sym_eig.hpp"

namespace flownorm {

namespace {

constexpr char kLinMagic[4] = {'L', 'I', 'N', '1'};
constexpr std::uint32_t kLinVersion = 1;

Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

/// Eigendecomposition with the scatter-regularization rule: when the matrix
/// is singular or has condition number beyond 1e10, add 1e-8*trace/D on the
/// diagonal (warned) and decompose that instead.
SymEig eig_regularized(Mat m, const std::string& what) {
  SymEig e = sym_eig(m);
  const Index d = m.rows();
  double lmax = e.values[0];
  double lmin = e.values[d - 1];
  if (!(lmin > 0.0) || lmax / lmin > 1e10) {
    double ridge = 1e-8 * m.trace() / static_cast<double>(d);
    if (!(ridge > 0.0)) ridge = 1e-12;
    warn(what + ": near-singular matrix, adding ridge " + fmt_g17(ridge));
    m += ridge * Mat::Identity(d, d);
    e = sym_eig(m);
  }
  return e;
}

/// W such that W m W^T = I, rows ordered by descending eigenvalue of m.
Mat whitener_of(const Mat& m, const std::string& what) {
  SymEig e = eig_regularized(m, what);
  Mat w = e.vectors.transpose();
  for (Index i = 0; i < w.rows(); ++i) w.row(i) /= std::sqrt(e.values[i]);
  return w;
}

}  // namespace

ScatterStats compute_scatter(const VectorSet& data) {
  validate(data);
  auto groups = group_by_label(data);
  if (groups.size() < 2)
    throw DataError("compute_scatter: between-class scatter is degenerate "
                    "with a single class");
  const Index d = data.dim();
  const auto n = static_cast<double>(data.size());

  ScatterStats s;
  s.n_samples = data.size();
  s.n_classes = static_cast<Index>(groups.size());
  s.mean = data.x.colwise().mean().transpose();
  s.within = Mat::Zero(d, d);
  s.between = Mat::Zero(d, d);
  for (const auto& [label, rows] : groups) {
    Mat xc(static_cast<Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i)
      xc.row(static_cast<Index>(i)) = data.x.row(rows[i]);
    Vec cmean = xc.colwise().mean().transpose();
    xc.rowwise() -= cmean.transpose();
    s.within += xc.transpose() * xc;
    Vec diff = cmean - s.mean;
    s.between += static_cast<double>(rows.size()) * (diff * diff.transpose());
  }
  // Population convention (divide by N), so within + between is exactly the
  // total covariance.
  s.within = symmetrized(s.within / n);
  s.between = symmetrized(s.between / n);
  return s;
}

Vec length_normalize(const Vec& x) {
  double norm = x.norm();
  if (norm == 0.0) throw DataError("length_normalize: zero vector");
  return x * (std::sqrt(static_cast<double>(x.size())) / norm);
}

VectorSet length_normalize_set(const VectorSet& in) {
  VectorSet out = in;
  for (Index i = 0; i < out.size(); ++i)
    out.x.row(i) = length_normalize(out.x.row(i).transpose()).transpose();
  return out;
}

LinearTransform make_length_norm() {
  LinearTransform t;
  t.kind = "lengthnorm";
  return t;
}

LinearTransform lda_fit(const VectorSet& data, Index out_dim, double lambda) {
  if (lambda < 0.0) throw ArgError("lda_fit: lambda must be >= 0");
  ScatterStats s = compute_scatter(data);
  const Index d = data.dim();
  const Index max_discriminant = std::min<Index>(d, s.n_classes - 1);
  if (out_dim == 0) out_dim = max_discriminant;
  if (out_dim > d) {
    warn("lda_fit: out_dim " + std::to_string(out_dim) + " clipped to " +
         std::to_string(d));
    out_dim = d;
  }

  // Whiten lambda*Sb + Sw, then rotate onto the between-class axes of the
  // whitened space: the rows solve the generalized eigenproblem of the
  // pencil (Sb, lambda*Sb + Sw).
  Mat w = whitener_of(symmetrized(lambda * s.between + s.within),
                      "lda_fit");
  Mat b = symmetrized(w * s.between * w.transpose());
  SymEig be = sym_eig(b);
  Mat rows = be.vectors.transpose() * w;

  LinearTransform t;
  t.kind = "lda";
  t.offset = s.mean;
  t.projection = rows.topRows(out_dim);
  // Unit projected within-class variance per retained row.
  for (Index i = 0; i < out_dim; ++i) {
    double v = t.projection.row(i) * s.within * t.projection.row(i).transpose();
    if (v > 0.0)
      t.projection.row(i) /= std::sqrt(v);
    else
      warn("lda_fit: row " + std::to_string(i) +
           " has zero projected within-class variance; left unscaled");
  }
  return t;
}

LinearTransform ldan_fit(const VectorSet& data) {
  ScatterStats s = compute_scatter(data);
  LinearTransform t;
  t.kind = "ldan";
  t.offset = s.mean;
  t.projection = whitener_of(s.within, "ldan_fit");
  return t;
}

LinearTransform whiten_fit(const VectorSet& data) {
  validate(data);
  if (data.size() < 2) throw DataError("whiten_fit: need at least 2 samples");
  Vec mean = data.x.colwise().mean().transpose();
  Mat centered = data.x.rowwise() - mean.transpose();
  Mat total = symmetrized(centered.transpose() * centered /
                          static_cast<double>(data.size()));
  LinearTransform t;
  t.kind = "whiten";
  t.offset = mean;
  t.projection = whitener_of(total, "whiten_fit");
  return t;
}

LinearTransform pca_fit(const VectorSet& data, Index out_dim) {
  validate(data);
  if (data.size() < 2) throw DataError("pca_fit: need at least 2 samples");
  const Index d = data.dim();
  if (out_dim == 0) out_dim = d;
  if (out_dim > d) {
    warn("pca_fit: out_dim " + std::to_string(out_dim) + " clipped to " +
         std::to_string(d));
    out_dim = d;
  }
  Vec mean = data.x.colwise().mean().transpose();
  Mat centered = data.x.rowwise() - mean.transpose();
  Mat total = symmetrized(centered.transpose() * centered /
                          static_cast<double>(data.size()));
  SymEig e = sym_eig(total);
  LinearTransform t;
  t.kind = "pca";
  t.offset = mean;
  t.projection = e.vectors.leftCols(out_dim).transpose();
  return t;
}

Vec apply(const LinearTransform& t, const Vec& x) {
  if (t.kind == "lengthnorm") return length_normalize(x);
  if (x.size() != t.in_dim())
    throw DataError("apply: vector dim " + std::to_string(x.size()) +
                    " does not match transform input dim " +
                    std::to_string(t.in_dim()));
  return t.projection * (x - t.offset);
}

VectorSet apply_set(const LinearTransform& t, const VectorSet& in) {
  VectorSet out;
  out.ids = in.ids;
  out.labels = in.labels;
  if (t.kind == "lengthnorm") return length_normalize_set(in);
  if (in.dim() != t.in_dim())
    throw DataError("apply: set dim does not match transform input dim");
  out.x = (in.x.rowwise() - t.offset.transpose()) * t.projection.transpose();
  return out;
}

void write_linear(std::ostream& os, const LinearTransform& t) {
  write_magic(os, kLinMagic);
  write_u32(os, kLinVersion);
  write_string(os, t.kind);
  write_u32(os, static_cast<std::uint32_t>(t.in_dim()));
  write_u32(os, static_cast<std::uint32_t>(t.out_dim()));
  write_vec(os, t.offset);
  write_mat(os, t.projection);
}

LinearTransform read_linear(std::istream& is) {
  expect_magic(is, kLinMagic);
  std::uint32_t version = read_u32(is, "linear transform version");
  if (version != kLinVersion)
    throw DataError("unsupported linear transform version " +
                    std::to_string(version));
  LinearTransform t;
  t.kind = read_string(is, "linear transform kind");
  if (t.kind != "lda" && t.kind != "ldan" && t.kind != "whiten" &&
      t.kind != "pca" && t.kind != "lengthnorm")
    throw DataError("unknown linear transform kind \"" + t.kind + "\"");
  auto in_dim = static_cast<Index>(read_u32(is, "linear transform in_dim"));
  auto out_dim = static_cast<Index>(read_u32(is, "linear transform out_dim"));
  t.offset = read_vec(is, in_dim, "linear transform offset");
  t.projection = read_mat(is, out_dim, in_dim, "linear transform projection");
  if (!t.offset.allFinite() || !t.projection.allFinite())
    throw DataError("linear transform contains non-finite values");
  return t;
}

void save_linear(const std::string& path, const LinearTransform& t) {
  std::ostringstream ss;
  write_linear(ss, t);
  write_file_atomic(path, ss.str());
}

LinearTransform load_linear(const std::string& path) {
  std::istringstream is(read_file(path));
  return read_linear(is);
}

void Pipeline::add_linear(LinearTransform t) {
  Stage s;
  s.is_flow = false;
  s.linear = std::move(t);
  stages_.push_back(std::move(s));
}

void Pipeline::add_flow(FlowStack f) {
  Stage s;
  s.is_flow = true;
  s.flow = std::move(f);
  stages_.push_back(std::move(s));
}

Vec Pipeline::apply(const Vec& x) const {
  Vec cur = x;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const Stage& s = stages_[i];
    try {
      cur = s.is_flow ? normalize(s.flow, cur).first
                      : flownorm::apply(s.linear, cur);
    } catch (const DataError& e) {
      throw DataError("pipeline stage " + std::to_string(i) + ": " + e.what());
    }
  }
  return cur;
}

VectorSet Pipeline::apply_set(const VectorSet& in) const {
  VectorSet cur = in;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const Stage& s = stages_[i];
    try {
      if (s.is_flow) {
        if (cur.dim() != s.flow.dim)
          throw DataError("set dim does not match flow dim");
        Vec logdet;
        Mat z;
        normalize_batch(s.flow, cur.x, z, logdet);
        cur.x = std::move(z);
      } else {
        cur = flownorm::apply_set(s.linear, cur);
      }
    } catch (const DataError& e) {
      throw DataError("pipeline stage " + std::to_string(i) + ": " + e.what());
    }
  }
  return cur;
}

Pipeline Pipeline::from_model_files(const std::vector<std::string>& paths) {
  Pipeline p;
  for (const auto& path : paths) {
    std::string bytes = read_file(path);
    if (bytes.size() >= 4 && bytes.compare(0, 4, "LIN1") == 0) {
      std::istringstream is(bytes);
      p.add_linear(read_linear(is));
    } else if (bytes.size() >= 4 && bytes.compare(0, 4, "DNF1") == 0) {
      p.add_flow(load_flow(path));
    } else {
      throw DataError(path + ": unknown model magic (want LIN1 or DNF1)");
    }
  }
  return p;
}

Pipeline Pipeline::from_manifest(const std::string& manifest_path) {
  std::istringstream is(read_file(manifest_path));
  std::filesystem::path base =
      std::filesystem::path(manifest_path).parent_path();
  std::vector<std::string> paths;
  std::string line;
  while (std::getline(is, line)) {
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    std::string entry = line.substr(first, last - first + 1);
    if (entry[0] == '#') continue;
    std::filesystem::path p(entry);
    if (p.is_relative()) p = base / p;
    paths.push_back(p.string());
  }
  if (paths.empty())
    throw DataError(manifest_path + ": manifest lists no stages");
  return from_model_files(paths);
}

}  // namespace flownorm
