// flownorm/linear.hpp

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

#ifndef FLOWNORM_LINEAR_HPP_
#define FLOWNORM_LINEAR_HPP_

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "flownorm/dataset.hpp"
#include "flownorm/flow.hpp"
#include "flownorm/types.hpp"

namespace flownorm {

/// x -> projection * (x - offset).  kind records which fit produced it;
/// "lengthnorm" is a marker stage (empty matrices) applied as
/// x * sqrt(D) / ||x||.
struct LinearTransform {
  std::string kind;  // "lda" | "ldan" | "whiten" | "pca" | "lengthnorm"
  Vec offset;
  Mat projection;  // out_dim x in_dim

  Index in_dim() const { return projection.cols(); }
  Index out_dim() const { return projection.rows(); }
};

/// Population-convention scatter (divide by N): within = pooled per-class
/// covariance, between = count-weighted covariance of the class means, so
/// within + between equals the total covariance exactly.
struct ScatterStats {
  Vec mean;
  Mat within;
  Mat between;
  Index n_samples = 0;
  Index n_classes = 0;
};

ScatterStats compute_scatter(const VectorSet& data);

/// Rescales x to norm sqrt(D), so each coordinate is O(1) on average.
/// Throws DataError on a zero vector.
Vec length_normalize(const Vec& x);
VectorSet length_normalize_set(const VectorSet& in);
LinearTransform make_length_norm();

/// Rows maximize between/within variance ratios: whiten lambda*Sb + Sw,
/// eigendecompose the whitened Sb, keep the leading out_dim directions, and
/// rescale each row to unit projected within-class variance.  out_dim = 0
/// keeps min(dim, classes-1); larger requests are honored up to dim (with a
/// warning past classes-1 territory only when clipped).  A near-singular
/// lambda*Sb + Sw gets a small ridge and a warning.
LinearTransform lda_fit(const VectorSet& data, Index out_dim = 0,
                        double lambda = 0.1);

/// Full-rank within-class whitening: projected Sw = I, dimension kept.
LinearTransform ldan_fit(const VectorSet& data);

/// Total-covariance whitening (zero-mean, identity covariance overall).
LinearTransform whiten_fit(const VectorSet& data);

/// Leading principal directions of the total covariance, no rescaling.
/// out_dim = 0 keeps all dimensions.
LinearTransform pca_fit(const VectorSet& data, Index out_dim = 0);

Vec apply(const LinearTransform& t, const Vec& x);
VectorSet apply_set(const LinearTransform& t, const VectorSet& in);

// Serialized form (magic "LIN1"): kind string, dims, offset, projection.
void write_linear(std::ostream& os, const LinearTransform& t);
LinearTransform read_linear(std::istream& is);
void save_linear(const std::string& path, const LinearTransform& t);
LinearTransform load_linear(const std::string& path);

/// An ordered chain of saved model stages.  The manifest file is one stage
/// path per line (relative paths resolve against the manifest's directory,
/// blank lines and #-comments skipped); each stage file is identified by its
/// leading magic (LIN1 or DNF1).
class Pipeline {
 public:
  struct Stage {
    bool is_flow = false;
    LinearTransform linear;
    FlowStack flow;
  };

  void add_linear(LinearTransform t);
  void add_flow(FlowStack f);

  Vec apply(const Vec& x) const;
  VectorSet apply_set(const VectorSet& in) const;

  Index size() const { return static_cast<Index>(stages_.size()); }
  const Stage& stage(Index i) const { return stages_[static_cast<size_t>(i)]; }

  static Pipeline from_manifest(const std::string& manifest_path);
  static Pipeline from_model_files(const std::vector<std::string>& paths);

 private:
  std::vector<Stage> stages_;
};

}  // namespace flownorm

#endif  // FLOWNORM_LINEAR_HPP_
