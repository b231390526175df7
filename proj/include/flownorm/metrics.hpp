// flownorm/metrics.hpp

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

#ifndef FLOWNORM_METRICS_HPP_
#define FLOWNORM_METRICS_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "flownorm/dataset.hpp"
#include "flownorm/dnf.hpp"
#include "flownorm/linear.hpp"
#include "flownorm/types.hpp"

namespace flownorm {

/// Cosine similarity; a zero vector on either side is a DataError.
double cosine_score(const Vec& a, const Vec& b);

struct EerResult {
  double eer = 0;
  double threshold = 0;
};

/// Equal error rate of "accept iff score >= threshold".  The FAR and FRR
/// staircases are swept over the pooled unique scores and the crossing of
/// FRR - FAR is located by linear interpolation between adjacent candidate
/// thresholds, so eer is exact for the interpolated curves.  Both lists must
/// be non-empty.
EerResult eer(const std::vector<double>& target_scores,
              const std::vector<double>& imposter_scores);

/// Distribution-regularity diagnostics over classes with at least
/// min_class_samples samples.  Each qualifying class gets its own PCA;
/// moments are taken on the class's centered projections onto its first k
/// principal directions, then averaged over classes and PCs.  Kurtosis is
/// excess kurtosis m4/m2^2 - 3 (avg_kurtosis keeps the sign,
/// avg_kurtosis_abs folds it); skewness is m3/m2^{3/2} (avg_skewness folds
/// the sign so classes cannot cancel, avg_skewness_signed keeps it).
/// pc_dir_var[m] is the variance across classes of the cosine between each
/// class's m-th principal direction and their sign-aligned mean direction;
/// pc_shape_var[m] is the variance across classes of the m-th eigenvalue.
/// between_var/within_var are mean diagonals of the scatter matrices of the
/// qualifying subset.
struct RegulationReport {
  Index n_classes_used = 0;
  Index n_classes_skipped = 0;
  double avg_kurtosis = 0;
  double avg_kurtosis_abs = 0;
  double avg_skewness = 0;  // mean of |skew|
  double avg_skewness_signed = 0;
  std::vector<double> pc_dir_var;    // k entries
  std::vector<double> pc_shape_var;  // k entries
  double avg_pc_dir_var = 0;
  double pc_shape_var_avg = 0;
  double between_var = 0;  // mean diagonal of the between scatter
  double within_var = 0;   // mean diagonal of the within scatter
  double bw_ratio = 0;
};

RegulationReport regulation_report(const VectorSet& data, Index k = 10,
                                   Index min_class_samples = 100);

/// Class-separability diagnostics: mean cross entropy of the class-center
/// softmax under inner-product and cosine logits, the between/within variance
/// ratio, and the exhaustive-pair cosine EER.  centers supplies the per-class
/// reference vectors (e.g. trained prior means); when empty the empirical
/// class means of data are used.  A data label missing from a non-empty
/// centers map is a DataError.
struct DiscriminationReport {
  double ce_inner = 0;
  double ce_cosine = 0;
  double between_var = 0;
  double within_var = 0;
  double bw_ratio = 0;
  double train_eer_cosine = 0;
};

DiscriminationReport discrimination_report(const VectorSet& data,
                                           const ClassPriors& centers = {});

/// Diagnostics over contiguous groups of discriminant-sorted dimensions:
/// the transform (an lda fit, rows sorted by discriminant rank) is applied,
/// the out_dim coordinates are cut into out_dim/group_size groups, and each
/// group gets its own regulation report plus the exhaustive-pair cosine EER
/// on the group's coordinates alone.  out_dim must split evenly into at
/// least two groups.
struct SubgroupReport {
  Index first_dim = 0;
  Index group_size = 0;
  RegulationReport regulation;
  double cosine_eer = 0;
  double between_var = 0;
};

std::vector<SubgroupReport> subgroup_report(const VectorSet& data,
                                            const LinearTransform& transform,
                                            Index group_size, Index k = 10,
                                            Index min_class_samples = 100);

// Human-readable aligned-text writers used by the stats subcommands.
void print_regulation(std::ostream& os, const RegulationReport& r);
void print_discrimination(std::ostream& os, const DiscriminationReport& r);
void print_subgroups(std::ostream& os, const std::vector<SubgroupReport>& rs);

}  // namespace flownorm

#endif  // FLOWNORM_METRICS_HPP_
