// flownorm/plda.hpp

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

#ifndef FLOWNORM_PLDA_HPP_
#define FLOWNORM_PLDA_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "flownorm/dataset.hpp"
#include "flownorm/types.hpp"

namespace flownorm {

/// Two-covariance model: class center y ~ N(mean, between), observation
/// x ~ N(y, within).
struct PldaModel {
  Vec mean;
  Mat between;
  Mat within;

  Index dim() const { return mean.size(); }
};

/// EM fit.  Iteration zero is the moment initialization (global mean and the
/// population scatter matrices); each iteration then re-estimates between and
/// within from the class posteriors with the mean held fixed.  ll_trace, when
/// given, receives the exact marginal log likelihood of the data before each
/// update — it is non-decreasing up to roundoff.
PldaModel plda_fit(const VectorSet& data, int iters = 10,
                   std::vector<double>* ll_trace = nullptr);

/// Verification scorer: log LR between "same class" and "different classes"
/// for a single enroll/test pair.  The quadratic form is arranged in the
/// symmetric variables e + t and e - t, so score(a, b) == score(b, a) exactly
/// (bitwise).  Zero between-covariance degenerates to identically zero.
struct PldaScorer {
  Vec mean;
  Mat q_plus;   // acts on (e + t - 2 mean)
  Mat q_minus;  // acts on (e - t)
  double offset = 0;

  double score(const Vec& enroll, const Vec& test) const;
};

PldaScorer make_scorer(const PldaModel& model);

// Serialized form (magic "PLD1"): dim, mean, between, within as LE f64.
void write_plda(std::ostream& os, const PldaModel& m);
PldaModel read_plda(std::istream& is);
void save_plda(const std::string& path, const PldaModel& m);
PldaModel load_plda(const std::string& path);

}  // namespace flownorm

#endif  // FLOWNORM_PLDA_HPP_
