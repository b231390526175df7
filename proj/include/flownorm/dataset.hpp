// flownorm/dataset.hpp

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

#ifndef FLOWNORM_DATASET_HPP_
#define FLOWNORM_DATASET_HPP_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "flownorm/types.hpp"

namespace flownorm {

/// A labeled set of embedding vectors.  Row i of x belongs to ids[i] /
/// labels[i].  Ids are unique and every entry is finite.
struct VectorSet {
  std::vector<std::string> ids;
  std::vector<std::int64_t> labels;
  Mat x;  // n x dim, one vector per row

  Index size() const { return x.rows(); }
  Index dim() const { return x.cols(); }
};

/// Throws DataError on duplicate ids, shape mismatch, or non-finite entries.
void validate(const VectorSet& set);

/// Record indices per class label, labels in ascending order.
std::map<std::int64_t, std::vector<Index>> group_by_label(const VectorSet& set);

// Vector file formats.
//
// Text:   header line "VEC1 <dim>", then one record per line:
//         "<id> <label> <v1> ... <vD>", whitespace separated.
// Binary: magic "VEC1", u32 version, u32 dim, u32 count, then per record a
//         length-prefixed id, i64 label, and dim little-endian f64 values.

void write_vectors_text(std::ostream& os, const VectorSet& set);
void write_vectors_text(const std::string& path, const VectorSet& set);
VectorSet read_vectors_text(std::istream& is);

void write_vectors_binary(std::ostream& os, const VectorSet& set);
void write_vectors_binary(const std::string& path, const VectorSet& set);
VectorSet read_vectors_binary(std::istream& is);

/// Reads either form, sniffing the byte after the shared "VEC1" magic (text
/// continues "VEC1 <digits>\n"; binary continues with the version word).
VectorSet read_vectors(const std::string& path);

/// One verification trial.  Ids must resolve in the scored VectorSet.
struct Trial {
  std::string enroll_id;
  std::string test_id;
  bool target = false;
};

using TrialList = std::vector<Trial>;

// Trial list text format: "<enroll_id> <test_id> target|nontarget" per line.
void write_trials(const std::string& path, const TrialList& trials);
TrialList read_trials(const std::string& path);

/// One scored trial, one line per trial: "<enroll_id> <test_id> <score>".
struct ScoredTrial {
  std::string enroll_id;
  std::string test_id;
  double score = 0.0;
};

void write_scores(const std::string& path, const std::vector<ScoredTrial>& scores);
std::vector<ScoredTrial> read_scores(const std::string& path);

}  // namespace flownorm

#endif  // FLOWNORM_DATASET_HPP_
