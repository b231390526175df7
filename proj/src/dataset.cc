// src/dataset.cc

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

#include "flownorm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <vector>

#include "flownorm/io_util.hpp"

namespace flownorm {

namespace {

constexpr char kVecMagic[4] = {'V', 'E', 'C', '1'};
constexpr std::uint32_t kVecVersion = 1;

double parse_double(const std::string& tok, const std::string& where) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw DataError("bad number \"" + tok + "\" at " + where);
  return v;
}

std::int64_t parse_i64(const std::string& tok, const std::string& where) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw DataError("bad integer \"" + tok + "\" at " + where);
  return v;
}

bool has_space(const std::string& s) {
  return s.find_first_of(" \t\r\n") != std::string::npos;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

void validate(const VectorSet& set) {
  const auto n = static_cast<std::size_t>(set.x.rows());
  if (set.ids.size() != n || set.labels.size() != n)
    throw DataError("vector set: ids/labels/rows count mismatch");
  std::set<std::string> seen;
  for (const auto& id : set.ids) {
    if (id.empty()) throw DataError("vector set: empty id");
    if (!seen.insert(id).second)
      throw DataError("vector set: duplicate id \"" + id + "\"");
  }
  if (!set.x.allFinite())
    throw DataError("vector set: non-finite vector entry");
}

std::map<std::int64_t, std::vector<Index>> group_by_label(
    const VectorSet& set) {
  std::map<std::int64_t, std::vector<Index>> groups;
  for (Index i = 0; i < set.size(); ++i)
    groups[set.labels[static_cast<std::size_t>(i)]].push_back(i);
  return groups;
}

void write_vectors_text(std::ostream& os, const VectorSet& set) {
  validate(set);
  for (const auto& id : set.ids)
    if (has_space(id))
      throw DataError("id \"" + id + "\" not representable in text form");
  os << "VEC1 " << set.dim() << "\n";
  for (Index i = 0; i < set.size(); ++i) {
    os << set.ids[static_cast<std::size_t>(i)] << ' '
       << set.labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < set.dim(); ++j) os << ' ' << fmt_g17(set.x(i, j));
    os << "\n";
  }
}

void write_vectors_text(const std::string& path, const VectorSet& set) {
  std::ostringstream ss;
  write_vectors_text(ss, set);
  write_file_atomic(path, ss.str());
}

VectorSet read_vectors_text(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("empty vector file");
  std::istringstream head(line);
  std::string magic;
  Index dim = -1;
  head >> magic >> dim;
  if (magic != "VEC1" || dim < 1 || !head || !(head >> std::ws).eof())
    throw DataError("bad vector file header \"" + line + "\"");

  VectorSet set;
  std::vector<Vec> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (blank(line)) continue;
    std::istringstream ls(line);
    std::string id, label_tok;
    ls >> id >> label_tok;
    if (label_tok.empty())
      throw DataError("short record at line " + std::to_string(lineno));
    const std::string where = "line " + std::to_string(lineno);
    Vec v(dim);
    std::string tok;
    for (Index j = 0; j < dim; ++j) {
      if (!(ls >> tok))
        throw DataError("record at " + where + " has fewer than " +
                        std::to_string(dim) + " values");
      v[j] = parse_double(tok, where);
    }
    if (ls >> tok)
      throw DataError("record at " + where + " has trailing fields");
    set.ids.push_back(id);
    set.labels.push_back(parse_i64(label_tok, where));
    rows.push_back(std::move(v));
  }
  set.x = Mat(static_cast<Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i)
    set.x.row(static_cast<Index>(i)) = rows[i].transpose();
  validate(set);
  return set;
}

void write_vectors_binary(std::ostream& os, const VectorSet& set) {
  validate(set);
  write_magic(os, kVecMagic);
  write_u32(os, kVecVersion);
  write_u32(os, static_cast<std::uint32_t>(set.dim()));
  write_u32(os, static_cast<std::uint32_t>(set.size()));
  for (Index i = 0; i < set.size(); ++i) {
    write_string(os, set.ids[static_cast<std::size_t>(i)]);
    write_i64(os, set.labels[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < set.dim(); ++j) write_f64(os, set.x(i, j));
  }
}

void write_vectors_binary(const std::string& path, const VectorSet& set) {
  std::ostringstream ss;
  write_vectors_binary(ss, set);
  write_file_atomic(path, ss.str());
}

VectorSet read_vectors_binary(std::istream& is) {
  expect_magic(is, kVecMagic);
  std::uint32_t version = read_u32(is, "vector file version");
  if (version != kVecVersion)
    throw DataError("unsupported vector file version " +
                    std::to_string(version));
  auto dim = static_cast<Index>(read_u32(is, "vector dim"));
  auto count = static_cast<Index>(read_u32(is, "vector count"));
  if (dim < 1) throw DataError("vector file has dim 0");
  VectorSet set;
  set.x = Mat(count, dim);
  for (Index i = 0; i < count; ++i) {
    set.ids.push_back(read_string(is, "vector id"));
    set.labels.push_back(read_i64(is, "vector label"));
    for (Index j = 0; j < dim; ++j) set.x(i, j) = read_f64(is, "vector value");
  }
  validate(set);
  return set;
}

VectorSet read_vectors(const std::string& path) {
  std::string bytes = read_file(path);
  if (bytes.size() < 5 || bytes.compare(0, 4, "VEC1") != 0)
    throw DataError(path + " is not a vector file (missing VEC1 magic)");
  std::istringstream is(bytes);
  // Text continues "VEC1 <dim>\n"; binary continues with the version word.
  if (bytes[4] == ' ') return read_vectors_text(is);
  return read_vectors_binary(is);
}

void write_trials(const std::string& path, const TrialList& trials) {
  std::ostringstream ss;
  for (const auto& t : trials) {
    if (has_space(t.enroll_id) || has_space(t.test_id))
      throw DataError("trial id not representable in text form");
    ss << t.enroll_id << ' ' << t.test_id << ' '
       << (t.target ? "target" : "nontarget") << "\n";
  }
  write_file_atomic(path, ss.str());
}

TrialList read_trials(const std::string& path) {
  std::istringstream is(read_file(path));
  TrialList trials;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (blank(line)) continue;
    std::istringstream ls(line);
    Trial t;
    std::string kind, extra;
    ls >> t.enroll_id >> t.test_id >> kind;
    if (kind == "target")
      t.target = true;
    else if (kind == "nontarget")
      t.target = false;
    else
      throw DataError("bad trial line " + std::to_string(lineno) + " in " +
                      path);
    if (ls >> extra)
      throw DataError("trailing fields on trial line " +
                      std::to_string(lineno) + " in " + path);
    trials.push_back(std::move(t));
  }
  return trials;
}

void write_scores(const std::string& path,
                  const std::vector<ScoredTrial>& scores) {
  std::ostringstream ss;
  for (const auto& s : scores) {
    if (has_space(s.enroll_id) || has_space(s.test_id))
      throw DataError("score id not representable in text form");
    ss << s.enroll_id << ' ' << s.test_id << ' ' << fmt_g17(s.score) << "\n";
  }
  write_file_atomic(path, ss.str());
}

std::vector<ScoredTrial> read_scores(const std::string& path) {
  std::istringstream is(read_file(path));
  std::vector<ScoredTrial> scores;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (blank(line)) continue;
    std::istringstream ls(line);
    ScoredTrial s;
    std::string score_tok, extra;
    ls >> s.enroll_id >> s.test_id >> score_tok;
    if (score_tok.empty() || (ls >> extra))
      throw DataError("bad score line " + std::to_string(lineno) + " in " +
                      path);
    s.score =
        parse_double(score_tok, "line " + std::to_string(lineno) + " of " + path);
    scores.push_back(std::move(s));
  }
  return scores;
}

}  // namespace flownorm
