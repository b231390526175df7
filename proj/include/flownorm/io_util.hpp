// flownorm/io_util.hpp

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

#ifndef FLOWNORM_IO_UTIL_HPP_
#define FLOWNORM_IO_UTIL_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>

#include "flownorm/types.hpp"

namespace flownorm {

// All binary containers use explicit little-endian encoding, regardless of
// host byte order.

void write_u32(std::ostream& os, std::uint32_t v);
void write_i64(std::ostream& os, std::int64_t v);
void write_f64(std::ostream& os, double v);
void write_string(std::ostream& os, const std::string& s);  // u32 length + bytes
void write_mat(std::ostream& os, const Mat& m);             // row-major f64, no header
void write_vec(std::ostream& os, const Vec& v);

std::uint32_t read_u32(std::istream& is, const std::string& what);
std::int64_t read_i64(std::istream& is, const std::string& what);
double read_f64(std::istream& is, const std::string& what);
std::string read_string(std::istream& is, const std::string& what);
Mat read_mat(std::istream& is, Index rows, Index cols, const std::string& what);
Vec read_vec(std::istream& is, Index n, const std::string& what);

/// Checks a 4-byte magic; throws DataError naming the expected magic.
void expect_magic(std::istream& is, const char magic[4]);
void write_magic(std::ostream& os, const char magic[4]);

/// Writes the buffer to path via a temporary file plus rename, so readers
/// never observe a partial file.
void write_file_atomic(const std::string& path, const std::string& bytes);

std::string read_file(const std::string& path);

/// Formats a double with enough digits to round-trip exactly.
std::string fmt_g17(double v);

}  // namespace flownorm

#endif  // FLOWNORM_IO_UTIL_HPP_
