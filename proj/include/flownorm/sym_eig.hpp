// flownorm/sym_eig.hpp

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

#ifndef FLOWNORM_SYM_EIG_HPP_
#define FLOWNORM_SYM_EIG_HPP_

#include "flownorm/types.hpp"

namespace flownorm {

struct SymEig {
  Vec values;   // descending
  Mat vectors;  // orthonormal columns, vectors.col(i) pairs with values[i]
};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
///
/// The output is deterministic: eigenvalues are sorted descending with ties
/// kept in original coordinate order, and each eigenvector is flipped so its
/// largest-magnitude component is positive.
///
/// Throws DataError if max|M - M^T| > 1e-10 * ||M||_F, and NumericError if
/// the sweeps fail to converge.
SymEig sym_eig(const Mat& m);

}  // namespace flownorm

#endif  // FLOWNORM_SYM_EIG_HPP_
