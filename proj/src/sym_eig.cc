// src/sym_eig.cc

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

#include "flownorm/sym_eig.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace flownorm {

namespace {

double off_diag_norm(const Mat& a) {
  double s = 0.0;
  for (Index p = 0; p < a.rows(); ++p)
    for (Index q = 0; q < a.cols(); ++q)
      if (p != q) s += a(p, q) * a(p, q);
  return std::sqrt(s);
}

}  // namespace

SymEig sym_eig(const Mat& m) {
  if (m.rows() != m.cols()) throw DataError("sym_eig: matrix is not square");
  const Index n = m.rows();
  const double frob = m.norm();
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * frob)
    throw DataError("sym_eig: matrix is not symmetric");

  SymEig out;
  out.values = Vec(n);
  out.vectors = Mat::Identity(n, n);
  if (n == 0) return out;

  Mat a = 0.5 * (m + m.transpose());  // kill roundoff-level asymmetry
  Mat& v = out.vectors;

  // Cyclic-by-row Jacobi sweeps; each rotation zeroes one off-diagonal pair.
  const double tol = 1e-14 * std::max(frob, 1e-300);
  const int max_sweeps = 100;
  bool converged = (off_diag_norm(a) <= tol);
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        double apq = a(p, q);
        if (std::abs(apq) <= 1e-20 * frob) continue;
        double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = t * c;
        // A <- J^T A J with J = I except J(p,p)=J(q,q)=c, J(p,q)=s, J(q,p)=-s.
        double app = a(p, p), aqq = a(q, q);
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = a(q, p) = 0.0;
        for (Index k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          double akp = a(k, p), akq = a(k, q);
          a(k, p) = a(p, k) = c * akp - s * akq;
          a(k, q) = a(q, k) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    converged = (off_diag_norm(a) <= tol);
  }
  if (!converged) throw NumericError("sym_eig: Jacobi sweeps did not converge");

  // Stable descending sort; equal eigenvalues keep their sweep order.
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return a(i, i) > a(j, j); });

  Mat sorted(n, n);
  for (Index i = 0; i < n; ++i) {
    Index src = order[static_cast<std::size_t>(i)];
    out.values[i] = a(src, src);
    sorted.col(i) = v.col(src);
    // Fix the sign: largest-magnitude component (first on ties) positive.
    Index top = 0;
    for (Index k = 1; k < n; ++k)
      if (std::abs(sorted(k, i)) > std::abs(sorted(top, i))) top = k;
    if (sorted(top, i) < 0.0) sorted.col(i) = -sorted.col(i);
  }
  out.vectors = sorted;
  return out;
}

}  // namespace flownorm
