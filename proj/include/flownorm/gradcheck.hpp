// flownorm/gradcheck.hpp

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

#ifndef FLOWNORM_GRADCHECK_HPP_
#define FLOWNORM_GRADCHECK_HPP_

#include <cmath>

#include "flownorm/types.hpp"

namespace flownorm {

/// Central-difference gradient of a scalar function, one coordinate at a
/// time: g_i = (f(x + h e_i) - f(x - h e_i)) / (2h).  Throws NumericError if
/// any evaluation is non-finite.
template <typename F>
Vec finite_diff_gradient(F&& f, const Vec& x, double h) {
  Vec g(x.size());
  Vec probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    double orig = probe[i];
    probe[i] = orig + h;
    double fp = f(probe);
    probe[i] = orig - h;
    double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_gradient: non-finite evaluation at "
                         "coordinate " + std::to_string(i));
    }
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Symmetric relative error used by the gradient checks.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

}  // namespace flownorm

#endif  // FLOWNORM_GRADCHECK_HPP_
