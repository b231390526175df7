// flownorm/adam.hpp

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

#ifndef FLOWNORM_ADAM_HPP_
#define FLOWNORM_ADAM_HPP_

#include <cstdint>

#include "flownorm/types.hpp"

namespace flownorm {

struct AdamState {
  Vec m;  // first moment
  Vec v;  // second moment
  double lr = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
};

inline AdamState make_adam(Index n, double lr) {
  AdamState s;
  s.m = Vec::Zero(n);
  s.v = Vec::Zero(n);
  s.lr = lr;
  return s;
}

/// One bias-corrected Adam update, in place.  Throws NumericError naming the
/// first offending index if any gradient entry is non-finite.
void adam_step(Vec& params, const Vec& grads, AdamState& state);

}  // namespace flownorm

#endif  // FLOWNORM_ADAM_HPP_
