// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_TYPES_HPP
#define ACTIONFORMER_TYPES_HPP

#include <map>
#include <string>
#include <vector>

namespace actionformer {

/// A labelled temporal segment. Ground truth carries score 1; predictions
/// carry a confidence in (0, 1]. Units (grid steps or seconds) depend on
/// context.
struct ActionInstance {
  double start = 0.0;
  double end = 0.0;
  int label = 0;
  double score = 1.0;

  double length() const { return end - start; }
  double center() const { return 0.5 * (start + end); }
  bool operator==(const ActionInstance&) const = default;
};

using Detection = ActionInstance;

/// Segments keyed by video id.
using DetectionSet = std::map<std::string, std::vector<ActionInstance>>;

}  // namespace actionformer

#endif  // ACTIONFORMER_TYPES_HPP
