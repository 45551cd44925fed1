#pragma once

#include <vector>

#include "ovvrd/core/error.hpp"

namespace ovvrd {

// Uniform frame sampling: index_i = floor(i * frame_count / n). Always
// returns exactly n non-decreasing indices in [0, frame_count); indices
// repeat when frame_count < n.
inline std::vector<int> sample_frames(int frame_count, int n = 30) {
  if (frame_count < 1) throw ValidationError("sample_frames: frame_count < 1");
  if (n < 1) throw ValidationError("sample_frames: n < 1");
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] =
        static_cast<int>((static_cast<long long>(i) * frame_count) / n);
  }
  return out;
}

}  // namespace ovvrd
