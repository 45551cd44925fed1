#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "ovvrd/core/error.hpp"

namespace ovvrd {

// Axis-aligned box in pixel coordinates. Invariants: x1 < x2, y1 < y2, all
// coordinates finite and >= 0.
struct BBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }

  bool valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
           std::isfinite(y2) && x1 >= 0.0 && y1 >= 0.0 && x1 < x2 && y1 < y2;
  }

  void validate(const std::string& context = "bbox") const {
    if (!valid()) {
      throw ValidationError(context + ": invalid box [" + std::to_string(x1) +
                            "," + std::to_string(y1) + "," + std::to_string(x2) +
                            "," + std::to_string(y2) + "]");
    }
  }

  bool contains(const BBox& other) const {
    return x1 <= other.x1 && y1 <= other.y1 && x2 >= other.x2 && y2 >= other.y2;
  }

  // Integer-quantized corners, used as a stable hashing key.
  std::array<std::int64_t, 4> quantized() const {
    return {static_cast<std::int64_t>(std::llround(x1)),
            static_cast<std::int64_t>(std::llround(y1)),
            static_cast<std::int64_t>(std::llround(x2)),
            static_cast<std::int64_t>(std::llround(y2))};
  }

  friend bool operator==(const BBox& a, const BBox& b) {
    return a.x1 == b.x1 && a.y1 == b.y1 && a.x2 == b.x2 && a.y2 == b.y2;
  }
};

// Minimal axis-aligned box containing both inputs.
inline BBox union_box(const BBox& a, const BBox& b) {
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
          std::max(a.y2, b.y2)};
}

inline double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

inline double union_area(const BBox& a, const BBox& b) {
  return a.area() + b.area() - intersection_area(a, b);
}

inline double iou(const BBox& a, const BBox& b) {
  const double u = union_area(a, b);
  return u > 0.0 ? intersection_area(a, b) / u : 0.0;
}

}  // namespace ovvrd
