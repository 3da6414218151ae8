#pragma once

#include <algorithm>

namespace marn {

// Normalized temporal interval on [0, 1].
struct Segment {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

// Intersection over union on the real line; 0 when the union is empty.
inline double iou(const Segment& a, const Segment& b) {
  const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = a.length() + b.length() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

}  // namespace marn
