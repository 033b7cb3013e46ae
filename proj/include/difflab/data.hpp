#pragma once

#include <cstddef>
#include <vector>

namespace difflab {

using Vec = std::vector<double>;

// Per-coordinate axis-aligned box.
struct Bounds {
  Vec lo, hi;
};

// Labeled samples shared by the trainers, attacks, and evaluation loops.
struct Dataset {
  int dim = 0;
  int num_classes = 0;
  std::vector<Vec> x;
  std::vector<int> y;

  std::size_t size() const { return x.size(); }
  bool empty() const { return x.empty(); }
  Bounds bounding_box() const;
};

}  // namespace difflab
