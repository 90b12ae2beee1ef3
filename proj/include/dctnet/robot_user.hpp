#pragma once

// Deterministic robot user: places the click a person following the
// click-and-drag protocol would place, and reports the drag radius.

#include <algorithm>
#include <optional>

#include "dctnet/click_encoding.hpp"
#include "dctnet/raster.hpp"

namespace dctnet {

struct SimulatedInteraction {
  std::optional<Click> click;  // absent when converged
  std::size_t target_region_size = 0;
  bool converged = false;
};

inline constexpr double kMinRadius = 1.0;

// Pixel of `region` with the largest distance value; ties go to the smallest
// (y, x). Returns nullopt when the region is empty.
inline std::optional<Pixel> argmax_in_region(const DistanceMap& dist, const BinaryMask& region) {
  std::optional<Pixel> best;
  double best_value = -1.0;
  // Raster order visits candidates in tie-break order, so strict > keeps the first.
  for (int y = 0; y < region.height(); ++y)
    for (int x = 0; x < region.width(); ++x)
      if (region.test(x, y) && dist(x, y) > best_value) {
        best_value = dist(x, y);
        best = Pixel{x, y};
      }
  return best;
}

// Label of the largest component; ties go to the component whose first pixel
// comes first in raster order, i.e. the smallest label.
inline int largest_component(const ComponentLabeling& cc) {
  int best = 0;
  std::size_t best_size = 0;
  for (int label = 1; label <= cc.count(); ++label)
    if (cc.size_of(label) > best_size) {
      best_size = cc.size_of(label);
      best = label;
    }
  return best;
}

// First click: positive, on the object pixel farthest from the boundary,
// with that distance as the drag radius.
inline SimulatedInteraction first_click(const BinaryMask& gt) {
  require_valid(gt);
  if (!gt.any()) throw InvalidInput("ground truth has no foreground");
  const DistanceMap dist = edt(gt);
  const Pixel p = *argmax_in_region(dist, gt);
  Click c{double(p.x), double(p.y), Polarity::positive, std::max(dist(p.x, p.y), kMinRadius)};
  const auto cc = connected_components(gt, Connectivity::four);
  return SimulatedInteraction{c, cc.size_of(cc.labels(p.x, p.y)), false};
}

// Corrective click at the interior-most pixel of the largest 4-connected
// mislabelled region. Pixels set in `ignore` never count as mislabelled.
inline SimulatedInteraction next_click(const BinaryMask& gt, const BinaryMask& pred,
                                       const BinaryMask* ignore = nullptr) {
  BinaryMask wrong = mask_xor(gt, pred);
  if (ignore) {
    require_same_size(gt, *ignore);
    for (std::size_t i = 0; i < wrong.size(); ++i)
      if ((*ignore)[i]) wrong[i] = 0;
  }
  if (!wrong.any()) return SimulatedInteraction{std::nullopt, 0, true};

  const auto cc = connected_components(wrong, Connectivity::four);
  const int label = largest_component(cc);
  BinaryMask region(gt.width(), gt.height());
  for (std::size_t i = 0; i < region.size(); ++i) region[i] = cc.labels[i] == label ? 1 : 0;

  const DistanceMap dist = edt(region);
  const Pixel p = *argmax_in_region(dist, region);
  const Polarity pol = gt.test(p.x, p.y) ? Polarity::positive : Polarity::negative;
  Click c{double(p.x), double(p.y), pol, std::max(dist(p.x, p.y), kMinRadius)};
  return SimulatedInteraction{c, cc.size_of(label), false};
}

}  // namespace dctnet
