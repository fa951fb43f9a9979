#pragma once

#include <cstdint>
#include <vector>

#include "hairshift/types.hpp"

namespace hairshift {

inline constexpr int kDefaultStyleRegions = 5;
inline constexpr double kDefaultSlicCompactness = 10.0;
inline constexpr int kDefaultSlicIters = 10;

// Labeled superpixel partition of a hair mask. Region masks are pairwise
// disjoint and their union equals the hair mask. Centroids live in the scaled
// clustering space (x, y scaled by compactness/S, then L, a, b).
struct StyleRegionSet {
    std::vector<BinaryMask> masks;
    std::vector<int> labels;
    Tensor centroids;  // {N, 5}
    int source_step = 0;

    std::size_t region_count() const { return masks.size(); }
    void validate_partition(const BinaryMask& hair_mask) const;
};

// Masked SLIC: k-means over (scaled x, scaled y, L, a, b) restricted to the
// hair mask, grid-seeded, with a connectivity pass that folds orphan
// fragments into the adjacent region of nearest centroid. `energy_trace`,
// when given, receives the (non-increasing) k-means energy after each
// iteration. `seed` is reserved for stochastic seeding variants; the default
// grid seeding is fully deterministic.
StyleRegionSet slic_hair(const Image& img, const BinaryMask& hair_mask, int n_regions,
                         double compactness = kDefaultSlicCompactness,
                         int iters = kDefaultSlicIters, std::uint64_t seed = 0,
                         std::vector<double>* energy_trace = nullptr);

// Relabel `curr` so each region takes the label of the prev region it
// matches under the minimum-total-centroid-distance one-to-one assignment.
// Region i of the result corresponds to region i of `prev`.
StyleRegionSet track_style_regions(const StyleRegionSet& prev, const StyleRegionSet& curr);

// Exact minimum-cost perfect assignment on a square cost matrix; returns the
// matched column per row.
std::vector<int> min_cost_assignment(const Tensor& cost);

// sRGB -> CIELAB (D65), used by the clustering space. Returns {L, a, b}.
std::array<double, 3> rgb_to_lab(double r, double g, double b);

// Color-coded visualization of the regions over the image.
Image render_region_overlay(const Image& img, const StyleRegionSet& regions);

}  // namespace hairshift
