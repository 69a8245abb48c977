#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rfplan/field.hpp"
#include "rfplan/geometry.hpp"

namespace rfplan {

// Pixel set iff delta >= threshold.
Bitmap binarize_field(const VoxelField& field, double threshold = 0.5);

struct WallMetrics {
    double iou = 0.0;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
};

// Set metrics over wall pixels. Two empty bitmaps score 1 everywhere; any
// other 0/0 ratio is 0. Throws ValidationError on a size mismatch.
WallMetrics wall_metrics(const Bitmap& pred, const Bitmap& truth);

// Ablation only: a predicted pixel counts as correct within `radius` px of
// a true wall, and a true pixel as found within `radius` px of a prediction.
WallMetrics wall_metrics_tolerant(const Bitmap& pred, const Bitmap& truth, int radius = 1);

struct RpeResult {
    double rpe = 0.0;               // dB, mean of per-group medians
    std::vector<double> medians;    // per group, in order of first appearance
    std::size_t excluded = 0;       // pairs with a nonpositive power
};

// groups[i] names the floorplan of pair i; an empty span puts every pair in
// one group.
RpeResult rpe(std::span<const double> predicted, std::span<const double> truth, std::span<const int> groups = {});

inline double to_db(double linear) { return 10.0 * std::log10(linear); }

// Seeded split of distinct receiver positions into train/test index sets.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};
Split split_by_receiver(std::span<const Vec2> receivers, double test_fraction, std::uint64_t seed);

}  // namespace rfplan
