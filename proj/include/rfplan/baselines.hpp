#pragma once

#include <span>
#include <string>
#include <vector>

#include "rfplan/geometry.hpp"
#include "rfplan/simulator.hpp"

namespace rfplan {

// Inverse-distance (power 2) interpolation of the measurements' dB values
// onto the L x L grid. Pixels holding a measurement take its value exactly;
// zero powers read as -150 dB.
Grid<double> interpolate_heatmap(std::span<const Measurement> measurements, int grid_size);

// Sets pixels outside the convex hull of the points to NaN.
void mask_outside_hull(Grid<double>& heatmap, std::span<const Vec2> points);

struct SegmentationParams {
    double rssi_drop_db = 30.0;   // room pixels lie within this much of the heatmap maximum
    double laplacian_max = 1.5;   // dB per px^2; rougher pixels are not room interior
    int kernel = 3;               // odd morphology kernel width
    int min_area = 30;            // smaller components are dropped
};

struct Segmentation {
    Bitmap walls;
    Grid<int> labels;  // -1 outside every room
    std::vector<std::string> warnings;
};

// One region per heatmap (one heatmap per transmitter). NaN cells are
// undefined. Overlaps go to the heatmap with the smaller gradient magnitude
// at that pixel; walls are region pixels with a 4-neighbor outside the
// region.
Segmentation segment_rooms(std::span<const Grid<double>> heatmaps, const SegmentationParams& params);
Segmentation segment_rooms(const Grid<double>& heatmap, const SegmentationParams& params);

// Interpolate, hull-mask and segment every transmitter of a dataset.
Segmentation heatmap_segmentation(std::span<const Measurement> measurements, int grid_size,
                                  const SegmentationParams& params);

// Inverse-distance mean (linear scale) of the k nearest training powers of
// the same transmitter. Throws ValidationError for an unknown tx_id.
double knn_rssi_predict(std::span<const Measurement> training, int tx_id, Vec2 rx, int k, bool uniform = false);

}  // namespace rfplan
