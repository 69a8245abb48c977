#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "rfplan/geometry.hpp"

namespace rfplan {

inline constexpr double kSpeedOfLight = 299792458.0;

// One specular propagation path from Tx to Rx.
struct PathRecord {
    int order = 0;
    std::vector<Vec2> bounce_points;      // pixels
    std::vector<int> bounce_segments;     // indices into Floorplan::segments
    std::vector<double> incidence_angles; // radians, one per bounce
    std::vector<double> reflectances;     // one per bounce
    double total_length = 0.0;            // meters
    double power = 0.0;                   // linear
    double delay = 0.0;                   // seconds
};

struct SimConfig {
    int max_order = 2;
    double K = 1.0;              // transmit constant, power * m^2
    double cos_exponent = 1.0;   // per-bounce multiplier is reflectance * cos(theta)^cos_exponent
    int num_subcarriers = 64;
    double bandwidth = 20e6;     // Hz
    double center_frequency = 2.4e9;
    // Subtrees whose best possible power falls below this fraction of the
    // free-space power K/d^2 are skipped. 0 keeps the enumeration exact.
    double prune_fraction = 0.0;
};

// Enumerates LoS plus every specular path with order <= config.max_order
// using beam-pruned image sources. Powers and delays are filled in.
// Throws PlacementError when tx or rx sits on a wall pixel.
std::vector<PathRecord> trace_paths(const Floorplan& floorplan, Vec2 tx, Vec2 rx, const SimConfig& config);
std::vector<PathRecord> trace_paths(const Floorplan& floorplan, Vec2 tx, Vec2 rx, int max_order);

// K * prod(reflectance * cos^n(theta)) / length^2. Throws GeometryError for
// zero length.
double path_power(const PathRecord& path, const SimConfig& config);

struct ReceivedPower {
    double total = 0.0;
    std::vector<double> by_order;  // size max_order + 1
};

ReceivedPower received_power(const Floorplan& floorplan, Vec2 tx, Vec2 rx, const SimConfig& config);

struct ContributionRatios {
    // (r_LoS, r_<=1, r_<=2) per included pair, relative to the reference order.
    std::vector<std::array<double, 3>> ratios;
    std::vector<std::size_t> included_pairs;
    std::size_t excluded = 0;  // pairs with zero reference power
};

struct TxRxPair {
    Vec2 tx;
    Vec2 rx;
};

ContributionRatios contribution_ratios(const Floorplan& floorplan, std::span<const TxRxPair> pairs,
                                       const SimConfig& config, int reference_order = 10);

// Mean over trials (random band placement) of
// |mean_k |sum_l a_l exp(-j 2 pi f_k tau_l)|^2 - sum_l a_l^2| / sum_l a_l^2,
// with a_l = sqrt(path power) and tau_l the path delay.
double subcarrier_consistency(std::span<const PathRecord> paths, int num_subcarriers, double bandwidth,
                              int trials, std::uint64_t seed, double center_frequency = 2.4e9);

struct Measurement {
    int tx_id = 0;
    Vec2 tx;
    Vec2 rx;
    double psi = 0.0;  // linear
};

struct Dataset {
    int grid_size = 0;
    double scale = 0.1;
    double K = 1.0;
    int max_order = 2;
    std::uint64_t seed = 0;
    std::vector<Measurement> measurements;

    int num_transmitters() const;
};

// Every (tx, rx) combination, tx-major. Pairs are evaluated in parallel and
// written back in pair order.
Dataset simulate_dataset(const Floorplan& floorplan, std::span<const Vec2> transmitters,
                         std::span<const Pixel> receivers, const SimConfig& config, std::uint64_t seed,
                         int threads = 0);

}  // namespace rfplan
