#pragma once

#include <optional>
#include <span>

#include "rfplan/geometry.hpp"
#include "rfplan/simulator.hpp"

namespace rfplan {

struct TxlocConfig {
    int P = 20;             // strongest measurements used
    double K = 1.0;
    double scale = 0.1;     // meters per pixel
    double tol = 1e-9;      // gradient norm, in objective units per px
    int max_iterations = 500;
    int restarts = 5;       // jittered starts in addition to init
    double jitter = 5.0;    // px
    std::uint64_t seed = 0;
    bool fit_K = false;     // alternate closed-form K with position steps
    std::optional<Vec2> init;  // default: power-weighted centroid
    int grid_size = 0;      // > 0 clamps the estimate into the grid
};

struct TxEstimate {
    Vec2 position;
    double residual = 0.0;  // sum of squared power errors
    int iterations = 0;
    double K = 1.0;
    bool collinear = false;  // selected receivers lie on one line
    bool converged = false;
};

// argmin_tx sum_i (psi_i - K / |tx - rx_i|^2)^2 over the P strongest
// measurements, by BFGS with central-difference gradients from several
// starts. Throws ValidationError for fewer than 3 measurements and
// NumericalError when no start converges (message carries the best iterate).
TxEstimate estimate_tx(std::span<const Measurement> measurements, const TxlocConfig& cfg);

}  // namespace rfplan
