#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rfplan/field.hpp"

namespace rfplan {

// Accumulates dL/d(delta) and dL/d(bin weight) per voxel. Storage is dense
// with a touched list so merging stays proportional to the work done.
// Merging buffers in a fixed order gives bit-identical sums.
class GradientBuffer {
public:
    GradientBuffer() = default;
    GradientBuffer(std::size_t voxels, int bins);

    void add_delta(int voxel, double g);
    void add_weight(int voxel, int bin, double g);
    void merge(const GradientBuffer& other);
    void clear();

    double delta(int voxel) const { return delta_[std::size_t(voxel)]; }
    double weight(int voxel, int bin) const { return weight_[std::size_t(voxel) * bins_ + bin]; }
    const std::vector<int>& touched() const { return touched_; }
    int bins() const { return bins_; }
    std::size_t voxels() const { return delta_.size(); }

private:
    void touch(int voxel);

    int bins_ = 0;
    std::vector<double> delta_;
    std::vector<double> weight_;
    std::vector<std::uint8_t> mark_;
    std::vector<int> touched_;
};

// Adds grad_psi * d(psi_los)/d(delta) for every voxel under the ray's
// bilinear stencils. With discretization on, the straight-through rule
// treats the binarization as identity. Returns psi_los.
double backward_los(const VoxelField& field, Vec2 tx, Vec2 rx, double K, int n_r, double grad_psi,
                    GradientBuffer& buf);

// Gradient of sum_c contribution_c over the given selection: reflecting
// voxel opacity, segment opacities and the entry's bin weight. Returns the
// recomputed sum.
double backward_ref(const VoxelField& field, std::span<const PlausibleEntry> entries,
                    std::span<const RefContribution> selected, std::span<const double> bin_weights, Vec2 tx,
                    Vec2 rx, const ForwardConfig& cfg, double grad_psi, GradientBuffer& buf);

// Selects the top-k entries with cfg.top_k and backpropagates through them.
double backward_ref(const VoxelField& field, std::span<const PlausibleEntry> entries,
                    std::span<const double> bin_weights, Vec2 tx, Vec2 rx, const ForwardConfig& cfg,
                    double grad_psi, GradientBuffer& buf);

// Gumbel-softmax bin weights softmax((logits + g) / temperature), voxel-major.
std::vector<double> sample_orientation(const VoxelField& field, double temperature, std::uint64_t seed);

struct LogitGradients {
    std::vector<double> delta;        // L*L
    std::vector<double> orientation;  // L*L*K_omega
};

// Chains buffer gradients through the sigmoid and through the softmax that
// produced bin_weights (temperature 1 for the plain orientation softmax).
void to_logit_gradients(const VoxelField& field, const GradientBuffer& buf, std::span<const double> bin_weights,
                        double temperature, LogitGradients& out);

struct AdamState {
    double lr = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
};

// Bias-corrected Adam. Moments are allocated on first use; a size mismatch
// afterwards throws ValidationError.
void adam_step(std::span<float> params, std::span<const double> grads, AdamState& state);

}  // namespace rfplan
