#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "rfplan/geometry.hpp"

namespace rfplan {

// Learned scene: per-voxel opacity logit and K_omega orientation logits.
// Logits are stored as float; all arithmetic on them is done in double.
class VoxelField {
public:
    VoxelField() = default;
    VoxelField(int grid_size, int num_bins = 4, double scale = 0.1, double init_delta = 0.01);

    int size() const { return size_; }
    int bins() const { return bins_; }
    double scale() const { return scale_; }
    std::size_t voxels() const { return std::size_t(size_) * std::size_t(size_); }
    int index(int x, int y) const { return y * size_ + x; }
    Pixel pixel(int idx) const { return {idx % size_, idx / size_}; }

    // Cached sigmoid of the opacity logit.
    double delta(int idx) const { return delta_[std::size_t(idx)]; }
    double delta(int x, int y) const { return delta(index(x, y)); }

    // Opacity logits change only through these so the cache stays in sync.
    const std::vector<float>& delta_logits() const { return delta_logits_; }
    void set_delta_logit(int idx, float logit);
    void set_delta_logits(std::vector<float> logits);
    template <class Fn>
    void update_delta_logits(Fn&& fn) {
        fn(std::span<float>(delta_logits_));
        refresh_delta();
    }

    // Softmax over the voxel's orientation logits.
    void orientation_probs(int idx, double* out) const;
    // Unit normal of bin k, at angle 2*pi*k/K_omega.
    Vec2 bin_normal(int k) const;

    std::vector<float> orientation_logits;  // L*L*K_omega, voxel-major
    bool discretize_delta = false;

private:
    void refresh_delta();

    std::vector<float> delta_logits_;  // L*L, row-major
    std::vector<double> delta_;
    int size_ = 0;
    int bins_ = 4;
    double scale_ = 0.1;
    std::vector<Vec2> normals_;
};

// Per-voxel bin weights for the whole grid, voxel-major. The soft weights are
// the orientation softmax; training may substitute Gumbel samples.
std::vector<double> soft_bin_weights(const VoxelField& field);

struct RaySample {
    Vec2 pos;
    std::array<int, 4> voxel;     // bilinear corners
    std::array<double, 4> weight; // sums to 1
};

struct RaySamples {
    std::vector<RaySample> samples;
    double length = 0.0;  // meters
};

// n_r samples at parameters (i + 0.5) / n_r along p -> q.
RaySamples sample_ray(int grid_size, double scale, Vec2 p, Vec2 q, int n_r = 64);
inline RaySamples sample_ray(const VoxelField& field, Vec2 p, Vec2 q, int n_r = 64) {
    return sample_ray(field.size(), field.scale(), p, q, n_r);
}

// Interpolated opacity at a sample, before any discretization.
double sample_delta(const VoxelField& field, const RaySample& s);

// Forward value of straight-through binarization; ties go to 1. The backward
// factor is 1 and is applied implicitly by the gradient code.
inline double straight_through_discretize(double delta) { return delta >= 0.5 ? 1.0 : 0.0; }

// Opacity as used inside transmittance products.
double effective_delta(const VoxelField& field, const RaySample& s);

double psi_los(const VoxelField& field, Vec2 tx, Vec2 rx, double K, int n_r = 64);

struct GainParams {
    double gamma = 0.7;
    double beta_tol = 0.0;   // 0 selects 0.25 * pi / K_omega
    double sigma_beta = 0.0; // 0 selects beta_tol / 2
    // Scale each entry by the angular width it covers so that a continuous
    // opaque wall sums to the specular power instead of a voxel count.
    bool aperture = true;

    GainParams resolved(int num_bins) const;
};

struct PlausibleEntry {
    std::int32_t voxel = 0;
    std::uint8_t bin = 0;
    float theta = 0.0f;  // incidence angle, rad
    float beta = 0.0f;   // signed offset between reflected ray and v -> rx
    float d1 = 0.0f;     // tx -> v, meters
    float d2 = 0.0f;     // v -> rx, meters
    float gain = 0.0f;   // surface_gain times the aperture weight
};

// Voxels and bins whose normal (or its negation, facing both ends) reflects
// tx toward rx within beta_tol. Voxels within 1 px of tx or rx are skipped.
std::vector<PlausibleEntry> build_plausible_set(int grid_size, int num_bins, double scale, Vec2 tx, Vec2 rx,
                                                const GainParams& gain);
inline std::vector<PlausibleEntry> build_plausible_set(const VoxelField& field, Vec2 tx, Vec2 rx,
                                                       const GainParams& gain) {
    return build_plausible_set(field.size(), field.bins(), field.scale(), tx, rx, gain);
}

// Mirror of d = v - tx about the unit normal, normalized.
Vec2 reflected_direction(Vec2 tx, Vec2 v, Vec2 normal);

double surface_gain(double theta, double beta, const GainParams& gain);

struct ForwardConfig {
    double K = 1.0;
    int n_r = 64;
    int top_k = 10;  // <= 0 sums every entry
    // Ray samples closer than this to the reflecting voxel are left out of
    // its occlusion products.
    double self_exclusion = 1.5;
    GainParams gain;
};

// Occlusion-weighted power of one entry, without the bin weight.
double psi_ref_voxel(const VoxelField& field, const PlausibleEntry& entry, Vec2 tx, Vec2 rx,
                     const ForwardConfig& cfg);

struct RefContribution {
    std::size_t entry;
    double value;  // bin weight times psi_ref_voxel
};

// Contributions in descending order; limited to top_k when enabled. Uses
// an upper bound on each entry to skip the occlusion products of entries
// that cannot reach the top k.
std::vector<RefContribution> ranked_contributions(const VoxelField& field, std::span<const PlausibleEntry> entries,
                                                  std::span<const double> bin_weights, Vec2 tx, Vec2 rx,
                                                  const ForwardConfig& cfg, int top_k);

double psi_ref_total(const VoxelField& field, std::span<const PlausibleEntry> entries,
                     std::span<const double> bin_weights, Vec2 tx, Vec2 rx, const ForwardConfig& cfg);

double predict_power(const VoxelField& field, Vec2 tx, Vec2 rx, const ForwardConfig& cfg);
double predict_power(const VoxelField& field, std::span<const PlausibleEntry> entries,
                     std::span<const double> bin_weights, Vec2 tx, Vec2 rx, const ForwardConfig& cfg);

// predict_power on every stride-th pixel; NaN marks pixels that are walls in
// the mask (or unsampled). An empty mask means no pixel is excluded.
Grid<double> heatmap(const VoxelField& field, Vec2 tx, int stride, const ForwardConfig& cfg,
                     const Bitmap& walls = {});

struct LearnedReflection {
    int voxel;
    int bin;
    double contribution;
};

// Entries sorted by contribution, cut once their running sum reaches
// power_fraction of the total. top_k in cfg is ignored here.
std::vector<LearnedReflection> trace_learned_reflections(const VoxelField& field, Vec2 tx, Vec2 rx,
                                                         double power_fraction, const ForwardConfig& cfg);

}  // namespace rfplan
