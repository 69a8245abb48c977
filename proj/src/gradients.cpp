#include "rfplan/gradients.hpp"

#include <cmath>
#include <random>
#include <string>

#include "rfplan/error.hpp"

namespace rfplan {

namespace {

// prod_{j != i} f_j for every i, exact even when some factors are zero.
void leave_one_out(const std::vector<double>& f, std::vector<double>& out) {
    const std::size_t n = f.size();
    out.assign(n, 1.0);
    double prefix = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = prefix;
        prefix *= f[i];
    }
    double suffix = 1.0;
    for (std::size_t i = n; i-- > 0;) {
        out[i] *= suffix;
        suffix *= f[i];
    }
}

void append_segment(const VoxelField& field, Vec2 p, Vec2 q, Vec2 skip_near, double skip_radius, int n_r,
                    std::vector<RaySample>& samples, std::vector<double>& factors) {
    const RaySamples rs = sample_ray(field, p, q, n_r);
    const double r2 = skip_radius * skip_radius;
    for (const auto& s : rs.samples) {
        if ((s.pos - skip_near).norm2() < r2) continue;
        samples.push_back(s);
        factors.push_back(1.0 - effective_delta(field, s));
    }
}

void scatter(GradientBuffer& buf, const RaySample& s, double g) {
    if (g == 0.0) return;
    for (int c = 0; c < 4; ++c) {
        if (s.weight[c] != 0.0) buf.add_delta(s.voxel[c], g * s.weight[c]);
    }
}

}  // namespace

GradientBuffer::GradientBuffer(std::size_t voxels, int bins)
    : bins_(bins), delta_(voxels, 0.0), weight_(voxels * std::size_t(bins), 0.0), mark_(voxels, 0) {}

void GradientBuffer::touch(int voxel) {
    auto& m = mark_[std::size_t(voxel)];
    if (!m) {
        m = 1;
        touched_.push_back(voxel);
    }
}

void GradientBuffer::add_delta(int voxel, double g) {
    touch(voxel);
    delta_[std::size_t(voxel)] += g;
}

void GradientBuffer::add_weight(int voxel, int bin, double g) {
    touch(voxel);
    weight_[std::size_t(voxel) * bins_ + bin] += g;
}

void GradientBuffer::merge(const GradientBuffer& other) {
    for (int v : other.touched_) {
        touch(v);
        delta_[std::size_t(v)] += other.delta_[std::size_t(v)];
        for (int k = 0; k < bins_; ++k) {
            weight_[std::size_t(v) * bins_ + k] += other.weight_[std::size_t(v) * bins_ + k];
        }
    }
}

void GradientBuffer::clear() {
    for (int v : touched_) {
        mark_[std::size_t(v)] = 0;
        delta_[std::size_t(v)] = 0.0;
        for (int k = 0; k < bins_; ++k) weight_[std::size_t(v) * bins_ + k] = 0.0;
    }
    touched_.clear();
}

double backward_los(const VoxelField& field, Vec2 tx, Vec2 rx, double K, int n_r, double grad_psi,
                    GradientBuffer& buf) {
    const RaySamples rs = sample_ray(field, tx, rx, n_r);
    std::vector<double> factors(rs.samples.size());
    for (std::size_t i = 0; i < factors.size(); ++i) factors[i] = 1.0 - effective_delta(field, rs.samples[i]);
    std::vector<double> loo;
    leave_one_out(factors, loo);
    const double C = K / (rs.length * rs.length);
    double total = 1.0;
    for (double f : factors) total *= f;
    if (grad_psi != 0.0) {
        for (std::size_t i = 0; i < factors.size(); ++i) scatter(buf, rs.samples[i], -grad_psi * C * loo[i]);
    }
    return C * total;
}

double backward_ref(const VoxelField& field, std::span<const PlausibleEntry> entries,
                    std::span<const RefContribution> selected, std::span<const double> bin_weights, Vec2 tx,
                    Vec2 rx, const ForwardConfig& cfg, double grad_psi, GradientBuffer& buf) {
    const int K = field.bins();
    std::vector<RaySample> samples;
    std::vector<double> factors, loo;
    double sum = 0.0;
    for (const auto& c : selected) {
        const PlausibleEntry& e = entries[c.entry];
        const Vec2 v = field.pixel(e.voxel).center();
        samples.clear();
        factors.clear();
        append_segment(field, tx, v, v, cfg.self_exclusion, cfg.n_r, samples, factors);
        append_segment(field, v, rx, v, cfg.self_exclusion, cfg.n_r, samples, factors);
        leave_one_out(factors, loo);
        double T = 1.0;
        for (double f : factors) T *= f;

        const double w = bin_weights[std::size_t(e.voxel) * K + e.bin];
        const double dj = field.delta(e.voxel);
        const double D = double(e.d1) + double(e.d2);
        const double base = cfg.K * double(e.gain) / (D * D);
        sum += w * dj * base * T;
        if (grad_psi == 0.0) continue;

        buf.add_delta(e.voxel, grad_psi * w * base * T);
        buf.add_weight(e.voxel, e.bin, grad_psi * dj * base * T);
        const double lead = grad_psi * w * dj * base;
        if (lead != 0.0) {
            for (std::size_t i = 0; i < samples.size(); ++i) scatter(buf, samples[i], -lead * loo[i]);
        }
    }
    return sum;
}

double backward_ref(const VoxelField& field, std::span<const PlausibleEntry> entries,
                    std::span<const double> bin_weights, Vec2 tx, Vec2 rx, const ForwardConfig& cfg,
                    double grad_psi, GradientBuffer& buf) {
    const auto selected = ranked_contributions(field, entries, bin_weights, tx, rx, cfg, cfg.top_k);
    return backward_ref(field, entries, selected, bin_weights, tx, rx, cfg, grad_psi, buf);
}

std::vector<double> sample_orientation(const VoxelField& field, double temperature, std::uint64_t seed) {
    if (!(temperature > 0.0)) throw ValidationError("Gumbel temperature must be positive");
    const int K = field.bins();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> out(field.voxels() * std::size_t(K));
    std::vector<double> z(static_cast<std::size_t>(K));
    for (std::size_t v = 0; v < field.voxels(); ++v) {
        double m = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < K; ++k) {
            double u = unif(rng);
            while (u <= 0.0) u = unif(rng);
            const double g = -std::log(-std::log(u));
            z[std::size_t(k)] = (double(field.orientation_logits[v * K + k]) + g) / temperature;
            m = std::max(m, z[std::size_t(k)]);
        }
        double s = 0.0;
        for (int k = 0; k < K; ++k) {
            out[v * K + k] = std::exp(z[std::size_t(k)] - m);
            s += out[v * K + k];
        }
        for (int k = 0; k < K; ++k) out[v * K + k] /= s;
    }
    return out;
}

void to_logit_gradients(const VoxelField& field, const GradientBuffer& buf, std::span<const double> bin_weights,
                        double temperature, LogitGradients& out) {
    const int K = field.bins();
    out.delta.assign(field.voxels(), 0.0);
    out.orientation.assign(field.voxels() * std::size_t(K), 0.0);
    for (int v : buf.touched()) {
        const double d = field.delta(v);
        out.delta[std::size_t(v)] = buf.delta(v) * d * (1.0 - d);
        const double* w = &bin_weights[std::size_t(v) * K];
        double dot = 0.0;
        for (int k = 0; k < K; ++k) dot += w[k] * buf.weight(v, k);
        for (int k = 0; k < K; ++k) {
            out.orientation[std::size_t(v) * K + k] = w[k] * (buf.weight(v, k) - dot) / temperature;
        }
    }
}

void adam_step(std::span<float> params, std::span<const double> grads, AdamState& st) {
    if (params.size() != grads.size()) {
        throw ValidationError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                              std::to_string(grads.size()) + " gradients");
    }
    if (st.m.empty() && st.v.empty()) {
        st.m.assign(params.size(), 0.0);
        st.v.assign(params.size(), 0.0);
    }
    if (st.m.size() != params.size() || st.v.size() != params.size()) {
        throw ValidationError("adam_step: optimizer state does not match parameter count");
    }
    ++st.step;
    const double c1 = 1.0 - std::pow(st.beta1, double(st.step));
    const double c2 = 1.0 - std::pow(st.beta2, double(st.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * g;
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * g * g;
        const double mhat = st.m[i] / c1;
        const double vhat = st.v[i] / c2;
        params[i] = float(double(params[i]) - st.lr * mhat / (std::sqrt(vhat) + st.eps));
    }
}

}  // namespace rfplan
