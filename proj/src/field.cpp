#include "rfplan/field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <string>

#include "rfplan/error.hpp"
#include "rfplan/parallel.hpp"

namespace rfplan {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Vec2 unit_normal(int k, int bins) {
    const double a = 2.0 * std::numbers::pi * k / bins;
    // Snap the axis-aligned cases so K_omega = 4 gives exact unit axes.
    double c = std::cos(a), s = std::sin(a);
    if (std::abs(c) < 1e-15) c = 0.0;
    if (std::abs(s) < 1e-15) s = 0.0;
    return {c, s};
}

// Product of (1 - delta) over the samples of p -> q, skipping samples near
// skip_near. Stops early and returns 0 once the product reaches 0 or drops
// below floor, for callers that only care about values of at least floor.
// With from_q set the samples are visited starting at the q end, which finds
// a blocked leg next to a reflecting voxel after a sample or two.
double transmittance(const VoxelField& field, Vec2 p, Vec2 q, Vec2 skip_near, double skip_radius, int n_r,
                     double floor = 0.0, bool from_q = false) {
    const int L = field.size();
    const Vec2 d = q - p;
    if (!(d.norm2() > 0.0)) throw GeometryError("zero-length ray segment");
    const double r2 = skip_radius * skip_radius;
    const double hi = L - 1;
    double t = 1.0;
    for (int j = 0; j < n_r; ++j) {
        const int i = from_q ? n_r - 1 - j : j;
        const Vec2 pos = p + d * ((i + 0.5) / n_r);
        if ((pos - skip_near).norm2() < r2) continue;
        const double x = std::clamp(pos.x, 0.0, hi);
        const double y = std::clamp(pos.y, 0.0, hi);
        const int x0 = std::min(int(std::floor(x)), L - 2);
        const int y0 = std::min(int(std::floor(y)), L - 2);
        const double fx = x - x0, fy = y - y0;
        const int i0 = y0 * L + x0;
        double dl = (1 - fx) * (1 - fy) * field.delta(i0) + fx * (1 - fy) * field.delta(i0 + 1) +
                    (1 - fx) * fy * field.delta(i0 + L) + fx * fy * field.delta(i0 + L + 1);
        if (field.discretize_delta) dl = straight_through_discretize(dl);
        t *= 1.0 - dl;
        if (t < floor || t == 0.0) return 0.0;
    }
    return t;
}

}  // namespace

VoxelField::VoxelField(int grid_size, int num_bins, double scale, double init_delta)
    : size_(grid_size), bins_(num_bins), scale_(scale) {
    if (grid_size < 2) throw ValidationError("field grid_size must be >= 2");
    if (num_bins < 2) throw ValidationError("K_omega must be >= 2");
    if (!(scale > 0.0)) throw ValidationError("scale must be positive");
    if (!(init_delta > 0.0 && init_delta < 1.0)) throw ValidationError("initial opacity must be in (0, 1)");
    delta_logits_.assign(voxels(), float(std::log(init_delta / (1.0 - init_delta))));
    orientation_logits.assign(voxels() * std::size_t(num_bins), 0.0f);
    for (int k = 0; k < num_bins; ++k) normals_.push_back(unit_normal(k, num_bins));
    refresh_delta();
}

void VoxelField::refresh_delta() {
    delta_.resize(delta_logits_.size());
    for (std::size_t i = 0; i < delta_.size(); ++i) delta_[i] = sigmoid(double(delta_logits_[i]));
}

void VoxelField::set_delta_logit(int idx, float logit) {
    delta_logits_[std::size_t(idx)] = logit;
    delta_[std::size_t(idx)] = sigmoid(double(logit));
}

void VoxelField::set_delta_logits(std::vector<float> logits) {
    if (logits.size() != voxels()) {
        throw ValidationError("expected " + std::to_string(voxels()) + " opacity logits, got " +
                              std::to_string(logits.size()));
    }
    delta_logits_ = std::move(logits);
    refresh_delta();
}

void VoxelField::orientation_probs(int idx, double* out) const {
    const float* l = &orientation_logits[std::size_t(idx) * std::size_t(bins_)];
    double m = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < bins_; ++k) m = std::max(m, double(l[k]));
    double sum = 0.0;
    for (int k = 0; k < bins_; ++k) {
        out[k] = std::exp(double(l[k]) - m);
        sum += out[k];
    }
    for (int k = 0; k < bins_; ++k) out[k] /= sum;
}

Vec2 VoxelField::bin_normal(int k) const { return normals_[std::size_t(k)]; }

std::vector<double> soft_bin_weights(const VoxelField& field) {
    std::vector<double> w(field.voxels() * std::size_t(field.bins()));
    for (std::size_t v = 0; v < field.voxels(); ++v) field.orientation_probs(int(v), &w[v * field.bins()]);
    return w;
}

RaySamples sample_ray(int grid_size, double scale, Vec2 p, Vec2 q, int n_r) {
    if (n_r < 1) throw ValidationError("n_r must be >= 1");
    const Vec2 d = q - p;
    const double len = d.norm();
    if (!(len > 0.0)) throw GeometryError("zero-length ray segment");
    RaySamples out;
    out.length = len * scale;
    out.samples.resize(std::size_t(n_r));
    const double hi = grid_size - 1;
    for (int i = 0; i < n_r; ++i) {
        const double t = (i + 0.5) / n_r;
        RaySample& s = out.samples[std::size_t(i)];
        s.pos = p + d * t;
        const double x = std::clamp(s.pos.x, 0.0, hi);
        const double y = std::clamp(s.pos.y, 0.0, hi);
        const int x0 = std::min(int(std::floor(x)), grid_size - 2);
        const int y0 = std::min(int(std::floor(y)), grid_size - 2);
        const double fx = x - x0, fy = y - y0;
        s.voxel = {y0 * grid_size + x0, y0 * grid_size + x0 + 1, (y0 + 1) * grid_size + x0,
                   (y0 + 1) * grid_size + x0 + 1};
        s.weight = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
    }
    return out;
}

double sample_delta(const VoxelField& field, const RaySample& s) {
    double v = 0.0;
    for (int c = 0; c < 4; ++c) v += s.weight[c] * field.delta(s.voxel[c]);
    return v;
}

double effective_delta(const VoxelField& field, const RaySample& s) {
    const double d = sample_delta(field, s);
    return field.discretize_delta ? straight_through_discretize(d) : d;
}

double psi_los(const VoxelField& field, Vec2 tx, Vec2 rx, double K, int n_r) {
    const RaySamples rs = sample_ray(field, tx, rx, n_r);
    double t = 1.0;
    for (const auto& s : rs.samples) t *= 1.0 - effective_delta(field, s);
    return K * t / (rs.length * rs.length);
}

GainParams GainParams::resolved(int num_bins) const {
    GainParams g = *this;
    if (g.beta_tol <= 0.0) g.beta_tol = 0.25 * std::numbers::pi / num_bins;
    if (g.sigma_beta <= 0.0) g.sigma_beta = g.beta_tol / 2.0;
    return g;
}

Vec2 reflected_direction(Vec2 tx, Vec2 v, Vec2 normal) {
    const Vec2 d = v - tx;
    return (d - normal * (2.0 * d.dot(normal))).normalized();
}

double surface_gain(double theta, double beta, const GainParams& gain) {
    const double c = std::max(0.0, std::cos(theta));
    return gain.gamma * c * std::exp(-beta * beta / (2.0 * gain.sigma_beta * gain.sigma_beta));
}

std::vector<PlausibleEntry> build_plausible_set(int grid_size, int num_bins, double scale, Vec2 tx, Vec2 rx,
                                                const GainParams& gain_in) {
    const GainParams gain = gain_in.resolved(num_bins);
    std::vector<Vec2> normals(static_cast<std::size_t>(num_bins));
    for (int k = 0; k < num_bins; ++k) normals[std::size_t(k)] = unit_normal(k, num_bins);
    const double norm_const = std::sqrt(2.0 * std::numbers::pi) * gain.sigma_beta;
    // Cheap pre-check on n.b; the atan2 test below stays authoritative.
    const double min_dot = std::cos(std::min(gain.beta_tol / 2.0, std::numbers::pi / 2.0)) - 1e-9;

    std::vector<PlausibleEntry> out;
    for (int y = 0; y < grid_size; ++y) {
        for (int x = 0; x < grid_size; ++x) {
            const Vec2 v{double(x), double(y)};
            const Vec2 to_tx = tx - v, to_rx = rx - v;
            const double rt = to_tx.norm(), rr = to_rx.norm();
            if (rt <= 1.0 || rr <= 1.0) continue;
            const Vec2 ut = to_tx / rt, ur = to_rx / rr;
            Vec2 b = ut + ur;
            const double bn = b.norm();
            if (bn < 1e-12) continue;
            b = b / bn;
            for (int k = 0; k < num_bins; ++k) {
                Vec2 n = normals[std::size_t(k)];
                if (b.dot(n) < 0.0) n = -n;
                if (n.dot(b) < min_dot) continue;
                const double ct = ut.dot(n), cr = ur.dot(n);
                if (ct <= 0.0 || cr <= 0.0) continue;
                // The reflected ray is off the receiver direction by twice the
                // angle between the bisector and the normal.
                const double beta = 2.0 * std::atan2(n.cross(b), n.dot(b));
                if (std::abs(beta) > gain.beta_tol) continue;
                const double theta = std::acos(std::min(1.0, ct));
                double g = surface_gain(theta, beta, gain);
                if (gain.aperture) {
                    const double ds = 1.0 / std::max(std::abs(n.x), std::abs(n.y));
                    g *= ds * (ct / rt + cr / rr) / norm_const;
                }
                PlausibleEntry e;
                e.voxel = y * grid_size + x;
                e.bin = std::uint8_t(k);
                e.theta = float(theta);
                e.beta = float(beta);
                e.d1 = float(rt * scale);
                e.d2 = float(rr * scale);
                e.gain = float(g);
                out.push_back(e);
            }
        }
    }
    return out;
}

namespace {

// psi_ref_voxel, or 0 as soon as the result is known to fall below floor.
double ref_value(const VoxelField& field, const PlausibleEntry& entry, Vec2 tx, Vec2 rx, const ForwardConfig& cfg,
                 double floor) {
    const double dj = field.delta(entry.voxel);
    if (dj == 0.0 || entry.gain == 0.0f) return 0.0;
    const double D = double(entry.d1) + double(entry.d2);
    const double lead = cfg.K * dj * double(entry.gain) / (D * D);
    const double need = floor / lead;
    const Vec2 v = field.pixel(entry.voxel).center();
    const double t1 = transmittance(field, tx, v, v, cfg.self_exclusion, cfg.n_r, need, true);
    if (t1 == 0.0) return 0.0;
    const double t2 = transmittance(field, v, rx, v, cfg.self_exclusion, cfg.n_r, need / t1);
    return lead * t1 * t2;
}

}  // namespace

double psi_ref_voxel(const VoxelField& field, const PlausibleEntry& entry, Vec2 tx, Vec2 rx,
                     const ForwardConfig& cfg) {
    return ref_value(field, entry, tx, rx, cfg, 0.0);
}

std::vector<RefContribution> ranked_contributions(const VoxelField& field, std::span<const PlausibleEntry> entries,
                                                  std::span<const double> bin_weights, Vec2 tx, Vec2 rx,
                                                  const ForwardConfig& cfg, int top_k) {
    const int K = field.bins();
    struct Bound {
        double ub;
        double w;
        std::size_t idx;
    };
    std::vector<Bound> bounds;
    bounds.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        const double w = bin_weights[std::size_t(e.voxel) * K + e.bin];
        const double D = double(e.d1) + double(e.d2);
        const double ub = cfg.K * w * field.delta(e.voxel) * double(e.gain) / (D * D);
        if (ub > 0.0) bounds.push_back({ub, w, i});
    }
    // Bounds are consumed in descending order; usually only a few are needed,
    // so pop from a heap instead of sorting all of them.
    auto lower = [](const Bound& a, const Bound& b) { return a.ub != b.ub ? a.ub < b.ub : a.idx > b.idx; };

    auto better = [](const RefContribution& a, const RefContribution& b) {
        return a.value != b.value ? a.value > b.value : a.entry < b.entry;
    };
    std::vector<RefContribution> out;
    if (top_k <= 0 || bounds.size() <= std::size_t(top_k)) {
        std::sort(bounds.begin(), bounds.end(), [&](const Bound& a, const Bound& b) { return lower(b, a); });
        for (const auto& b : bounds) {
            const double v = b.w * psi_ref_voxel(field, entries[b.idx], tx, rx, cfg);
            if (v > 0.0) out.push_back({b.idx, v});
        }
        std::sort(out.begin(), out.end(), better);
        if (top_k > 0 && out.size() > std::size_t(top_k)) out.resize(std::size_t(top_k));
        return out;
    }

    // Min-heap (under `better`) of the best k seen so far.
    std::priority_queue<RefContribution, std::vector<RefContribution>, decltype(better)> heap(better);
    std::make_heap(bounds.begin(), bounds.end(), lower);
    for (auto end = bounds.end(); end != bounds.begin(); --end) {
        std::pop_heap(bounds.begin(), end, lower);
        const Bound& b = *(end - 1);
        const bool full = heap.size() == std::size_t(top_k);
        if (full && heap.top().value >= b.ub) break;
        const double v = b.w * ref_value(field, entries[b.idx], tx, rx, cfg, full ? heap.top().value / b.w : 0.0);
        if (v <= 0.0) continue;
        RefContribution c{b.idx, v};
        if (heap.size() < std::size_t(top_k)) heap.push(c);
        else if (better(c, heap.top())) {
            heap.pop();
            heap.push(c);
        }
    }
    while (!heap.empty()) {
        out.push_back(heap.top());
        heap.pop();
    }
    std::sort(out.begin(), out.end(), better);
    return out;
}

double psi_ref_total(const VoxelField& field, std::span<const PlausibleEntry> entries,
                     std::span<const double> bin_weights, Vec2 tx, Vec2 rx, const ForwardConfig& cfg) {
    double sum = 0.0;
    for (const auto& c : ranked_contributions(field, entries, bin_weights, tx, rx, cfg, cfg.top_k)) sum += c.value;
    return sum;
}

double predict_power(const VoxelField& field, std::span<const PlausibleEntry> entries,
                     std::span<const double> bin_weights, Vec2 tx, Vec2 rx, const ForwardConfig& cfg) {
    return psi_los(field, tx, rx, cfg.K, cfg.n_r) + psi_ref_total(field, entries, bin_weights, tx, rx, cfg);
}

double predict_power(const VoxelField& field, Vec2 tx, Vec2 rx, const ForwardConfig& cfg) {
    const auto entries = build_plausible_set(field, tx, rx, cfg.gain);
    const auto weights = soft_bin_weights(field);
    return predict_power(field, entries, weights, tx, rx, cfg);
}

Grid<double> heatmap(const VoxelField& field, Vec2 tx, int stride, const ForwardConfig& cfg, const Bitmap& walls) {
    if (stride < 1) throw ValidationError("heatmap stride must be >= 1");
    const int L = field.size();
    if (walls.width() != 0 && (walls.width() != L || walls.height() != L)) {
        throw ValidationError("heatmap wall mask is " + std::to_string(walls.width()) + "x" +
                              std::to_string(walls.height()) + ", field is " + std::to_string(L));
    }
    Grid<double> out(L, L, std::numeric_limits<double>::quiet_NaN());
    const auto weights = soft_bin_weights(field);
    std::vector<Pixel> cells;
    for (int y = 0; y < L; y += stride) {
        for (int x = 0; x < L; x += stride) {
            if (walls.width() != 0 && walls(x, y)) continue;
            if (Vec2{double(x), double(y)} == tx) continue;
            cells.push_back({x, y});
        }
    }
    parallel_for(cells.size(), 0, [&](std::size_t i) {
        const Vec2 rx = cells[i].center();
        const auto entries = build_plausible_set(field, tx, rx, cfg.gain);
        out(cells[i].x, cells[i].y) = predict_power(field, entries, weights, tx, rx, cfg);
    });
    return out;
}

std::vector<LearnedReflection> trace_learned_reflections(const VoxelField& field, Vec2 tx, Vec2 rx,
                                                         double power_fraction, const ForwardConfig& cfg) {
    if (!(power_fraction > 0.0 && power_fraction <= 1.0)) {
        throw ValidationError("power_fraction must be in (0, 1]");
    }
    const auto entries = build_plausible_set(field, tx, rx, cfg.gain);
    const auto weights = soft_bin_weights(field);
    const auto ranked = ranked_contributions(field, entries, weights, tx, rx, cfg, 0);
    double total = 0.0;
    for (const auto& c : ranked) total += c.value;
    std::vector<LearnedReflection> out;
    double acc = 0.0;
    for (const auto& c : ranked) {
        if (acc >= power_fraction * total) break;
        out.push_back({entries[c.entry].voxel, entries[c.entry].bin, c.value});
        acc += c.value;
    }
    return out;
}

}  // namespace rfplan
