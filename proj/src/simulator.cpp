#include "rfplan/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <set>
#include <string>

#include "rfplan/error.hpp"
#include "rfplan/parallel.hpp"

namespace rfplan {

namespace {

constexpr double kEps = 1e-9;

Vec2 mirror_point(Vec2 p, Vec2 a, Vec2 b) {
    Vec2 d = b - a;
    Vec2 proj = a + d * ((p - a).dot(d) / d.norm2());
    return proj * 2.0 - p;
}

void require_free(const Floorplan& fp, Vec2 p, const char* what) {
    if (!fp.is_free(p)) {
        throw PlacementError(std::string(what) + " at (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                             ") is on a wall pixel or outside the grid");
    }
}

// f(X) >= 0 describes a half-plane; f is affine so it is clipped by its
// values at the segment endpoints.
struct HalfPlane {
    Vec2 origin;
    Vec2 dir;
    double sign;
    double eval(Vec2 x) const { return sign * dir.cross(x - origin); }
};

bool clip(const HalfPlane& h, Vec2 p, Vec2 q, double& t0, double& t1, double tol) {
    const double fp = h.eval(p) + tol;
    const double fq = h.eval(q) + tol;
    if (fp < 0.0 && fq < 0.0) return false;
    if (fp >= 0.0 && fq >= 0.0) return t0 <= t1;
    const double t = fp / (fp - fq);
    if (fp < 0.0) t0 = std::max(t0, t);
    else t1 = std::min(t1, t);
    return t0 <= t1;
}

struct Beam {
    Vec2 apex;
    bool has_aperture = false;
    Vec2 a0, a1;
    int last = -1;

    // Sector half-planes plus the far side of the aperture line.
    std::array<HalfPlane, 3> planes() const {
        const double s1 = (a0 - apex).cross(a1 - apex) >= 0.0 ? 1.0 : -1.0;
        const double s2 = (a1 - apex).cross(a0 - apex) >= 0.0 ? 1.0 : -1.0;
        const double s3 = (a1 - a0).cross(apex - a0) >= 0.0 ? -1.0 : 1.0;
        return {HalfPlane{apex, a0 - apex, s1}, HalfPlane{apex, a1 - apex, s2}, HalfPlane{a0, a1 - a0, s3}};
    }
};

class ImageSourceTracer {
public:
    ImageSourceTracer(const Floorplan& fp, Vec2 tx, Vec2 rx, const SimConfig& cfg)
        : fp_(fp), tx_(tx), rx_(rx), cfg_(cfg) {
        const double d = (tx - rx).norm() * fp.scale;
        prune_floor_ = cfg.prune_fraction > 0.0 ? cfg.prune_fraction * cfg.K / (d * d) : 0.0;
    }

    std::vector<PathRecord> run() {
        if (leg_clear(tx_, rx_)) emit({});
        if (cfg_.max_order >= 1) {
            Beam root{tx_, false, {}, {}, -1};
            expand(root, 1.0);
        }
        return std::move(paths_);
    }

private:
    bool leg_clear(Vec2 p, Vec2 q) const {
        const double len = (q - p).norm();
        const double tol = kEps * std::max(1.0, 1.0 / std::max(len, 1e-12));
        for (const auto& s : fp_.segments) {
            auto hit = intersect_segments(p, q, s.a, s.b);
            if (hit && hit->t > tol && hit->t < 1.0 - tol) return false;
        }
        return true;
    }

    // True when a single wall spans the whole beam between the aperture and
    // the candidate piece [p0, p1].
    bool fully_occluded(const Beam& beam, int seg, Vec2 p0, Vec2 p1) const {
        Vec2 q0 = beam.apex, q1 = beam.apex;
        if (beam.has_aperture) {
            auto h0 = line_hit(beam.apex, p0, beam.a0, beam.a1);
            auto h1 = line_hit(beam.apex, p1, beam.a0, beam.a1);
            if (!h0 || !h1) return false;
            q0 = *h0;
            q1 = *h1;
        }
        for (int m = 0; m < int(fp_.segments.size()); ++m) {
            if (m == seg || m == beam.last) continue;
            const auto& s = fp_.segments[m];
            auto c0 = intersect_segments(q0, p0, s.a, s.b);
            if (!c0 || c0->t <= kEps || c0->t >= 1.0 - kEps) continue;
            auto c1 = intersect_segments(q1, p1, s.a, s.b);
            if (c1 && c1->t > kEps && c1->t < 1.0 - kEps) return true;
        }
        return false;
    }

    static std::optional<Vec2> line_hit(Vec2 p, Vec2 q, Vec2 a, Vec2 b) {
        Vec2 r = q - p;
        Vec2 s = b - a;
        double denom = r.cross(s);
        if (std::abs(denom) < 1e-15) return std::nullopt;
        double t = (a - p).cross(s) / denom;
        return p + r * t;
    }

    void expand(const Beam& beam, double gain) {
        const int depth = int(seq_.size()) + 1;
        for (int j = 0; j < int(fp_.segments.size()); ++j) {
            if (j == beam.last) continue;
            const auto& seg = fp_.segments[j];
            if (seg.reflectance <= 0.0) continue;
            double t0 = 0.0, t1 = 1.0;
            if (beam.has_aperture) {
                bool ok = true;
                for (const auto& h : beam.planes()) {
                    if (!clip(h, seg.a, seg.b, t0, t1, kEps)) { ok = false; break; }
                }
                if (!ok || t1 - t0 < 1e-12) continue;
            }
            const Vec2 p0 = seg.a + (seg.b - seg.a) * t0;
            const Vec2 p1 = seg.a + (seg.b - seg.a) * t1;
            // Apex on the wall line cannot produce a specular bounce.
            if (std::abs((seg.b - seg.a).cross(beam.apex - seg.a)) < 1e-12) continue;
            if (fully_occluded(beam, j, p0, p1)) continue;

            const Vec2 image = mirror_point(beam.apex, seg.a, seg.b);
            const double child_gain = gain * seg.reflectance;
            if (prune_floor_ > 0.0) {
                const double dist = (image - rx_).norm() * fp_.scale;
                if (cfg_.K * child_gain / (dist * dist) < prune_floor_) continue;
            }
            Beam child{image, true, p0, p1, j};
            seq_.push_back(j);
            images_.push_back(image);
            bool rx_inside = true;
            for (const auto& h : child.planes()) {
                if (h.eval(rx_) < -kEps) { rx_inside = false; break; }
            }
            if (rx_inside) try_path();
            if (depth < cfg_.max_order) expand(child, child_gain);
            seq_.pop_back();
            images_.pop_back();
        }
    }

    void try_path() {
        const std::size_t k = seq_.size();
        std::vector<Vec2> bounces(k);
        Vec2 target = rx_;
        for (std::size_t i = k; i-- > 0;) {
            const auto& s = fp_.segments[seq_[i]];
            auto hit = intersect_segments(images_[i], target, s.a, s.b);
            if (!hit || hit->t <= kEps || hit->t >= 1.0 - kEps) return;
            target = images_[i] + (target - images_[i]) * hit->t;
            bounces[i] = target;
        }
        Vec2 prev = tx_;
        for (std::size_t i = 0; i < k; ++i) {
            if (!leg_clear(prev, bounces[i])) return;
            prev = bounces[i];
        }
        if (!leg_clear(prev, rx_)) return;
        emit(std::move(bounces));
    }

    void emit(std::vector<Vec2> bounces) {
        PathRecord rec;
        rec.order = int(bounces.size());
        rec.bounce_segments.assign(seq_.begin(), seq_.end());
        if (rec.order == 0) rec.bounce_segments.clear();
        double length_px = 0.0;
        Vec2 prev = tx_;
        for (std::size_t i = 0; i < bounces.size(); ++i) {
            const auto& s = fp_.segments[rec.bounce_segments[i]];
            const Vec2 d = bounces[i] - prev;
            const Vec2 n = (s.b - s.a).perp().normalized();
            const double cos_inc = std::min(1.0, std::abs(d.normalized().dot(n)));
            rec.incidence_angles.push_back(std::acos(cos_inc));
            rec.reflectances.push_back(s.reflectance);
            length_px += d.norm();
            prev = bounces[i];
        }
        length_px += (rx_ - prev).norm();
        rec.bounce_points = std::move(bounces);
        rec.total_length = length_px * fp_.scale;
        rec.delay = rec.total_length / kSpeedOfLight;
        rec.power = path_power(rec, cfg_);
        paths_.push_back(std::move(rec));
    }

    const Floorplan& fp_;
    Vec2 tx_, rx_;
    const SimConfig& cfg_;
    double prune_floor_ = 0.0;
    std::vector<int> seq_;
    std::vector<Vec2> images_;
    std::vector<PathRecord> paths_;
};

}  // namespace

std::vector<PathRecord> trace_paths(const Floorplan& floorplan, Vec2 tx, Vec2 rx, const SimConfig& config) {
    if (config.max_order < 0) throw ValidationError("max_order must be >= 0");
    if (!(config.K > 0.0)) throw ValidationError("K must be positive");
    require_free(floorplan, tx, "transmitter");
    require_free(floorplan, rx, "receiver");
    if ((tx - rx).norm2() == 0.0) throw GeometryError("transmitter and receiver coincide");
    return ImageSourceTracer(floorplan, tx, rx, config).run();
}

std::vector<PathRecord> trace_paths(const Floorplan& floorplan, Vec2 tx, Vec2 rx, int max_order) {
    SimConfig cfg;
    cfg.max_order = max_order;
    return trace_paths(floorplan, tx, rx, cfg);
}

double path_power(const PathRecord& path, const SimConfig& config) {
    if (!(path.total_length > 0.0)) throw GeometryError("path has zero length");
    double gain = config.K;
    for (std::size_t i = 0; i < path.reflectances.size(); ++i) {
        const double c = std::cos(path.incidence_angles[i]);
        gain *= path.reflectances[i] * std::pow(std::max(0.0, c), config.cos_exponent);
    }
    return gain / (path.total_length * path.total_length);
}

ReceivedPower received_power(const Floorplan& floorplan, Vec2 tx, Vec2 rx, const SimConfig& config) {
    ReceivedPower out;
    out.by_order.assign(std::size_t(config.max_order) + 1, 0.0);
    for (const auto& p : trace_paths(floorplan, tx, rx, config)) {
        out.by_order[std::size_t(p.order)] += p.power;
    }
    for (double v : out.by_order) out.total += v;
    return out;
}

ContributionRatios contribution_ratios(const Floorplan& floorplan, std::span<const TxRxPair> pairs,
                                       const SimConfig& config, int reference_order) {
    if (pairs.empty()) throw ValidationError("contribution_ratios needs at least one pair");
    if (reference_order < 2) throw ValidationError("reference order must be >= 2");
    SimConfig cfg = config;
    cfg.max_order = reference_order;
    std::vector<ReceivedPower> powers(pairs.size());
    parallel_for(pairs.size(), 0, [&](std::size_t i) {
        powers[i] = received_power(floorplan, pairs[i].tx, pairs[i].rx, cfg);
    });
    ContributionRatios out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = powers[i];
        if (!(p.total > 0.0)) {
            ++out.excluded;
            continue;
        }
        const double r0 = p.by_order[0] / p.total;
        const double r1 = (p.by_order[0] + p.by_order[1]) / p.total;
        const double r2 = (p.by_order[0] + p.by_order[1] + p.by_order[2]) / p.total;
        out.ratios.push_back({std::min(r0, 1.0), std::min(r1, 1.0), std::min(r2, 1.0)});
        out.included_pairs.push_back(i);
    }
    return out;
}

double subcarrier_consistency(std::span<const PathRecord> paths, int num_subcarriers, double bandwidth,
                              int trials, std::uint64_t seed, double center_frequency) {
    if (paths.empty()) throw ValidationError("subcarrier_consistency needs at least one path");
    if (num_subcarriers < 1) throw ValidationError("num_subcarriers must be >= 1");
    if (trials < 1) throw ValidationError("trials must be >= 1");
    double incoherent = 0.0;
    for (const auto& p : paths) incoherent += p.power;
    if (!(incoherent > 0.0)) return 0.0;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> offset(0.0, bandwidth);
    const double spacing = bandwidth / num_subcarriers;
    double err_sum = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
        const double fc = center_frequency + offset(rng);
        double coherent = 0.0;
        for (int k = 0; k < num_subcarriers; ++k) {
            const double f = fc + (k - 0.5 * (num_subcarriers - 1)) * spacing;
            std::complex<double> h{0.0, 0.0};
            for (const auto& p : paths) {
                h += std::sqrt(p.power) * std::polar(1.0, -2.0 * std::numbers::pi * f * p.delay);
            }
            coherent += std::norm(h);
        }
        coherent /= num_subcarriers;
        err_sum += std::abs(coherent - incoherent) / incoherent;
    }
    return err_sum / trials;
}

int Dataset::num_transmitters() const {
    std::set<int> ids;
    for (const auto& m : measurements) ids.insert(m.tx_id);
    return int(ids.size());
}

Dataset simulate_dataset(const Floorplan& floorplan, std::span<const Vec2> transmitters,
                         std::span<const Pixel> receivers, const SimConfig& config, std::uint64_t seed,
                         int threads) {
    Dataset ds;
    ds.grid_size = floorplan.grid_size;
    ds.scale = floorplan.scale;
    ds.K = config.K;
    ds.max_order = config.max_order;
    ds.seed = seed;
    ds.measurements.resize(transmitters.size() * receivers.size());
    parallel_for(ds.measurements.size(), threads, [&](std::size_t i) {
        const std::size_t t = i / receivers.size();
        const std::size_t r = i % receivers.size();
        Measurement m;
        m.tx_id = int(t);
        m.tx = transmitters[t];
        m.rx = receivers[r].center();
        m.psi = received_power(floorplan, m.tx, m.rx, config).total;
        ds.measurements[i] = m;
    });
    return ds;
}

}  // namespace rfplan
