#include "rfplan/txloc.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "rfplan/error.hpp"

namespace rfplan {

namespace {

struct Objective {
    std::vector<Vec2> rx;
    std::vector<double> psi;
    double K;
    double scale;
    bool fit_K;
    double norm;  // sum psi^2, keeps values O(1)

    // Returns the normalized objective and the K used.
    double operator()(Vec2 p, double* k_out = nullptr) const {
        std::vector<double> g(rx.size());
        for (std::size_t i = 0; i < rx.size(); ++i) {
            const double d = (p - rx[i]).norm() * scale;
            if (d < 1e-9) return std::numeric_limits<double>::infinity();
            g[i] = 1.0 / (d * d);
        }
        double k = K;
        if (fit_K) {
            double num = 0.0, den = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                num += psi[i] * g[i];
                den += g[i] * g[i];
            }
            k = den > 0.0 ? num / den : K;
        }
        double f = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double r = psi[i] - k * g[i];
            f += r * r;
        }
        if (k_out) *k_out = k;
        return f / norm;
    }

    Vec2 gradient(Vec2 p) const {
        const double h = 1e-5;
        return {((*this)(p + Vec2{h, 0}) - (*this)(p - Vec2{h, 0})) / (2 * h),
                ((*this)(p + Vec2{0, h}) - (*this)(p - Vec2{0, h})) / (2 * h)};
    }
};

struct Run {
    Vec2 p;
    double f;
    int iterations;
    bool converged;
};

Run bfgs(const Objective& obj, Vec2 x, const TxlocConfig& cfg) {
    double f = obj(x);
    Vec2 g = obj.gradient(x);
    // Inverse Hessian approximation, symmetric 2x2.
    double h11 = 1.0, h12 = 0.0, h22 = 1.0;
    bool scaled = false;
    for (int it = 0; it < cfg.max_iterations; ++it) {
        if (g.norm() < cfg.tol) return {x, f, it, true};
        Vec2 dir{-(h11 * g.x + h12 * g.y), -(h12 * g.x + h22 * g.y)};
        if (dir.dot(g) >= 0.0) {
            h11 = h22 = 1.0;
            h12 = 0.0;
            dir = -g;
        }
        double step = 1.0;
        if (!scaled) step = std::min(1.0, 1.0 / std::max(g.norm(), 1e-300));
        Vec2 xn;
        double fn = f;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            xn = x + dir * step;
            fn = obj(xn);
            if (std::isfinite(fn) && fn <= f + 1e-4 * step * dir.dot(g)) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        // Far from every receiver the objective is nearly flat with negative
        // curvature; grow the step while it keeps paying off.
        for (int grow = 0; accepted && step == 1.0 && grow < 40; ++grow) {
            const Vec2 xg = x + dir * (2.0 * std::pow(2.0, grow));
            const double fg = obj(xg);
            if (!(std::isfinite(fg) && fg < fn)) break;
            xn = xg;
            fn = fg;
        }
        if (!accepted || (xn - x).norm() < 1e-12) return {x, f, it, (xn - x).norm() < 1e-12 || !accepted};
        const Vec2 gn = obj.gradient(xn);
        const Vec2 s = xn - x, y = gn - g;
        const double sy = s.dot(y);
        if (sy > 1e-300) {
            if (!scaled) {
                const double gamma = sy / y.dot(y);
                h11 = h22 = gamma;
                h12 = 0.0;
                scaled = true;
            }
            // H+ = (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            const double rho = 1.0 / sy;
            const double hy1 = h11 * y.x + h12 * y.y, hy2 = h12 * y.x + h22 * y.y;
            const double yhy = y.x * hy1 + y.y * hy2;
            const double c = rho * rho * yhy + rho;
            h11 += c * s.x * s.x - rho * (hy1 * s.x + s.x * hy1);
            h12 += c * s.x * s.y - rho * (hy1 * s.y + s.x * hy2);
            h22 += c * s.y * s.y - rho * (hy2 * s.y + s.y * hy2);
        }
        x = xn;
        f = fn;
        g = gn;
    }
    return {x, f, cfg.max_iterations, g.norm() < cfg.tol};
}

bool collinear(const std::vector<Vec2>& pts) {
    Vec2 mean{};
    for (Vec2 p : pts) mean += p;
    mean = mean / double(pts.size());
    double sxx = 0, sxy = 0, syy = 0;
    for (Vec2 p : pts) {
        const Vec2 d = p - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    const double tr = sxx + syy, det = sxx * syy - sxy * sxy;
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4 - det));
    const double lmax = tr / 2 + disc, lmin = tr / 2 - disc;
    return lmin <= 1e-9 * std::max(lmax, 1e-300);
}

}  // namespace

TxEstimate estimate_tx(std::span<const Measurement> measurements, const TxlocConfig& cfg) {
    if (measurements.size() < 3) throw ValidationError("transmitter estimate needs at least 3 measurements");
    if (cfg.P < 3 || std::size_t(cfg.P) > measurements.size()) {
        throw ValidationError("P must be in [3, " + std::to_string(measurements.size()) + "], got " +
                              std::to_string(cfg.P));
    }
    std::vector<std::size_t> order(measurements.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return measurements[a].psi > measurements[b].psi; });

    Objective obj{{}, {}, cfg.K, cfg.scale, cfg.fit_K, 0.0};
    Vec2 centroid{};
    double wsum = 0.0;
    for (int i = 0; i < cfg.P; ++i) {
        const auto& m = measurements[order[std::size_t(i)]];
        obj.rx.push_back(m.rx);
        obj.psi.push_back(m.psi);
        obj.norm += m.psi * m.psi;
        centroid += m.rx * m.psi;
        wsum += m.psi;
    }
    if (!(obj.norm > 0.0)) throw ValidationError("selected measurements carry no power");
    centroid = centroid / wsum;

    const Vec2 init = cfg.init.value_or(centroid);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> jit(-cfg.jitter, cfg.jitter);
    std::vector<Vec2> starts{init};
    for (int r = 0; r < cfg.restarts; ++r) starts.push_back(init + Vec2{jit(rng), jit(rng)});

    Run best{init, std::numeric_limits<double>::infinity(), 0, false};
    int total_iterations = 0;
    for (Vec2 s : starts) {
        if (!std::isfinite(obj(s))) s = s + Vec2{1e-3, 1e-3};
        Run r = bfgs(obj, s, cfg);
        total_iterations += r.iterations;
        if (r.f < best.f || (r.f == best.f && r.converged && !best.converged)) best = r;
    }
    if (!best.converged) {
        throw NumericalError("transmitter estimate did not converge; best iterate (" + std::to_string(best.p.x) +
                             ", " + std::to_string(best.p.y) + ") objective " + std::to_string(best.f));
    }

    TxEstimate est;
    est.position = best.p;
    if (cfg.grid_size > 0) {
        est.position.x = std::clamp(est.position.x, 0.0, double(cfg.grid_size - 1));
        est.position.y = std::clamp(est.position.y, 0.0, double(cfg.grid_size - 1));
    }
    double k = cfg.K;
    est.residual = obj(est.position, &k) * obj.norm;
    est.K = k;
    est.iterations = total_iterations;
    est.collinear = collinear(obj.rx);
    est.converged = true;
    return est;
}

}  // namespace rfplan
