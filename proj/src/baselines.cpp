#include "rfplan/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>

#include "rfplan/error.hpp"

namespace rfplan {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Bitmap erode(const Bitmap& b, int r) {
    Bitmap out(b.width(), b.height(), 0);
    for (int y = 0; y < b.height(); ++y)
        for (int x = 0; x < b.width(); ++x) {
            if (!b(x, y)) continue;
            bool keep = true;
            for (int dy = -r; dy <= r && keep; ++dy)
                for (int dx = -r; dx <= r && keep; ++dx)
                    if (b.in_bounds(x + dx, y + dy) && !b(x + dx, y + dy)) keep = false;
            out(x, y) = keep;
        }
    return out;
}

Bitmap dilate(const Bitmap& b, int r) {
    Bitmap out(b.width(), b.height(), 0);
    for (int y = 0; y < b.height(); ++y)
        for (int x = 0; x < b.width(); ++x) {
            if (!b(x, y)) continue;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx)
                    if (b.in_bounds(x + dx, y + dy)) out(x + dx, y + dy) = 1;
        }
    return out;
}

Bitmap open_close(const Bitmap& b, int r) {
    if (r == 0) return b;
    Bitmap opened = dilate(erode(b, r), r);
    return erode(dilate(opened, r), r);
}

// Drops 4-connected components smaller than min_area.
void filter_components(Bitmap& b, int min_area) {
    Grid<int> seen(b.width(), b.height(), 0);
    std::vector<Pixel> comp;
    for (int y = 0; y < b.height(); ++y)
        for (int x = 0; x < b.width(); ++x) {
            if (!b(x, y) || seen(x, y)) continue;
            comp.clear();
            std::queue<Pixel> q;
            q.push({x, y});
            seen(x, y) = 1;
            while (!q.empty()) {
                Pixel p = q.front();
                q.pop();
                comp.push_back(p);
                const Pixel nb[4] = {{p.x + 1, p.y}, {p.x - 1, p.y}, {p.x, p.y + 1}, {p.x, p.y - 1}};
                for (Pixel n : nb) {
                    if (b.in_bounds(n.x, n.y) && b(n.x, n.y) && !seen(n.x, n.y)) {
                        seen(n.x, n.y) = 1;
                        q.push(n);
                    }
                }
            }
            if (int(comp.size()) < min_area) {
                for (Pixel p : comp) b(p.x, p.y) = 0;
            }
        }
}

double at_or(const Grid<double>& g, int x, int y, double fallback) {
    if (!g.in_bounds(x, y) || std::isnan(g(x, y))) return fallback;
    return g(x, y);
}

double laplacian(const Grid<double>& g, int x, int y) {
    const double c = g(x, y);
    return at_or(g, x + 1, y, c) + at_or(g, x - 1, y, c) + at_or(g, x, y + 1, c) + at_or(g, x, y - 1, c) - 4 * c;
}

double gradient_magnitude(const Grid<double>& g, int x, int y) {
    const double c = g(x, y);
    const double gx = (at_or(g, x + 1, y, c) - at_or(g, x - 1, y, c)) / 2.0;
    const double gy = (at_or(g, x, y + 1, c) - at_or(g, x, y - 1, c)) / 2.0;
    return std::hypot(gx, gy);
}

std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
    std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return pts;
    std::vector<Vec2> h(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && (h[k - 1] - h[k - 2]).cross(pts[i] - h[k - 2]) <= 0) --k;
        h[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
        while (k >= t && (h[k - 1] - h[k - 2]).cross(pts[i - 1] - h[k - 2]) <= 0) --k;
        h[k++] = pts[i - 1];
    }
    h.resize(k - 1);
    return h;
}

}  // namespace

constexpr double kFloorDb = -150.0;

Grid<double> interpolate_heatmap(std::span<const Measurement> measurements, int grid_size) {
    if (measurements.empty()) throw ValidationError("interpolation needs at least one measurement");
    Grid<double> out(grid_size, grid_size, kNaN);
    std::vector<double> db(measurements.size());
    for (std::size_t i = 0; i < measurements.size(); ++i) {
        const double psi = measurements[i].psi;
        if (!(psi >= 0.0) || !std::isfinite(psi)) throw ValidationError("interpolation needs finite powers >= 0");
        // Pairs that no traced path reaches read as the quietest level.
        db[i] = psi > 0.0 ? std::max(10.0 * std::log10(psi), kFloorDb) : kFloorDb;
    }
    for (int y = 0; y < grid_size; ++y)
        for (int x = 0; x < grid_size; ++x) {
            const Vec2 p{double(x), double(y)};
            double num = 0.0, den = 0.0, exact = 0.0;
            int exact_n = 0;
            for (std::size_t i = 0; i < measurements.size(); ++i) {
                const double d2 = (measurements[i].rx - p).norm2();
                if (d2 == 0.0) {
                    exact += db[i];
                    ++exact_n;
                    continue;
                }
                num += db[i] / d2;
                den += 1.0 / d2;
            }
            out(x, y) = exact_n ? exact / exact_n : num / den;
        }
    return out;
}

void mask_outside_hull(Grid<double>& heatmap, std::span<const Vec2> points) {
    const auto hull = convex_hull({points.begin(), points.end()});
    if (hull.size() < 3) return;
    for (int y = 0; y < heatmap.height(); ++y)
        for (int x = 0; x < heatmap.width(); ++x) {
            const Vec2 p{double(x), double(y)};
            bool inside = true;
            for (std::size_t i = 0; i < hull.size() && inside; ++i) {
                const Vec2 a = hull[i], b = hull[(i + 1) % hull.size()];
                if ((b - a).cross(p - a) < -1e-9) inside = false;
            }
            if (!inside) heatmap(x, y) = kNaN;
        }
}

Segmentation segment_rooms(std::span<const Grid<double>> heatmaps, const SegmentationParams& params) {
    if (params.kernel < 1 || params.kernel % 2 == 0) throw ValidationError("morphology kernel must be odd and >= 1");
    if (heatmaps.empty()) throw ValidationError("segmentation needs at least one heatmap");
    const int w = heatmaps[0].width(), h = heatmaps[0].height();
    const int r = params.kernel / 2;
    Segmentation out;
    out.walls = Bitmap(w, h, 0);
    out.labels = Grid<int>(w, h, -1);

    // Candidate room mask per heatmap.
    std::vector<Bitmap> masks;
    for (std::size_t t = 0; t < heatmaps.size(); ++t) {
        const auto& g = heatmaps[t];
        if (g.width() != w || g.height() != h) throw ValidationError("heatmaps differ in size");
        double peak = -std::numeric_limits<double>::infinity();
        for (double v : g.data())
            if (!std::isnan(v)) peak = std::max(peak, v);
        Bitmap m(w, h, 0);
        if (std::isinf(peak)) {
            out.warnings.push_back("heatmap " + std::to_string(t) + " has no defined cells");
            masks.push_back(m);
            continue;
        }
        const double thr = peak - params.rssi_drop_db;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (std::isnan(g(x, y))) continue;
                m(x, y) = g(x, y) >= thr && std::abs(laplacian(g, x, y)) <= params.laplacian_max;
            }
        m = open_close(m, r);
        filter_components(m, params.min_area);
        masks.push_back(std::move(m));
    }

    // Overlaps go to the smoother heatmap.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int best = -1;
            double best_g = std::numeric_limits<double>::infinity();
            for (std::size_t t = 0; t < masks.size(); ++t) {
                if (!masks[t](x, y)) continue;
                const double gm = gradient_magnitude(heatmaps[t], x, y);
                if (gm < best_g) {
                    best_g = gm;
                    best = int(t);
                }
            }
            out.labels(x, y) = best;
        }

    // Clean each label again after the overlap split.
    Grid<int> cleaned(w, h, -1);
    for (std::size_t t = 0; t < masks.size(); ++t) {
        Bitmap m(w, h, 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) m(x, y) = out.labels(x, y) == int(t);
        m = open_close(m, r);
        filter_components(m, params.min_area);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (m(x, y) && cleaned(x, y) < 0) cleaned(x, y) = int(t);
    }
    out.labels = std::move(cleaned);

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int l = out.labels(x, y);
            if (l < 0) continue;
            const Pixel nb[4] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
            for (Pixel n : nb) {
                if (out.labels.in_bounds(n.x, n.y) && out.labels(n.x, n.y) != l) {
                    out.walls(x, y) = 1;
                    break;
                }
            }
        }
    bool any = false;
    for (int l : out.labels.data()) any = any || l >= 0;
    if (!any) out.warnings.push_back("segmentation found no room region");
    return out;
}

Segmentation segment_rooms(const Grid<double>& heatmap, const SegmentationParams& params) {
    return segment_rooms(std::span(&heatmap, 1), params);
}

Segmentation heatmap_segmentation(std::span<const Measurement> measurements, int grid_size,
                                  const SegmentationParams& params) {
    std::map<int, std::vector<Measurement>> by_tx;
    for (const auto& m : measurements) by_tx[m.tx_id].push_back(m);
    std::vector<Grid<double>> maps;
    for (auto& [id, ms] : by_tx) {
        Grid<double> g = interpolate_heatmap(ms, grid_size);
        std::vector<Vec2> pts;
        for (const auto& m : ms) pts.push_back(m.rx);
        mask_outside_hull(g, pts);
        maps.push_back(std::move(g));
    }
    if (maps.empty()) throw ValidationError("no measurements to segment");
    return segment_rooms(maps, params);
}

double knn_rssi_predict(std::span<const Measurement> training, int tx_id, Vec2 rx, int k, bool uniform) {
    if (k < 1) throw ValidationError("k must be >= 1");
    std::vector<std::pair<double, double>> cand;  // (distance^2, psi)
    for (const auto& m : training) {
        if (m.tx_id == tx_id) cand.push_back({(m.rx - rx).norm2(), m.psi});
    }
    if (cand.empty()) throw ValidationError("no training data for tx_id " + std::to_string(tx_id));
    const std::size_t n = std::min(cand.size(), std::size_t(k));
    std::partial_sort(cand.begin(), cand.begin() + n, cand.end());
    double num = 0.0, den = 0.0, exact = 0.0;
    int exact_n = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (cand[i].first == 0.0) {
            exact += cand[i].second;
            ++exact_n;
        }
        const double w = uniform ? 1.0 : 1.0 / cand[i].first;
        num += w * cand[i].second;
        den += w;
    }
    if (!uniform && exact_n) return exact / exact_n;
    return num / den;
}

}  // namespace rfplan
