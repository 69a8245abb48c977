#include "rfplan/geometry.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <random>
#include <string>

#include "rfplan/error.hpp"

namespace rfplan {

namespace {

std::string point_str(Vec2 p) {
    return "(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ")";
}

std::string pixel_str(Pixel p) {
    return "(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ")";
}

Pixel nearest_pixel(Vec2 p) {
    return {int(std::lround(p.x)), int(std::lround(p.y))};
}

}  // namespace

bool Floorplan::is_free(Vec2 p) const {
    Pixel px = nearest_pixel(p);
    return raster.in_bounds(px.x, px.y) && raster(px.x, px.y) == 0;
}

double default_wall_thickness(int grid_size) {
    return std::max(1.0, std::round(2.0 * grid_size / 512.0));
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    Vec2 ab = b - a;
    double len2 = ab.norm2();
    if (len2 == 0.0) return (p - a).norm();
    double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + ab * t)).norm();
}

std::optional<SegmentHit> intersect_segments(Vec2 p, Vec2 q, Vec2 a, Vec2 b) {
    Vec2 r = q - p;
    Vec2 s = b - a;
    double denom = r.cross(s);
    if (std::abs(denom) < 1e-15) return std::nullopt;
    Vec2 ap = a - p;
    double t = ap.cross(s) / denom;
    double u = ap.cross(r) / denom;
    if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return std::nullopt;
    return SegmentHit{t, u};
}

bool point_in_polygon(Vec2 p, std::span<const Vec2> polygon) {
    bool inside = false;
    const std::size_t n = polygon.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        Vec2 a = polygon[i];
        Vec2 b = polygon[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < x) inside = !inside;
        }
    }
    return inside;
}

Vec2 polygon_centroid(std::span<const Vec2> polygon) {
    double area2 = 0.0;
    Vec2 c{};
    const std::size_t n = polygon.size();
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 a = polygon[i];
        Vec2 b = polygon[(i + 1) % n];
        double w = a.cross(b);
        area2 += w;
        c += (a + b) * w;
    }
    if (std::abs(area2) < 1e-12) {
        Vec2 mean{};
        for (Vec2 v : polygon) mean += v;
        return mean / double(n);
    }
    return c / (3.0 * area2);
}

Bitmap rasterize_floorplan(std::span<const WallSegment> segments, int grid_size, double wall_thickness) {
    if (grid_size <= 0) throw ValidationError("grid_size must be positive");
    if (!(wall_thickness >= 1.0)) throw ValidationError("wall_thickness must be >= 1 pixel");
    Bitmap raster(grid_size, grid_size, 0);
    const double radius = wall_thickness / 2.0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& seg = segments[i];
        for (Vec2 p : {seg.a, seg.b}) {
            if (!(p.x >= 0.0 && p.y >= 0.0 && p.x < grid_size && p.y < grid_size)) {
                throw ValidationError("segment " + std::to_string(i) + " endpoint " + point_str(p) +
                                      " lies outside the " + std::to_string(grid_size) + "x" +
                                      std::to_string(grid_size) + " grid");
            }
        }
        int x0 = std::max(0, int(std::floor(std::min(seg.a.x, seg.b.x) - radius)));
        int x1 = std::min(grid_size - 1, int(std::ceil(std::max(seg.a.x, seg.b.x) + radius)));
        int y0 = std::max(0, int(std::floor(std::min(seg.a.y, seg.b.y) - radius)));
        int y1 = std::min(grid_size - 1, int(std::ceil(std::max(seg.a.y, seg.b.y) + radius)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                if (point_segment_distance({double(x), double(y)}, seg.a, seg.b) <= radius + 1e-9) {
                    raster(x, y) = 1;
                }
            }
        }
    }
    return raster;
}

Floorplan make_floorplan(int grid_size, double scale, double wall_thickness,
                         std::vector<WallSegment> segments, std::vector<Room> rooms) {
    if (!(scale > 0.0)) throw ValidationError("scale must be positive");
    for (std::size_t i = 0; i < segments.size(); ++i) {
        double r = segments[i].reflectance;
        if (!(r >= 0.0 && r <= 1.0)) {
            throw ValidationError("segment " + std::to_string(i) + " reflectance " + std::to_string(r) +
                                  " outside [0, 1]");
        }
    }
    Floorplan fp;
    fp.grid_size = grid_size;
    fp.scale = scale;
    fp.wall_thickness = wall_thickness;
    fp.raster = rasterize_floorplan(segments, grid_size, wall_thickness);
    fp.segments = std::move(segments);
    fp.rooms = std::move(rooms);
    return fp;
}

std::vector<Pixel> astar_path(const Bitmap& walls, Pixel start, Pixel goal) {
    const int w = walls.width();
    const int h = walls.height();
    auto blocked = [&](int x, int y) { return !walls.in_bounds(x, y) || walls(x, y) != 0; };
    if (blocked(start.x, start.y) || blocked(goal.x, goal.y)) {
        throw ConnectivityError("anchor " + pixel_str(blocked(start.x, start.y) ? start : goal) +
                                " is not in free space");
    }

    struct Node {
        int steps;
        double f_len;
        std::uint64_t order;
        int idx;
    };
    struct Worse {
        bool operator()(const Node& a, const Node& b) const {
            if (a.steps != b.steps) return a.steps > b.steps;
            if (a.f_len != b.f_len) return a.f_len > b.f_len;
            return a.order > b.order;
        }
    };

    const std::size_t n = std::size_t(w) * std::size_t(h);
    std::vector<int> g_steps(n, std::numeric_limits<int>::max());
    std::vector<double> g_len(n, std::numeric_limits<double>::infinity());
    std::vector<int> parent(n, -1);
    std::vector<std::uint8_t> closed(n, 0);

    auto heuristic = [&](int x, int y, int& steps, double& len) {
        int dx = std::abs(x - goal.x);
        int dy = std::abs(y - goal.y);
        steps = std::max(dx, dy);
        len = (std::max(dx, dy) - std::min(dx, dy)) + std::sqrt(2.0) * std::min(dx, dy);
    };

    std::priority_queue<Node, std::vector<Node>, Worse> open;
    std::uint64_t counter = 0;
    const int s_idx = start.y * w + start.x;
    const int goal_idx = goal.y * w + goal.x;
    g_steps[s_idx] = 0;
    g_len[s_idx] = 0.0;
    {
        int hs;
        double hl;
        heuristic(start.x, start.y, hs, hl);
        open.push({hs, hl, counter++, s_idx});
    }

    static constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    static constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};

    while (!open.empty()) {
        Node cur = open.top();
        open.pop();
        if (closed[cur.idx]) continue;
        closed[cur.idx] = 1;
        if (cur.idx == goal_idx) break;
        const int cx = cur.idx % w;
        const int cy = cur.idx / w;
        for (int k = 0; k < 8; ++k) {
            int nx = cx + kDx[k];
            int ny = cy + kDy[k];
            if (blocked(nx, ny)) continue;
            const bool diagonal = kDx[k] != 0 && kDy[k] != 0;
            if (diagonal && (blocked(cx + kDx[k], cy) || blocked(cx, cy + kDy[k]))) continue;
            const int nidx = ny * w + nx;
            if (closed[nidx]) continue;
            const int steps = g_steps[cur.idx] + 1;
            const double len = g_len[cur.idx] + (diagonal ? std::sqrt(2.0) : 1.0);
            if (steps < g_steps[nidx] || (steps == g_steps[nidx] && len < g_len[nidx])) {
                g_steps[nidx] = steps;
                g_len[nidx] = len;
                parent[nidx] = cur.idx;
                int hs;
                double hl;
                heuristic(nx, ny, hs, hl);
                open.push({steps + hs, len + hl, counter++, nidx});
            }
        }
    }

    if (!closed[goal_idx]) {
        throw ConnectivityError("no free-space path between anchors " + pixel_str(start) + " and " +
                                pixel_str(goal));
    }
    std::vector<Pixel> path;
    for (int idx = goal_idx; idx != -1; idx = parent[idx]) path.push_back({idx % w, idx / w});
    std::reverse(path.begin(), path.end());
    return path;
}

TrajectoryResult generate_trajectory(const Floorplan& floorplan, std::span<const Pixel> anchors,
                                     int sample_interval, std::uint64_t seed) {
    if (sample_interval < 1) throw ValidationError("sample_interval must be >= 1");
    if (anchors.empty()) throw ValidationError("trajectory needs at least one anchor");
    for (Pixel a : anchors) {
        if (!floorplan.raster.in_bounds(a.x, a.y) || floorplan.is_wall(a)) {
            throw ValidationError("anchor " + pixel_str(a) + " is not in free space");
        }
    }

    TrajectoryResult out;
    out.trajectory.sample_interval = sample_interval;
    auto& pts = out.trajectory.points;
    pts.push_back(anchors[0]);
    for (std::size_t i = 1; i < anchors.size(); ++i) {
        auto leg = astar_path(floorplan.raster, anchors[i - 1], anchors[i]);
        pts.insert(pts.end(), leg.begin() + 1, leg.end());
    }

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> phase_dist(0, sample_interval - 1);
    const std::size_t phase = std::size_t(phase_dist(rng)) % pts.size();
    for (std::size_t i = phase; i < pts.size(); i += std::size_t(sample_interval)) {
        out.rx_positions.push_back(pts[i]);
    }
    return out;
}

namespace {

Pixel nearest_free_pixel(const Floorplan& fp, Vec2 target, const Room* room) {
    Pixel best{-1, -1};
    double best_d = std::numeric_limits<double>::infinity();
    for (int y = 0; y < fp.grid_size; ++y) {
        for (int x = 0; x < fp.grid_size; ++x) {
            if (fp.raster(x, y)) continue;
            if (room && !point_in_polygon({double(x), double(y)}, room->polygon)) continue;
            double d = (Vec2{double(x), double(y)} - target).norm2();
            if (d < best_d) {
                best_d = d;
                best = {x, y};
            }
        }
    }
    if (best.x < 0) throw PlacementError("room has no free pixel");
    return best;
}

}  // namespace

std::vector<Pixel> room_anchor_points(const Floorplan& floorplan) {
    std::vector<Pixel> out;
    for (const auto& room : floorplan.rooms) {
        out.push_back(nearest_free_pixel(floorplan, polygon_centroid(room.polygon), &room));
    }
    return out;
}

std::vector<Pixel> room_coverage_anchors(const Floorplan& floorplan, double inset_fraction) {
    std::vector<Pixel> out;
    for (const auto& room : floorplan.rooms) {
        Vec2 lo{1e300, 1e300}, hi{-1e300, -1e300};
        for (Vec2 v : room.polygon) {
            lo = {std::min(lo.x, v.x), std::min(lo.y, v.y)};
            hi = {std::max(hi.x, v.x), std::max(hi.y, v.y)};
        }
        Vec2 c = polygon_centroid(room.polygon);
        Vec2 span = hi - lo;
        Vec2 in{span.x * inset_fraction, span.y * inset_fraction};
        const Vec2 targets[5] = {c,
                                 {lo.x + in.x, lo.y + in.y},
                                 {hi.x - in.x, lo.y + in.y},
                                 {hi.x - in.x, hi.y - in.y},
                                 {lo.x + in.x, hi.y - in.y}};
        for (Vec2 t : targets) out.push_back(nearest_free_pixel(floorplan, t, &room));
        out.push_back(out[out.size() - 5]);
    }
    return out;
}

std::vector<Pixel> sample_receivers(const Floorplan& floorplan, int count, std::uint64_t seed) {
    if (count < 1) throw ValidationError("receiver count must be >= 1");
    const auto anchors = room_coverage_anchors(floorplan, 0.1);
    const auto full = generate_trajectory(floorplan, anchors, 1, seed);
    const auto& pts = full.trajectory.points;
    // Evenly spaced over the whole walk with a seeded phase; an integer
    // interval would either overshoot the count or cut off the last rooms.
    const double step = double(pts.size()) / double(count);
    std::mt19937_64 rng(seed);
    const double phase = std::uniform_real_distribution<double>(0.0, step)(rng);
    TrajectoryResult res;
    for (int i = 0; i < count; ++i) {
        const auto idx = std::min(pts.size() - 1, std::size_t(phase + step * i));
        res.rx_positions.push_back(pts[idx]);
    }
    return res.rx_positions;
}

std::vector<Vec2> place_transmitters(const Floorplan& floorplan, std::span<const Room> rooms,
                                     std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Vec2> out;
    for (std::size_t r = 0; r < rooms.size(); ++r) {
        std::vector<Pixel> free;
        for (int y = 0; y < floorplan.grid_size; ++y) {
            for (int x = 0; x < floorplan.grid_size; ++x) {
                if (floorplan.raster(x, y)) continue;
                if (point_in_polygon({double(x), double(y)}, rooms[r].polygon)) free.push_back({x, y});
            }
        }
        if (free.empty()) throw PlacementError("room " + std::to_string(r) + " has no free pixel");
        std::uniform_int_distribution<std::size_t> pick(0, free.size() - 1);
        out.push_back(free[pick(rng)].center());
    }
    return out;
}

Floorplan generate_apartment(int grid_size, const ApartmentParams& params, std::uint64_t seed) {
    if (params.num_rooms < 1) throw ValidationError("num_rooms must be >= 1");
    std::mt19937_64 rng(seed);
    auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

    struct Rect {
        int x0, y0, x1, y1;
        int area() const { return (x1 - x0) * (y1 - y0); }
    };
    const int last = grid_size - 1;
    Rect outer{uniform_int(params.margin_min, params.margin_max), uniform_int(params.margin_min, params.margin_max),
               last - uniform_int(params.margin_min, params.margin_max),
               last - uniform_int(params.margin_min, params.margin_max)};

    std::vector<WallSegment> segments;
    const double refl = params.reflectance;
    auto add = [&](double ax, double ay, double bx, double by) {
        segments.push_back({{ax, ay}, {bx, by}, refl});
    };
    add(outer.x0, outer.y0, outer.x1, outer.y0);
    add(outer.x1, outer.y0, outer.x1, outer.y1);
    add(outer.x1, outer.y1, outer.x0, outer.y1);
    add(outer.x0, outer.y1, outer.x0, outer.y0);

    std::vector<Rect> rooms{outer};
    while (int(rooms.size()) < params.num_rooms) {
        auto it = std::max_element(rooms.begin(), rooms.end(),
                                   [](const Rect& a, const Rect& b) { return a.area() < b.area(); });
        Rect r = *it;
        const bool vertical = (r.x1 - r.x0) >= (r.y1 - r.y0);
        const int lo = vertical ? r.x0 : r.y0;
        const int hi = vertical ? r.x1 : r.y1;
        if (hi - lo < 2 * params.min_room_side) {
            throw ValidationError("grid too small for " + std::to_string(params.num_rooms) + " rooms");
        }
        int cut = int(std::lround(lo + (hi - lo) * uniform(0.38, 0.62)));
        cut = std::clamp(cut, lo + params.min_room_side, hi - params.min_room_side);
        const int span_lo = vertical ? r.y0 : r.x0;
        const int span_hi = vertical ? r.y1 : r.x1;
        const int half_door = params.door_width / 2;
        const int door_c = uniform_int(span_lo + half_door + 3, span_hi - half_door - 3);
        if (vertical) {
            add(cut, span_lo, cut, door_c - half_door);
            add(cut, door_c + half_door, cut, span_hi);
            *it = {r.x0, r.y0, cut, r.y1};
            rooms.push_back({cut, r.y0, r.x1, r.y1});
        } else {
            add(span_lo, cut, door_c - half_door, cut);
            add(door_c + half_door, cut, span_hi, cut);
            *it = {r.x0, r.y0, r.x1, cut};
            rooms.push_back({r.x0, cut, r.x1, r.y1});
        }
    }

    std::vector<Room> room_polys;
    for (const Rect& r : rooms) {
        room_polys.push_back({{{double(r.x0), double(r.y0)},
                               {double(r.x1), double(r.y0)},
                               {double(r.x1), double(r.y1)},
                               {double(r.x0), double(r.y1)}}});
    }
    double thickness = params.wall_thickness > 0.0 ? params.wall_thickness : default_wall_thickness(grid_size);
    return make_floorplan(grid_size, params.scale, thickness, std::move(segments), std::move(room_polys));
}

}  // namespace rfplan
