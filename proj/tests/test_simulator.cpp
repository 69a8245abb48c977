#include <doctest.h>

#include <cmath>
#include <random>

#include "rfplan/error.hpp"
#include "rfplan/simulator.hpp"

using namespace rfplan;

namespace {

// Plain image-source enumeration over every segment sequence, no beam
// pruning. Slow but obviously exhaustive.
struct BruteForce {
    const Floorplan& fp;
    Vec2 tx, rx;
    double K = 1.0;
    std::vector<double> by_order;

    static Vec2 mirror(Vec2 p, Vec2 a, Vec2 b) {
        Vec2 d = b - a;
        double t = (p - a).dot(d) / d.dot(d);
        Vec2 foot = a + d * t;
        return foot * 2.0 - p;
    }

    bool clear(Vec2 p, Vec2 q) const {
        for (const auto& s : fp.segments) {
            Vec2 r = q - p, e = s.b - s.a;
            double den = r.cross(e);
            if (std::abs(den) < 1e-15) continue;
            double t = (s.a - p).cross(e) / den;
            double u = (s.a - p).cross(r) / den;
            if (t > 1e-9 && t < 1 - 1e-9 && u >= 0 && u <= 1) return false;
        }
        return true;
    }

    void run(int max_order) {
        by_order.assign(max_order + 1, 0.0);
        if (clear(tx, rx)) by_order[0] = K / std::pow((tx - rx).norm() * fp.scale, 2);
        std::vector<int> seq;
        recurse(seq, max_order);
    }

    void recurse(std::vector<int>& seq, int max_order) {
        if (!seq.empty()) evaluate(seq);
        if (int(seq.size()) == max_order) return;
        for (int j = 0; j < int(fp.segments.size()); ++j) {
            if (!seq.empty() && seq.back() == j) continue;
            seq.push_back(j);
            recurse(seq, max_order);
            seq.pop_back();
        }
    }

    void evaluate(const std::vector<int>& seq) {
        std::vector<Vec2> images{tx};
        for (int j : seq) images.push_back(mirror(images.back(), fp.segments[j].a, fp.segments[j].b));
        std::vector<Vec2> pts(seq.size());
        Vec2 target = rx;
        for (int i = int(seq.size()) - 1; i >= 0; --i) {
            const auto& s = fp.segments[seq[i]];
            Vec2 p = images[i + 1];
            Vec2 r = target - p, e = s.b - s.a;
            double den = r.cross(e);
            if (std::abs(den) < 1e-15) return;
            double t = (s.a - p).cross(e) / den;
            double u = (s.a - p).cross(r) / den;
            if (!(t > 1e-9 && t < 1 - 1e-9 && u >= 0 && u <= 1)) return;
            target = p + r * t;
            pts[i] = target;
        }
        double gain = K, len = 0;
        Vec2 prev = tx;
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (!clear(prev, pts[i])) return;
            const auto& s = fp.segments[seq[i]];
            Vec2 n = (s.b - s.a).perp().normalized();
            gain *= s.reflectance * std::abs((pts[i] - prev).normalized().dot(n));
            len += (pts[i] - prev).norm();
            prev = pts[i];
        }
        if (!clear(prev, rx)) return;
        len += (rx - prev).norm();
        by_order[seq.size()] += gain / std::pow(len * fp.scale, 2);
    }
};

Floorplan box_room() {
    std::vector<WallSegment> segs{{{4, 4}, {40, 4}, 0.7}, {{40, 4}, {40, 30}, 0.6},
                                  {{40, 30}, {4, 30}, 0.8}, {{4, 30}, {4, 4}, 0.5}};
    return make_floorplan(48, 0.1, 1.0, segs, {});
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("empty scene has exactly the direct path") {
    Floorplan fp = make_floorplan(32, 0.1, 1.0, {}, {});
    auto paths = trace_paths(fp, {3, 4}, {20, 9}, 3);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].order == 0);
    CHECK(paths[0].total_length == doctest::Approx((Vec2{17, 5}).norm() * 0.1).epsilon(1e-12));
    CHECK(paths[0].delay == doctest::Approx(paths[0].total_length / kSpeedOfLight).epsilon(1e-15));
    SimConfig cfg;
    auto p = received_power(fp, {3, 4}, {20, 9}, cfg);
    CHECK(p.total == doctest::Approx(1.0 / std::pow(paths[0].total_length, 2)));
    CHECK(p.by_order[0] == p.total);
}

TEST_CASE("sealed wall blocks all order-0 power") {
    std::vector<WallSegment> segs{{{16, 0}, {16, 31}, 0.7}};
    Floorplan fp = make_floorplan(32, 0.1, 1.0, segs, {});
    CHECK(trace_paths(fp, {5, 10}, {25, 10}, 0).empty());
}

TEST_CASE("single mirror wall matches the closed-form image") {
    std::vector<WallSegment> segs{{{0, 2}, {63, 2}, 0.7}};
    Floorplan fp = make_floorplan(64, 0.1, 1.0, segs, {});
    Vec2 tx{10, 22}, rx{50, 22};
    auto paths = trace_paths(fp, tx, rx, 1);
    REQUIRE(paths.size() == 2);
    const PathRecord& r = paths[0].order == 1 ? paths[0] : paths[1];
    CHECK(r.order == 1);
    REQUIRE(r.bounce_points.size() == 1);
    CHECK(r.bounce_points[0].x == doctest::Approx(30.0).epsilon(1e-12));
    CHECK(r.bounce_points[0].y == doctest::Approx(2.0).epsilon(1e-12));
    Vec2 image{10, -18};
    CHECK(r.total_length == doctest::Approx((image - rx).norm() * 0.1).epsilon(1e-12));
}

TEST_CASE("path power formula") {
    SimConfig cfg;
    PathRecord los;
    los.total_length = 3.0;
    CHECK(path_power(los, cfg) == doctest::Approx(1.0 / 9.0));
    PathRecord absorb;
    absorb.order = 1;
    absorb.total_length = 2.0;
    absorb.reflectances = {0.0};
    absorb.incidence_angles = {0.3};
    CHECK(path_power(absorb, cfg) == 0.0);
    PathRecord two;
    two.order = 2;
    two.total_length = 10.0;
    two.reflectances = {0.7, 0.7};
    two.incidence_angles = {0.0, 0.0};
    CHECK(path_power(two, cfg) == doctest::Approx(4.9e-3).epsilon(1e-12));
    PathRecord zero;
    CHECK_THROWS_AS(path_power(zero, cfg), GeometryError);
}

TEST_CASE("occluded pair still receives a reflection") {
    std::vector<WallSegment> segs{{{20, 10}, {20, 40}, 0.7}, {{2, 50}, {60, 50}, 0.7}};
    Floorplan fp = make_floorplan(64, 0.1, 1.0, segs, {});
    SimConfig cfg;
    cfg.max_order = 1;
    auto p = received_power(fp, {10, 30}, {30, 30}, cfg);
    CHECK(p.by_order[0] == 0.0);
    CHECK(p.by_order[1] > 0.0);
}

TEST_CASE("box room matches brute-force image sources") {
    Floorplan fp = box_room();
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> ux(6, 38), uy(6, 28);
    for (int trial = 0; trial < 10; ++trial) {
        Vec2 tx{std::round(ux(rng)), std::round(uy(rng))};
        Vec2 rx{std::round(ux(rng)), std::round(uy(rng))};
        if (tx == rx) continue;
        for (int order : {1, 3, 5}) {
            SimConfig cfg;
            cfg.max_order = order;
            auto p = received_power(fp, tx, rx, cfg);
            BruteForce bf{fp, tx, rx};
            bf.run(order);
            for (int k = 0; k <= order; ++k) CHECK(rel(p.by_order[k], bf.by_order[k]) <= 1e-9);
        }
    }
}

TEST_CASE("apartment with interior walls matches brute force") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Floorplan fp = generate_apartment(128, {}, seed);
        auto txs = place_transmitters(fp, fp.rooms, seed);
        auto rxs = place_transmitters(fp, fp.rooms, seed + 100);
        for (Vec2 tx : txs)
            for (Vec2 rx : rxs) {
                if (tx == rx) continue;
                SimConfig cfg;
                cfg.max_order = 3;
                auto p = received_power(fp, tx, rx, cfg);
                BruteForce bf{fp, tx, rx};
                bf.run(3);
                for (int k = 0; k <= 3; ++k) {
                    if (bf.by_order[k] == 0.0) CHECK(p.by_order[k] == 0.0);
                    else CHECK(rel(p.by_order[k], bf.by_order[k]) <= 1e-9);
                }
            }
    }
}

TEST_CASE("reciprocity, translation, K linearity and bounce placement") {
    Floorplan fp = generate_apartment(128, {}, 4);
    auto txs = place_transmitters(fp, fp.rooms, 1);
    auto rxs = place_transmitters(fp, fp.rooms, 2);
    SimConfig cfg;
    cfg.max_order = 3;
    for (Vec2 tx : txs)
        for (Vec2 rx : rxs) {
            auto a = received_power(fp, tx, rx, cfg).total;
            auto b = received_power(fp, rx, tx, cfg).total;
            CHECK(rel(a, b) <= 1e-12);
            SimConfig k3 = cfg;
            k3.K = 3.0;
            CHECK(rel(received_power(fp, tx, rx, k3).total, 3.0 * a) <= 1e-12);
            for (const auto& path : trace_paths(fp, tx, rx, cfg)) {
                CHECK(path.order == int(path.bounce_points.size()));
                for (std::size_t i = 0; i < path.bounce_points.size(); ++i) {
                    const auto& s = fp.segments[path.bounce_segments[i]];
                    CHECK(point_segment_distance(path.bounce_points[i], s.a, s.b) <= 1e-9);
                }
            }
        }

    // Shift the scene by whole pixels so the raster moves with it.
    std::vector<WallSegment> shifted;
    for (auto s : fp.segments) shifted.push_back({s.a - Vec2{5, 3}, s.b - Vec2{5, 3}, s.reflectance});
    Floorplan moved = make_floorplan(128, fp.scale, fp.wall_thickness, shifted, {});
    auto orig = trace_paths(fp, txs[0], rxs[1], cfg);
    auto tr = trace_paths(moved, txs[0] - Vec2{5, 3}, rxs[1] - Vec2{5, 3}, cfg);
    REQUIRE(orig.size() == tr.size());
    for (std::size_t i = 0; i < orig.size(); ++i) {
        CHECK(tr[i].total_length == doctest::Approx(orig[i].total_length).epsilon(1e-12));
    }
}

TEST_CASE("tracer rejects receivers on walls") {
    std::vector<WallSegment> segs{{{16, 0}, {16, 31}, 0.7}};
    Floorplan fp = make_floorplan(32, 0.1, 1.0, segs, {});
    CHECK_THROWS_AS(trace_paths(fp, {16, 5}, {3, 3}, 1), PlacementError);
}

TEST_CASE("contribution ratios") {
    SUBCASE("empty scene is all LoS") {
        Floorplan fp = make_floorplan(32, 0.1, 1.0, {}, {});
        std::vector<TxRxPair> pairs{{{1, 1}, {20, 20}}, {{5, 3}, {9, 30}}};
        auto r = contribution_ratios(fp, pairs, {}, 4);
        for (const auto& v : r.ratios) CHECK(v[0] == 1.0);
    }
    SUBCASE("ordering holds on a two-room apartment") {
        ApartmentParams p;
        p.num_rooms = 2;
        Floorplan fp = generate_apartment(96, p, 8);
        auto txs = place_transmitters(fp, fp.rooms, 3);
        std::vector<TxRxPair> pairs;
        for (std::uint64_t s = 0; s < 10; ++s) {
            for (Vec2 rx : place_transmitters(fp, fp.rooms, 50 + s)) pairs.push_back({txs[0], rx});
        }
        auto r = contribution_ratios(fp, pairs, {}, 6);
        CHECK(r.ratios.size() + r.excluded == pairs.size());
        for (const auto& v : r.ratios) {
            CHECK(v[0] >= 0.0);
            CHECK(v[0] <= v[1]);
            CHECK(v[1] <= v[2]);
            CHECK(v[2] <= 1.0);
        }
    }
}

TEST_CASE("subcarrier consistency") {
    PathRecord a;
    a.power = 1.0;
    a.delay = 30e-9;
    SUBCASE("single path has no cross terms") {
        std::vector<PathRecord> one{a};
        for (int k : {1, 4, 64}) CHECK(subcarrier_consistency(one, k, 20e6, 8, 1) == doctest::Approx(0.0));
    }
    SUBCASE("identical delays are fully coherent") {
        std::vector<PathRecord> two{a, a};
        CHECK(subcarrier_consistency(two, 64, 20e6, 8, 1) == doctest::Approx(1.0));
    }
    SUBCASE("large delay spread averages out") {
        PathRecord b = a;
        b.delay = a.delay + 10.3 / 20e6;
        std::vector<PathRecord> two{a, b};
        CHECK(subcarrier_consistency(two, 64, 20e6, 16, 1) < 0.05);
    }
}
