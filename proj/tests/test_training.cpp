#include <doctest.h>

#include <cmath>
#include <random>

#include "rfplan/error.hpp"
#include "rfplan/metrics.hpp"
#include "rfplan/training.hpp"

using namespace rfplan;

namespace {

constexpr double kScale = 0.1;

Dataset free_space(int L, std::span<const Vec2> txs, int receivers, std::uint64_t seed) {
    Dataset d;
    d.grid_size = L;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> p(1, L - 2);
    for (std::size_t t = 0; t < txs.size(); ++t) {
        for (int i = 0; i < receivers; ++i) {
            Vec2 rx{double(p(rng)), double(p(rng))};
            if ((rx - txs[t]).norm() < 2.0) continue;
            d.measurements.push_back({int(t), txs[t], rx, 1.0 / std::pow((rx - txs[t]).norm() * kScale, 2)});
        }
    }
    return d;
}

VoxelField smooth_field(int L, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double a = u(rng), b = u(rng), c = u(rng);
    VoxelField f(L, 4);
    std::vector<float> logits(f.voxels());
    for (int y = 0; y < L; ++y)
        for (int x = 0; x < L; ++x) logits[std::size_t(y * L + x)] = float(3 * std::sin(a * x + b * y + c));
    f.set_delta_logits(logits);
    return f;
}

TrainConfig quick(int epochs1, int epochs2 = 0) {
    TrainConfig cfg;
    cfg.stage1.epochs = epochs1;
    cfg.stage2.epochs = epochs2;
    cfg.n_r = 32;
    return cfg;
}

}  // namespace

TEST_CASE("orientation_target examples") {
    VoxelField flat(16, 4);
    for (int v = 0; v < 256; ++v) CHECK_FALSE(orientation_target(flat, v).has_value());

    VoxelField step(16, 4);
    std::vector<float> logits(step.voxels());
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) logits[std::size_t(y * 16 + x)] = x < 8 ? INFINITY : -INFINITY;
    step.set_delta_logits(logits);
    for (int y = 0; y < 16; ++y) {
        for (int x : {7, 8}) {
            const auto t = orientation_target(step, step.index(x, y));
            REQUIRE(t.has_value());
            CHECK(std::abs(t->x) == doctest::Approx(1.0));
            CHECK(t->y == doctest::Approx(0.0));
        }
        CHECK_FALSE(orientation_target(step, step.index(3, y)).has_value());
    }
}

TEST_CASE("orientation_target matches a central-difference oracle on smooth fields") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const VoxelField f = smooth_field(20, seed);
        for (int y = 1; y < 19; ++y) {
            for (int x = 1; x < 19; ++x) {
                const Vec2 g{(f.delta(x + 1, y) - f.delta(x - 1, y)) / 2, (f.delta(x, y + 1) - f.delta(x, y - 1)) / 2};
                const auto t = orientation_target(f, f.index(x, y), 0.1);
                if (g.norm() < 0.1) {
                    CHECK_FALSE(t.has_value());
                    continue;
                }
                REQUIRE(t.has_value());
                CHECK(std::abs(t->x - g.x / g.norm()) <= 1e-12);
                CHECK(std::abs(t->y - g.y / g.norm()) <= 1e-12);
            }
        }
    }
}

TEST_CASE("orientation_loss examples") {
    VoxelField step(16, 4);
    std::vector<float> logits(step.voxels());
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) logits[std::size_t(y * 16 + x)] = x < 8 ? INFINITY : -INFINITY;
    step.set_delta_logits(logits);
    std::vector<int> edge;
    for (int y = 0; y < 16; ++y) edge.push_back(step.index(7, y));

    std::vector<double> along(step.voxels() * 4, 0.0), across(step.voxels() * 4, 0.0);
    for (std::size_t v = 0; v < step.voxels(); ++v) {
        along[v * 4 + 2] = 1.0;   // normal (-1, 0): the target, sign aside
        across[v * 4 + 1] = 1.0;  // normal (0, 1)
    }
    CHECK(orientation_loss(step, edge, along, 0.1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(orientation_loss(step, edge, across, 0.1) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("orientation_loss decreases under gradient descent on orientation logits") {
    VoxelField f = smooth_field(16, 3);
    std::mt19937_64 rng(1);
    std::normal_distribution<float> n(0.0f, 1.0f);
    for (auto& v : f.orientation_logits) v = n(rng);
    std::vector<int> all(f.voxels());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = int(i);
    double prev = INFINITY;
    for (int step = 0; step < 100; ++step) {
        const auto w = soft_bin_weights(f);
        GradientBuffer buf(f.voxels(), 4);
        const double loss = orientation_loss(f, all, w, 0.1, &buf, 1.0);
        CHECK(loss <= prev + 1e-12);
        prev = loss;
        LogitGradients g;
        to_logit_gradients(f, buf, w, 1.0, g);
        for (std::size_t i = 0; i < g.orientation.size(); ++i) f.orientation_logits[i] -= float(0.5 * g.orientation[i]);
    }
}

TEST_CASE("tv_regularizer examples and a double-loop oracle") {
    const std::vector<std::vector<Vec2>> constant(3, std::vector<Vec2>(5, Vec2{0.6, 0.8}));
    CHECK(tv_regularizer(constant) == 0.0);
    std::vector<std::vector<Vec2>> flip(2);
    for (int i = 0; i < 6; ++i)
        for (auto& r : flip) r.push_back(i % 2 ? Vec2{1, 0} : Vec2{0, 1});
    CHECK(tv_regularizer(flip) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK_THROWS_AS(tv_regularizer(std::vector<std::vector<Vec2>>(2, std::vector<Vec2>(1))), ValidationError);

    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<std::vector<Vec2>> rays(7, std::vector<Vec2>(9));
    for (auto& r : rays)
        for (auto& v : r) v = {n(rng), n(rng)};
    double sum = 0.0;
    for (const auto& r : rays)
        for (std::size_t i = 0; i + 1 < r.size(); ++i)
            sum += std::pow(r[i + 1].x - r[i].x, 2) + std::pow(r[i + 1].y - r[i].y, 2);
    CHECK(std::abs(tv_regularizer(rays) - sum / (7.0 * 8.0)) <= 1e-12);
}

TEST_CASE("Stage 1 on free-space data clears the paths") {
    const std::vector<Vec2> txs{{6, 6}, {25, 20}};
    const Dataset d = free_space(32, txs, 60, 1);
    TrainReport rep;
    const VoxelField f = run_training(d, quick(200), &rep);
    CHECK(rep.stage1.trace.back().data < 1e-6);
    double worst = 0.0;
    for (const auto& m : d.measurements)
        for (const auto& s : sample_ray(f, m.tx, m.rx, 32).samples) worst = std::max(worst, sample_delta(f, s));
    CHECK(worst < 0.05);
}

TEST_CASE("Stage 1 makes an occluded pair opaque somewhere along its ray") {
    Dataset d = free_space(32, std::vector<Vec2>{{4, 16}}, 40, 2);
    // Receivers right of x = 20 hear nothing: a wall sits in between.
    for (auto& m : d.measurements)
        if (m.rx.x > 20) m.psi = 0.0;
    const VoxelField f = run_training(d, quick(200));
    // Straight-through opacity stops rising once a sample reads as opaque, so
    // the voxels settle just past the point where the ray is cut.
    int occluded = 0;
    for (const auto& m : d.measurements) {
        if (m.psi != 0.0) continue;
        ++occluded;
        CHECK(psi_los(f, m.tx, m.rx, 1.0, 32) == 0.0);
        double peak = 0.0;
        for (const auto& s : sample_ray(f, m.tx, m.rx, 32).samples)
            for (int v : s.voxel) peak = std::max(peak, f.delta(v));
        CHECK(peak >= 0.5);
    }
    CHECK(occluded > 0);
}

TEST_CASE("Stage 1 loss is non-increasing over 10-epoch windows") {
    Dataset d = free_space(32, std::vector<Vec2>{{4, 16}, {28, 5}}, 40, 3);
    for (auto& m : d.measurements)
        if (std::abs(m.rx.x - 16) < 3) m.psi *= 0.1;
    // The straight-through loss is piecewise constant and jumps when a sample
    // crosses 0.5; the trend property is checked on the smooth loss.
    TrainConfig cfg = quick(100);
    cfg.discretize = false;
    TrainReport rep;
    run_training(d, cfg, &rep);
    const auto& t = rep.stage1.trace;
    for (std::size_t i = 10; i < t.size(); ++i) CHECK(t[i].data <= 1.05 * t[i - 10].data + 1e-12);
}

TEST_CASE("with lambda = 0 Stage 1 is plain LoS least squares") {
    const Dataset d = free_space(24, std::vector<Vec2>{{5, 5}, {18, 12}}, 20, 4);
    TrainConfig cfg = quick(5);
    cfg.stage1.lambda1 = cfg.stage1.lambda2 = 0.0;
    cfg.chunk_size = 1000;
    TrainReport rep;
    const VoxelField trained = run_training(d, cfg, &rep);

    VoxelField f(24, 4, kScale, cfg.init_delta);
    f.discretize_delta = cfg.discretize;
    double s2 = 0.0;
    for (const auto& m : d.measurements) s2 += m.psi * m.psi;
    s2 /= double(d.measurements.size());
    AdamState adam;
    adam.lr = cfg.lr;
    for (int epoch = 0; epoch < 5; ++epoch) {
        for (int tx = 0; tx < 2; ++tx) {
            std::vector<const Measurement*> batch;
            for (const auto& m : d.measurements)
                if (m.tx_id == tx) batch.push_back(&m);
            GradientBuffer buf(f.voxels(), 4);
            for (const auto* m : batch) {
                const double r = psi_los(f, m->tx, m->rx, 1.0, 32) - m->psi;
                backward_los(f, m->tx, m->rx, 1.0, 32, 2.0 / (s2 * double(batch.size())) * r, buf);
            }
            LogitGradients g;
            to_logit_gradients(f, buf, soft_bin_weights(f), 1.0, g);
            f.update_delta_logits([&](std::span<float> p) { adam_step(p, g.delta, adam); });
        }
    }
    CHECK(trained.delta_logits() == f.delta_logits());
}

TEST_CASE("frozen LoS reproduces from the Stage 1 field and the Stage 2 anchor starts at 0") {
    const Dataset d = free_space(24, std::vector<Vec2>{{5, 5}}, 30, 5);
    TrainConfig cfg = quick(20);
    TrainReport rep;
    run_training(d, cfg, &rep);
    REQUIRE(rep.frozen.psi.size() == d.measurements.size());
    for (std::size_t i = 0; i < d.measurements.size(); ++i) {
        const auto& m = d.measurements[i];
        CHECK(rep.frozen.psi[i] == psi_los(rep.stage1_field, m.tx, m.rx, 1.0, 32));
        CHECK(rep.frozen.psi[i] >= 0.0);
    }
}

TEST_CASE("Stage 2 with no reflection energy leaves the walls alone") {
    // A wall at x = 15..16; receivers on both sides of one transmitter.
    Dataset d;
    d.grid_size = 32;
    const Vec2 tx{6, 16};
    for (int y = 2; y < 30; y += 2)
        for (int x : {3, 9, 12, 20, 24, 28})
            if ((Vec2{double(x), double(y)} - tx).norm() >= 2.0)
                d.measurements.push_back({0, tx, {double(x), double(y)}, x < 15 ? 1.0 / std::pow((Vec2{double(x), double(y)} - tx).norm() * kScale, 2) : 0.0});
    TrainConfig cfg = quick(100, 0);
    TrainReport rep;
    run_training(d, cfg, &rep);
    // Feed Stage 2 the Stage 1 LoS as the full measurement: nothing to explain.
    Dataset null = d;
    for (std::size_t i = 0; i < null.measurements.size(); ++i) null.measurements[i].psi = rep.frozen.psi[i];
    const TrainingSet set = make_training_set(null, cfg);
    VoxelField f = rep.stage1_field;
    TrainConfig c2 = cfg;
    c2.stage2.epochs = 10;
    train_stage2(f, set, rep.frozen, c2);

    Bitmap truth(32, 32, 0);
    for (int y = 0; y < 32; ++y) truth(15, y) = truth(16, y) = 1;
    const double before = wall_metrics(binarize_field(rep.stage1_field), truth).iou;
    const double after = wall_metrics(binarize_field(f), truth).iou;
    CHECK(std::abs(after - before) <= 0.02);
}

TEST_CASE("training is deterministic across thread counts") {
    const Dataset d = free_space(24, std::vector<Vec2>{{5, 5}, {18, 12}}, 40, 6);
    TrainConfig a = quick(5, 2), b = quick(5, 2);
    a.threads = 1;
    b.threads = 3;
    a.chunk_size = b.chunk_size = 4;
    const VoxelField fa = run_training(d, a), fb = run_training(d, b);
    CHECK(fa.delta_logits() == fb.delta_logits());
    CHECK(fa.orientation_logits == fb.orientation_logits);
}

TEST_CASE("training input validation") {
    CHECK_THROWS_AS(run_training(Dataset{}, quick(1)), ValidationError);
    const Dataset d = free_space(16, std::vector<Vec2>{{5, 5}}, 5, 7);
    CHECK_THROWS_AS(run_training(d, quick(0)), ValidationError);
    TrainConfig neg = quick(1);
    neg.stage2.lambda1 = -1.0;
    CHECK_THROWS_AS(run_training(d, neg), ValidationError);
    Dataset bad = d;
    bad.measurements[0].psi = std::nan("");
    CHECK_THROWS_AS(run_training(bad, quick(1)), ValidationError);
}
