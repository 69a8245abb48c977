#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "rfplan/error.hpp"
#include "rfplan/metrics.hpp"

using namespace rfplan;

namespace {

Bitmap random_bitmap(int w, int h, double p, std::mt19937_64& rng) {
    std::bernoulli_distribution b(p);
    Bitmap out(w, h, 0);
    for (auto& v : out.data()) v = b(rng) ? 1 : 0;
    return out;
}

VoxelField field_of(int L, float logit) {
    VoxelField f(L, 4);
    f.set_delta_logits(std::vector<float>(f.voxels(), logit));
    return f;
}

}  // namespace

TEST_CASE("binarize_field examples") {
    CHECK(binarize_field(field_of(8, -INFINITY)).data() == std::vector<std::uint8_t>(64, 0));
    CHECK(binarize_field(field_of(8, INFINITY)).data() == std::vector<std::uint8_t>(64, 1));
    CHECK(binarize_field(field_of(8, 0.0f)).data() == std::vector<std::uint8_t>(64, 1));  // 0.5 >= 0.5
    CHECK_THROWS_AS(binarize_field(field_of(8, 0.0f), 1.0), ValidationError);
}

TEST_CASE("binarize_field set count is non-increasing in the threshold") {
    std::mt19937_64 rng(1);
    std::normal_distribution<float> n(0.0f, 2.0f);
    VoxelField f(32, 4);
    std::vector<float> logits(f.voxels());
    for (auto& v : logits) v = n(rng);
    f.set_delta_logits(logits);
    std::size_t prev = f.voxels() + 1;
    for (double t = 0.01; t < 1.0; t += 0.01) {
        const auto b = binarize_field(f, t);
        std::size_t c = 0;
        for (auto v : b.data()) c += v;
        CHECK(c <= prev);
        prev = c;
    }
}

TEST_CASE("wall_metrics examples") {
    std::mt19937_64 rng(2);
    const Bitmap a = random_bitmap(16, 16, 0.3, rng);
    const auto same = wall_metrics(a, a);
    CHECK(same.iou == 1.0);
    CHECK(same.f1 == 1.0);

    Bitmap left(16, 16, 0), right(16, 16, 0);
    for (int y = 0; y < 16; ++y) {
        left(2, y) = 1;
        right(12, y) = 1;
    }
    const auto disjoint = wall_metrics(left, right);
    CHECK(disjoint.iou == 0.0);
    CHECK(disjoint.f1 == 0.0);

    const Bitmap empty(16, 16, 0);
    CHECK(wall_metrics(empty, empty).iou == 1.0);
    CHECK(wall_metrics(empty, empty).f1 == 1.0);
    CHECK(wall_metrics(empty, left).iou == 0.0);
    CHECK(wall_metrics(empty, left).f1 == 0.0);
    CHECK_THROWS_AS(wall_metrics(Bitmap(16, 16, 0), Bitmap(8, 16, 0)), ValidationError);
}

TEST_CASE("wall_metrics of a 1 px dilation matches a hand count") {
    // Truth: a horizontal wall y = 8, x = 3..12 (10 px). Prediction: that wall
    // grown by one pixel in every direction: a 12 x 3 block.
    Bitmap truth(16, 16, 0), pred(16, 16, 0);
    for (int x = 3; x <= 12; ++x) truth(x, 8) = 1;
    for (int y = 7; y <= 9; ++y)
        for (int x = 2; x <= 13; ++x) pred(x, y) = 1;
    const auto m = wall_metrics(pred, truth);
    CHECK(m.tp == 10);
    CHECK(m.fp == 26);
    CHECK(m.fn == 0);
    CHECK(m.iou == doctest::Approx(10.0 / 36.0).epsilon(1e-15));
    CHECK(m.precision == doctest::Approx(10.0 / 36.0).epsilon(1e-15));
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == doctest::Approx(20.0 / 46.0).epsilon(1e-15));

    const auto tol = wall_metrics_tolerant(pred, truth, 1);
    CHECK(tol.precision == 1.0);
    CHECK(tol.recall == 1.0);
}

TEST_CASE("IoU = F1 / (2 - F1), symmetry and precision/recall duality") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> p(0.0, 0.6);
    for (int i = 0; i < 1000; ++i) {
        const Bitmap a = random_bitmap(20, 20, p(rng), rng), b = random_bitmap(20, 20, p(rng), rng);
        const auto ab = wall_metrics(a, b), ba = wall_metrics(b, a);
        CHECK(std::abs(ab.iou - ab.f1 / (2.0 - ab.f1)) <= 1e-12);
        CHECK(ab.iou == ba.iou);
        CHECK(ab.precision == ba.recall);
        if (ab.precision + ab.recall > 0) {
            CHECK(ab.f1 == doctest::Approx(2 * ab.precision * ab.recall / (ab.precision + ab.recall)).epsilon(1e-12));
        }
        // Brute-force set oracle.
        std::set<int> sa, sb, inter, uni;
        for (int k = 0; k < 400; ++k) {
            if (a.data()[k]) sa.insert(k);
            if (b.data()[k]) sb.insert(k);
        }
        for (int k : sa) (sb.count(k) ? inter : uni).insert(k);
        for (int k : sb) uni.insert(k);
        for (int k : inter) uni.insert(k);
        if (!uni.empty()) CHECK(ab.iou == doctest::Approx(double(inter.size()) / uni.size()).epsilon(1e-15));
    }
}

TEST_CASE("rpe examples and invariants") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(1e-9, 1e-3);
    std::vector<double> truth(200), doubled(200);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        truth[i] = u(rng);
        doubled[i] = 2.0 * truth[i];
    }
    CHECK(rpe(truth, truth).rpe == 0.0);
    CHECK(std::abs(rpe(doubled, truth).rpe - 3.0103) <= 1e-4);
    CHECK(std::abs(rpe(doubled, truth).rpe - 10 * std::log10(2.0)) <= 1e-9);

    std::vector<double> noisy(truth);
    std::normal_distribution<double> n(0.0, 0.5);
    for (auto& v : noisy) v *= std::pow(10.0, n(rng) / 10);
    std::vector<double> noisy_s(noisy), truth_s(truth);
    for (auto& v : noisy_s) v *= 37.5;
    for (auto& v : truth_s) v *= 37.5;
    CHECK(rpe(noisy_s, truth_s).rpe == doctest::Approx(rpe(noisy, truth).rpe).epsilon(1e-9));
}

TEST_CASE("rpe groups by floorplan, takes medians and counts exclusions") {
    // Group 7 errors 1, 2, 9 dB (median 2); group 3 errors 4, 6 dB (median 5).
    auto db = [](double e) { return std::pow(10.0, e / 10); };
    const std::vector<double> truth{1, 1, 1, 1, 1, 1, 0};
    const std::vector<double> pred{db(1), db(-2), db(9), db(4), db(-6), -1, 1};
    const std::vector<int> groups{7, 7, 7, 3, 3, 3, 3};
    const auto r = rpe(pred, truth, groups);
    REQUIRE(r.medians.size() == 2);
    CHECK(r.medians[0] == doctest::Approx(2.0));
    CHECK(r.medians[1] == doctest::Approx(5.0));
    CHECK(r.rpe == doctest::Approx(3.5));
    CHECK(r.excluded == 2);
    CHECK_THROWS_AS(rpe(pred, std::vector<double>(3, 1.0)), ValidationError);
}

TEST_CASE("split_by_receiver keeps receiver positions on one side") {
    std::vector<Vec2> rx;
    for (int t = 0; t < 3; ++t)
        for (int i = 0; i < 50; ++i) rx.push_back({double(i), double(2 * i)});
    const auto s = split_by_receiver(rx, 0.2, 9);
    CHECK(s.train.size() + s.test.size() == rx.size());
    CHECK(s.test.size() == 30);
    std::set<std::pair<double, double>> tr, te;
    for (auto i : s.train) tr.insert({rx[i].x, rx[i].y});
    for (auto i : s.test) te.insert({rx[i].x, rx[i].y});
    for (const auto& p : te) CHECK(tr.count(p) == 0);
    const auto again = split_by_receiver(rx, 0.2, 9);
    CHECK(again.test == s.test);
    CHECK_THROWS_AS(split_by_receiver(rx, 1.5, 0), ValidationError);
}
