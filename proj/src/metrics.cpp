#include "rfplan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>

#include "rfplan/error.hpp"

namespace rfplan {

namespace {

void check_same_size(const Bitmap& a, const Bitmap& b) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw ValidationError("bitmap size mismatch: " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                              " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
    }
}

double ratio(std::size_t num, std::size_t den) { return den ? double(num) / double(den) : 0.0; }

Bitmap dilate(const Bitmap& b, int radius) {
    Bitmap out(b.width(), b.height(), 0);
    for (int y = 0; y < b.height(); ++y)
        for (int x = 0; x < b.width(); ++x) {
            if (!b(x, y)) continue;
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx)
                    if (b.in_bounds(x + dx, y + dy)) out(x + dx, y + dy) = 1;
        }
    return out;
}

double median(std::vector<double> v) {
    const std::size_t n = v.size();
    std::nth_element(v.begin(), v.begin() + n / 2, v.end());
    double hi = v[n / 2];
    if (n % 2) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + n / 2);
    return 0.5 * (lo + hi);
}

}  // namespace

Bitmap binarize_field(const VoxelField& field, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("threshold must be in (0, 1)");
    Bitmap out(field.size(), field.size(), 0);
    for (int y = 0; y < field.size(); ++y)
        for (int x = 0; x < field.size(); ++x) out(x, y) = field.delta(x, y) >= threshold ? 1 : 0;
    return out;
}

WallMetrics wall_metrics(const Bitmap& pred, const Bitmap& truth) {
    check_same_size(pred, truth);
    WallMetrics m;
    for (std::size_t i = 0; i < pred.data().size(); ++i) {
        const bool p = pred.data()[i] != 0, t = truth.data()[i] != 0;
        m.tp += p && t;
        m.fp += p && !t;
        m.fn += !p && t;
    }
    if (m.tp + m.fp + m.fn == 0) {
        m.iou = m.f1 = m.precision = m.recall = 1.0;
        return m;
    }
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.recall = ratio(m.tp, m.tp + m.fn);
    m.iou = ratio(m.tp, m.tp + m.fp + m.fn);
    m.f1 = ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn);
    return m;
}

WallMetrics wall_metrics_tolerant(const Bitmap& pred, const Bitmap& truth, int radius) {
    check_same_size(pred, truth);
    const Bitmap truth_d = dilate(truth, radius), pred_d = dilate(pred, radius);
    std::size_t pred_n = 0, pred_hit = 0, truth_n = 0, truth_hit = 0;
    for (std::size_t i = 0; i < pred.data().size(); ++i) {
        if (pred.data()[i]) {
            ++pred_n;
            pred_hit += truth_d.data()[i] != 0;
        }
        if (truth.data()[i]) {
            ++truth_n;
            truth_hit += pred_d.data()[i] != 0;
        }
    }
    WallMetrics m;
    if (pred_n == 0 && truth_n == 0) {
        m.iou = m.f1 = m.precision = m.recall = 1.0;
        return m;
    }
    m.precision = ratio(pred_hit, pred_n);
    m.recall = ratio(truth_hit, truth_n);
    m.tp = truth_hit;
    m.fp = pred_n - pred_hit;
    m.fn = truth_n - truth_hit;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    m.iou = m.f1 / (2.0 - m.f1);
    return m;
}

RpeResult rpe(std::span<const double> predicted, std::span<const double> truth, std::span<const int> groups) {
    if (predicted.size() != truth.size()) {
        throw ValidationError("rpe: " + std::to_string(predicted.size()) + " predictions for " +
                              std::to_string(truth.size()) + " targets");
    }
    if (!groups.empty() && groups.size() != truth.size()) throw ValidationError("rpe: group labels do not match");
    RpeResult out;
    std::vector<int> order;
    std::map<int, std::vector<double>> errs;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!(predicted[i] > 0.0) || !(truth[i] > 0.0)) {
            ++out.excluded;
            continue;
        }
        const int g = groups.empty() ? 0 : groups[i];
        auto [it, fresh] = errs.try_emplace(g);
        if (fresh) order.push_back(g);
        it->second.push_back(std::abs(to_db(predicted[i]) - to_db(truth[i])));
    }
    for (int g : order) out.medians.push_back(median(errs[g]));
    if (!out.medians.empty()) {
        out.rpe = std::accumulate(out.medians.begin(), out.medians.end(), 0.0) / double(out.medians.size());
    }
    return out;
}

Split split_by_receiver(std::span<const Vec2> receivers, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) throw ValidationError("test fraction must be in [0, 1]");
    std::map<std::pair<double, double>, int> slot;
    std::vector<int> group(receivers.size());
    for (std::size_t i = 0; i < receivers.size(); ++i) {
        auto [it, fresh] = slot.try_emplace({receivers[i].x, receivers[i].y}, int(slot.size()));
        group[i] = it->second;
    }
    std::vector<int> ids(slot.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::size_t n_test = std::size_t(std::lround(test_fraction * double(ids.size())));
    std::vector<std::uint8_t> is_test(ids.size(), 0);
    for (std::size_t i = 0; i < n_test; ++i) is_test[std::size_t(ids[i])] = 1;
    Split s;
    for (std::size_t i = 0; i < receivers.size(); ++i) (is_test[std::size_t(group[i])] ? s.test : s.train).push_back(i);
    return s;
}

}  // namespace rfplan
