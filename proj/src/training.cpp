#include "rfplan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <random>
#include <string>

#include "rfplan/error.hpp"
#include "rfplan/parallel.hpp"

namespace rfplan {

namespace {

double bilinear_delta(const VoxelField& field, Vec2 p) {
    const int L = field.size();
    const double x = std::clamp(p.x, 0.0, double(L - 1));
    const double y = std::clamp(p.y, 0.0, double(L - 1));
    const int x0 = std::min(int(std::floor(x)), L - 2);
    const int y0 = std::min(int(std::floor(y)), L - 2);
    const double fx = x - x0, fy = y - y0;
    return (1 - fx) * (1 - fy) * field.delta(x0, y0) + fx * (1 - fy) * field.delta(x0 + 1, y0) +
           (1 - fx) * fy * field.delta(x0, y0 + 1) + fx * fy * field.delta(x0 + 1, y0 + 1);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stage, std::uint64_t step) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stage * 0x100000001ULL + step + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::vector<std::vector<std::size_t>> make_batches(const TrainingSet& set, const TrainConfig& cfg) {
    std::vector<std::vector<std::size_t>> out;
    if (cfg.batch_size > 0) {
        for (std::size_t i = 0; i < set.measurements.size(); i += std::size_t(cfg.batch_size)) {
            std::vector<std::size_t> b;
            for (std::size_t j = i; j < std::min(set.measurements.size(), i + cfg.batch_size); ++j) b.push_back(j);
            out.push_back(std::move(b));
        }
        return out;
    }
    std::map<int, std::size_t> slot;
    for (std::size_t i = 0; i < set.measurements.size(); ++i) {
        auto [it, fresh] = slot.try_emplace(set.measurements[i].tx_id, out.size());
        if (fresh) out.emplace_back();
        out[it->second].push_back(i);
    }
    return out;
}

void check_finite(double v, std::size_t measurement, const char* what) {
    if (!std::isfinite(v)) {
        throw NumericalError(std::string(what) + " is not finite for measurement " + std::to_string(measurement));
    }
}

// Shared optimizer plumbing for both stages. The per-measurement callback
// adds its data-term gradient into a chunk buffer and returns its squared
// error; chunks are merged in order so the result does not depend on the
// thread count.
class StageRunner {
public:
    StageRunner(VoxelField& field, const TrainingSet& set, const TrainConfig& cfg, const StageConfig& stage,
                int stage_id)
        : field_(field), set_(set), cfg_(cfg), stage_(stage), stage_id_(stage_id),
          total_(field.voxels(), field.bins()) {
        delta_adam_.lr = orient_adam_.lr = cfg.lr;
        all_voxels_.resize(field.voxels());
        for (std::size_t i = 0; i < all_voxels_.size(); ++i) all_voxels_[i] = int(i);
        temperature_ = cfg.gumbel_temperature * std::pow(0.5, stage_id - 1);
    }

    template <class PerMeasurement>
    StageResult run(PerMeasurement&& per_measurement) {
        StageResult result;
        const auto batches = make_batches(set_, cfg_);
        const std::size_t chunk = std::size_t(std::max(1, cfg_.chunk_size));
        std::int64_t step = 0;
        for (int epoch = 0; epoch < stage_.epochs; ++epoch) {
            EpochLoss acc;
            for (const auto& batch : batches) {
                const auto weights = cfg_.gumbel
                                         ? sample_orientation(field_, temperature_,
                                                              mix_seed(cfg_.seed, std::uint64_t(stage_id_),
                                                                       std::uint64_t(step)))
                                         : soft_bin_weights(field_);
                const std::size_t n_chunks = (batch.size() + chunk - 1) / chunk;
                while (chunk_bufs_.size() < n_chunks) chunk_bufs_.emplace_back(field_.voxels(), field_.bins());
                std::vector<double> chunk_loss(n_chunks, 0.0);
                std::vector<std::vector<RaySamples>> chunk_rays(n_chunks);
                const double grad_scale = 2.0 / (set_.psi_scale2 * double(batch.size()));
                parallel_for(n_chunks, cfg_.threads, [&](std::size_t c) {
                    GradientBuffer& buf = chunk_bufs_[c];
                    buf.clear();
                    for (std::size_t j = c * chunk; j < std::min(batch.size(), (c + 1) * chunk); ++j) {
                        chunk_loss[c] += per_measurement(batch[j], weights, grad_scale, buf,
                                                         stage_.lambda2 > 0.0 ? &chunk_rays[c] : nullptr);
                    }
                });
                total_.clear();
                double data = 0.0;
                std::vector<RaySamples> rays;
                for (std::size_t c = 0; c < n_chunks; ++c) {
                    total_.merge(chunk_bufs_[c]);
                    data += chunk_loss[c];
                    for (auto& r : chunk_rays[c]) rays.push_back(std::move(r));
                }
                data /= set_.psi_scale2 * double(batch.size());
                double prior = 0.0;
                if (stage_.lambda1 > 0.0) {
                    prior += stage_.lambda1 *
                             orientation_loss(field_, all_voxels_, weights, cfg_.g_min, &total_, stage_.lambda1);
                }
                if (stage_.lambda2 > 0.0 && !rays.empty()) {
                    prior += stage_.lambda2 * tv_regularizer(field_, rays, weights, &total_, stage_.lambda2);
                }
                if (!std::isfinite(data) || !std::isfinite(prior)) {
                    throw NumericalError("stage " + std::to_string(stage_id_) + " loss is not finite at epoch " +
                                         std::to_string(epoch));
                }
                to_logit_gradients(field_, total_, weights, cfg_.gumbel ? temperature_ : 1.0, grads_);
                field_.update_delta_logits([&](std::span<float> p) { adam_step(p, grads_.delta, delta_adam_); });
                adam_step(field_.orientation_logits, grads_.orientation, orient_adam_);
                acc.data += data;
                acc.prior += prior;
                ++step;
            }
            acc.data /= double(batches.size());
            acc.prior /= double(batches.size());
            result.trace.push_back(acc);
        }
        return result;
    }

private:
    VoxelField& field_;
    const TrainingSet& set_;
    const TrainConfig& cfg_;
    const StageConfig& stage_;
    int stage_id_;
    double temperature_ = 1.0;
    GradientBuffer total_;
    std::vector<GradientBuffer> chunk_bufs_;
    std::vector<int> all_voxels_;
    LogitGradients grads_;
    AdamState delta_adam_, orient_adam_;
};

}  // namespace

ForwardConfig TrainConfig::forward() const {
    ForwardConfig f;
    f.K = K;
    f.n_r = n_r;
    f.top_k = top_k;
    f.self_exclusion = self_exclusion;
    f.gain = gain;
    return f;
}

std::optional<Vec2> orientation_target(const VoxelField& field, int voxel, double g_min) {
    const Vec2 c = field.pixel(voxel).center();
    const int K = field.bins();
    Vec2 grad{};
    for (int k = 0; k < K; ++k) {
        const Vec2 n = field.bin_normal(k);
        const double d = (bilinear_delta(field, c + n) - bilinear_delta(field, c - n)) / 2.0;
        grad += n * d;
    }
    grad = grad * (2.0 / K);
    const double mag = grad.norm();
    if (mag < g_min || mag == 0.0) return std::nullopt;
    return grad / mag;
}

Vec2 expected_orientation(const VoxelField& field, std::span<const double> bin_weights, int voxel) {
    Vec2 e{};
    for (int k = 0; k < field.bins(); ++k) e += field.bin_normal(k) * bin_weights[std::size_t(voxel) * field.bins() + k];
    return e;
}

double orientation_loss(const VoxelField& field, std::span<const int> voxels, std::span<const double> bin_weights,
                        double g_min, GradientBuffer* buf, double scale) {
    const int K = field.bins();
    struct Term {
        int voxel;
        Vec2 target;
    };
    std::vector<Term> terms;
    for (int v : voxels) {
        if (auto t = orientation_target(field, v, g_min)) terms.push_back({v, *t});
    }
    if (terms.empty()) return 0.0;
    const double inv = 1.0 / double(terms.size());
    double loss = 0.0;
    for (const auto& [v, t] : terms) {
        Vec2 e{};
        for (int k = 0; k < K; ++k) {
            Vec2 n = field.bin_normal(k);
            if (n.dot(t) < 0.0) n = -n;
            e += n * bin_weights[std::size_t(v) * K + k];
        }
        const Vec2 r = e - t;
        loss += r.norm2();
        if (buf) {
            for (int k = 0; k < K; ++k) {
                Vec2 n = field.bin_normal(k);
                if (n.dot(t) < 0.0) n = -n;
                buf->add_weight(v, k, scale * inv * 2.0 * r.dot(n));
            }
        }
    }
    return loss * inv;
}

double tv_regularizer(std::span<const std::vector<Vec2>> rays) {
    if (rays.empty()) return 0.0;
    const std::size_t n_r = rays.front().size();
    if (n_r < 2) throw ValidationError("orientation smoothness needs at least 2 samples per ray");
    double sum = 0.0;
    for (const auto& ray : rays) {
        if (ray.size() != n_r) throw ValidationError("rays must have equal sample counts");
        for (std::size_t i = 0; i + 1 < n_r; ++i) sum += (ray[i + 1] - ray[i]).norm2();
    }
    return sum / (double(rays.size()) * double(n_r - 1));
}

double tv_regularizer(const VoxelField& field, std::span<const RaySamples> rays, std::span<const double> bin_weights,
                      GradientBuffer* buf, double scale) {
    if (rays.empty()) return 0.0;
    const std::size_t n_r = rays.front().samples.size();
    if (n_r < 2) throw ValidationError("orientation smoothness needs at least 2 samples per ray");
    const int K = field.bins();
    const double norm = 1.0 / (double(rays.size()) * double(n_r - 1));
    auto at = [&](const RaySample& s) {
        Vec2 w{};
        for (int c = 0; c < 4; ++c) w += expected_orientation(field, bin_weights, s.voxel[c]) * s.weight[c];
        return w;
    };
    std::vector<Vec2> omega(n_r), dw(n_r);
    double sum = 0.0;
    for (const auto& ray : rays) {
        if (ray.samples.size() != n_r) throw ValidationError("rays must have equal sample counts");
        for (std::size_t i = 0; i < n_r; ++i) {
            omega[i] = at(ray.samples[i]);
            dw[i] = {};
        }
        for (std::size_t i = 0; i + 1 < n_r; ++i) {
            const Vec2 d = omega[i + 1] - omega[i];
            sum += d.norm2();
            dw[i + 1] += d * 2.0;
            dw[i] += d * -2.0;
        }
        if (!buf) continue;
        for (std::size_t i = 0; i < n_r; ++i) {
            const Vec2 g = dw[i] * (scale * norm);
            if (g.x == 0.0 && g.y == 0.0) continue;
            const auto& s = ray.samples[i];
            for (int c = 0; c < 4; ++c) {
                if (s.weight[c] == 0.0) continue;
                for (int k = 0; k < K; ++k) buf->add_weight(s.voxel[c], k, s.weight[c] * g.dot(field.bin_normal(k)));
            }
        }
    }
    return sum * norm;
}

TrainingSet make_training_set(const Dataset& data, const TrainConfig& cfg) {
    if (data.measurements.empty()) throw ValidationError("training dataset is empty");
    TrainingSet set;
    set.measurements = data.measurements;
    if (cfg.rx_noise_sigma > 0.0) {
        std::mt19937_64 rng(mix_seed(cfg.seed, 99, 0));
        std::normal_distribution<double> noise(0.0, cfg.rx_noise_sigma / data.scale);
        const double hi = data.grid_size - 1;
        for (auto& m : set.measurements) {
            m.rx.x = std::clamp(m.rx.x + noise(rng), 0.0, hi);
            m.rx.y = std::clamp(m.rx.y + noise(rng), 0.0, hi);
        }
    }
    double s2 = 0.0;
    for (const auto& m : set.measurements) {
        if (!(m.psi >= 0.0) || !std::isfinite(m.psi)) throw ValidationError("measurement power must be finite and >= 0");
        s2 += m.psi * m.psi;
    }
    set.psi_scale2 = s2 > 0.0 ? s2 / double(set.measurements.size()) : 1.0;
    return set;
}

StageResult train_stage1(VoxelField& field, const TrainingSet& set, const TrainConfig& cfg) {
    StageRunner runner(field, set, cfg, cfg.stage1, 1);
    return runner.run([&](std::size_t i, std::span<const double>, double grad_scale, GradientBuffer& buf,
                          std::vector<RaySamples>* rays) {
        const Measurement& m = set.measurements[i];
        const double psi = psi_los(field, m.tx, m.rx, cfg.K, cfg.n_r);
        check_finite(psi, i, "LoS power");
        const double r = psi - m.psi;
        backward_los(field, m.tx, m.rx, cfg.K, cfg.n_r, grad_scale * r, buf);
        if (rays) rays->push_back(sample_ray(field, m.tx, m.rx, cfg.n_r));
        return r * r;
    });
}

FrozenLoS freeze_los(const VoxelField& field, const TrainingSet& set, const TrainConfig& cfg) {
    FrozenLoS out;
    out.psi.resize(set.measurements.size());
    parallel_for(set.measurements.size(), cfg.threads, [&](std::size_t i) {
        const auto& m = set.measurements[i];
        out.psi[i] = psi_los(field, m.tx, m.rx, cfg.K, cfg.n_r);
    });
    return out;
}

StageResult train_stage2(VoxelField& field, const TrainingSet& set, const FrozenLoS& frozen, const TrainConfig& cfg) {
    if (frozen.psi.size() != set.measurements.size()) {
        throw ValidationError("frozen LoS covers " + std::to_string(frozen.psi.size()) + " measurements, dataset has " +
                              std::to_string(set.measurements.size()));
    }
    const ForwardConfig fwd = cfg.forward();
    std::vector<std::vector<PlausibleEntry>> plausible(set.measurements.size());
    parallel_for(set.measurements.size(), cfg.threads, [&](std::size_t i) {
        const auto& m = set.measurements[i];
        plausible[i] = build_plausible_set(field, m.tx, m.rx, fwd.gain);
    });

    StageRunner runner(field, set, cfg, cfg.stage2, 2);
    return runner.run([&](std::size_t i, std::span<const double> weights, double grad_scale, GradientBuffer& buf,
                          std::vector<RaySamples>* rays) {
        const Measurement& m = set.measurements[i];
        const double los = psi_los(field, m.tx, m.rx, cfg.K, cfg.n_r);
        const auto selected = ranked_contributions(field, plausible[i], weights, m.tx, m.rx, fwd, fwd.top_k);
        double ref = 0.0;
        for (const auto& c : selected) ref += c.value;
        check_finite(los, i, "LoS power");
        check_finite(ref, i, "reflection power");
        const double r_anchor = los - frozen.psi[i];
        const double r_ref = ref - (m.psi - frozen.psi[i]);
        backward_los(field, m.tx, m.rx, cfg.K, cfg.n_r, grad_scale * r_anchor, buf);
        backward_ref(field, plausible[i], selected, weights, m.tx, m.rx, fwd, grad_scale * r_ref, buf);
        if (rays) {
            for (const auto& c : selected) {
                rays->push_back(sample_ray(field, m.tx, field.pixel(plausible[i][c.entry].voxel).center(), cfg.n_r));
            }
        }
        return r_anchor * r_anchor + r_ref * r_ref;
    });
}

VoxelField run_training(const Dataset& data, const TrainConfig& cfg, TrainReport* report) {
    if (cfg.stage1.epochs < 1) throw ValidationError("stage 1 needs at least one epoch");
    if (cfg.stage2.epochs < 0) throw ValidationError("stage 2 epochs must be >= 0");
    for (const StageConfig* s : {&cfg.stage1, &cfg.stage2}) {
        if (s->lambda1 < 0.0 || s->lambda2 < 0.0) throw ValidationError("lambda values must be >= 0");
    }
    const TrainingSet set = make_training_set(data, cfg);
    VoxelField field(data.grid_size, cfg.num_bins, data.scale, cfg.init_delta);
    field.discretize_delta = cfg.discretize;

    TrainReport local;
    TrainReport& rep = report ? *report : local;
    using clock = std::chrono::steady_clock;
    auto t0 = clock::now();
    rep.stage1 = train_stage1(field, set, cfg);
    rep.frozen = freeze_los(field, set, cfg);
    rep.stage1_field = field;
    auto t1 = clock::now();
    rep.seconds_stage1 = std::chrono::duration<double>(t1 - t0).count();
    if (cfg.stage2.epochs > 0) {
        rep.stage2 = train_stage2(field, set, rep.frozen, cfg);
        rep.seconds_stage2 = std::chrono::duration<double>(clock::now() - t1).count();
    }
    return field;
}

}  // namespace rfplan
