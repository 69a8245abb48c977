#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "rfplan/field.hpp"
#include "rfplan/gradients.hpp"
#include "rfplan/simulator.hpp"

namespace rfplan {

struct StageConfig {
    double lambda1 = 0.01;  // orientation supervision
    double lambda2 = 0.01;  // orientation smoothness along rays
    int epochs = 200;
};

struct TrainConfig {
    StageConfig stage1{0.01, 0.01, 200};
    StageConfig stage2{0.1, 0.1, 40};
    double lr = 0.05;
    int batch_size = 0;  // 0: one batch per transmitter
    int top_k = 10;
    int n_r = 64;
    int num_bins = 4;
    bool discretize = true;
    double rx_noise_sigma = 0.0;  // meters
    std::uint64_t seed = 0;
    double K = 1.0;
    double init_delta = 0.01;
    double g_min = 0.1;
    GainParams gain;
    double self_exclusion = 1.5;
    // Gumbel-softmax bin sampling instead of the soft bin weights.
    bool gumbel = false;
    double gumbel_temperature = 1.0;  // halved for each later stage
    int threads = 0;
    int chunk_size = 16;  // measurements per deterministic reduction chunk

    ForwardConfig forward() const;
};

// Normalized central-difference gradient of opacity, or nullopt when its
// magnitude is below g_min. Differences are taken along the K_omega bin
// normals and recombined, with edge clamping.
std::optional<Vec2> orientation_target(const VoxelField& field, int voxel, double g_min = 0.1);

// Expected orientation vector sum_k w_k n_k of one voxel.
Vec2 expected_orientation(const VoxelField& field, std::span<const double> bin_weights, int voxel);

// Mean over voxels with a target of |e - t|^2, e the expected orientation
// with each bin normal flipped to face the target. When buf is given,
// scale * dLoss/dweight is accumulated. Targets are treated as constants.
double orientation_loss(const VoxelField& field, std::span<const int> voxels, std::span<const double> bin_weights,
                        double g_min, GradientBuffer* buf = nullptr, double scale = 1.0);

// (1 / (n_v (n_r - 1))) sum_rays sum_i |w_{i+1} - w_i|^2 over per-sample
// orientation vectors.
double tv_regularizer(std::span<const std::vector<Vec2>> rays);

// Same, with the orientation vectors bilinearly interpolated from expected
// orientations at the samples of each ray; optionally accumulates gradients.
double tv_regularizer(const VoxelField& field, std::span<const RaySamples> rays,
                      std::span<const double> bin_weights, GradientBuffer* buf = nullptr, double scale = 1.0);

struct EpochLoss {
    double data = 0.0;   // normalized squared error terms
    double prior = 0.0;  // lambda-weighted orientation terms
};

struct FrozenLoS {
    std::vector<double> psi;  // one per training measurement
};

struct StageResult {
    std::vector<EpochLoss> trace;
};

// Training data as seen by the optimizer: positions possibly perturbed by
// receiver noise, psi untouched.
struct TrainingSet {
    std::vector<Measurement> measurements;
    double psi_scale2 = 1.0;  // mean psi^2, normalizes the data terms
};

TrainingSet make_training_set(const Dataset& data, const TrainConfig& cfg);

StageResult train_stage1(VoxelField& field, const TrainingSet& set, const TrainConfig& cfg);
FrozenLoS freeze_los(const VoxelField& field, const TrainingSet& set, const TrainConfig& cfg);
StageResult train_stage2(VoxelField& field, const TrainingSet& set, const FrozenLoS& frozen, const TrainConfig& cfg);

struct TrainReport {
    VoxelField stage1_field;  // the LoS-only model, before Stage 2
    StageResult stage1;
    StageResult stage2;
    FrozenLoS frozen;
    double seconds_stage1 = 0.0;
    double seconds_stage2 = 0.0;
};

// Stage 1, freeze, Stage 2. stage2.epochs == 0 stops after Stage 1 (the
// LoS-only model).
VoxelField run_training(const Dataset& data, const TrainConfig& cfg, TrainReport* report = nullptr);

}  // namespace rfplan
