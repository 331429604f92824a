#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "histoforge/rng.hpp"

namespace histoforge {

enum class HeadVariant { OneLayer, TwoLayer };

struct HeadConfig {
    HeadVariant variant = HeadVariant::OneLayer;
    int in_dim = 768;
    int hidden_dim = 256;  // TwoLayer only
    int n_classes = 5;
    double dropout_p = 0.5;  // TwoLayer only

    void validate() const;
};

/// Trainable parameters. OneLayer uses only w1/b1 (K x in); TwoLayer adds
/// the hidden layer: w1 (hidden x in), b1, w2 (K x hidden), b2.
struct HeadParams {
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;
    Eigen::VectorXd b2;
};

struct HeadGradients {
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;
    Eigen::VectorXd b2;
};

struct TrainConfig {
    int epochs = 20;
    int batch_size = 64;
    double lr = 0.001;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

int count_params(const HeadConfig& config);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer, from the given stream.
HeadParams init_params(const HeadConfig& config, RngStream& rng);

/// Softmax probabilities for one feature vector. Dropout (inverted scaling)
/// is applied to the hidden activations only when `training` is set.
Eigen::VectorXd forward(const Eigen::VectorXd& features, const HeadParams& params,
                        const HeadConfig& config, bool training = false,
                        RngStream* rng = nullptr);

double cross_entropy(const Eigen::VectorXd& probs, int label);

/// Mean-over-batch gradients of cross-entropy, dropout off. Features are one
/// sample per column.
struct BatchGradients {
    HeadGradients grads;
    double mean_loss;
};
BatchGradients gradients(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                         const HeadParams& params, const HeadConfig& config);

struct AdamState {
    HeadGradients m;
    HeadGradients v;
};
AdamState zero_adam_state(const HeadParams& params);

/// One bias-corrected Adam step; `t` is 1-based.
void adam_step(HeadParams& params, const HeadGradients& grads, AdamState& state, int t,
               const TrainConfig& config);

struct EpochStats {
    int epoch;
    double train_loss;
    double val_loss;
    double val_accuracy;
};

struct TrainResult {
    HeadParams final_params;
    HeadParams best_params;  // highest validation accuracy
    int best_epoch = 0;
    std::vector<EpochStats> history;
};

/// Deterministic training loop: per-epoch seeded shuffle, mini-batches,
/// Adam, per-epoch validation. Dropout is active for TwoLayer training.
TrainResult train(const Eigen::MatrixXd& train_features, const std::vector<int>& train_labels,
                  const Eigen::MatrixXd& val_features, const std::vector<int>& val_labels,
                  const HeadConfig& head_config, const TrainConfig& train_config);

// Heads persist in the weight-container format under names
// head.w1/head.b1[/head.w2/head.b2] with the config in __meta__.
void save_head(const HeadParams& params, const HeadConfig& config,
               const std::filesystem::path& path);
std::pair<HeadParams, HeadConfig> load_head(const std::filesystem::path& path);

}  // namespace histoforge
