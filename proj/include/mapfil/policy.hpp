#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "mapfil/dataset.hpp"
#include "mapfil/world.hpp"

namespace mapfil {

struct ConvSpec {
  int filters = 32;
  int kernel = 3;
  int stride = 1;
  bool pool_after = false;  // 2x2 max pool, stride 2, after the activation
  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

// Convolutions ("same" padding, ReLU) over the 4x9x9 observation, flatten,
// append the goal vector, hidden dense ReLU layers, then a linear 5-way head.
struct PolicyConfig {
  std::vector<ConvSpec> conv{{32, 3, 1, false}, {32, 3, 1, true}, {64, 3, 1, false}};
  std::vector<int> dense{128};
  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;

  // Small network for gradient checks and quick tests.
  static PolicyConfig reduced();
};

void to_json(nlohmann::json& j, const PolicyConfig& c);
void from_json(const nlohmann::json& j, PolicyConfig& c);

// Throws std::invalid_argument when the config cannot describe a network.
void validate_config(const PolicyConfig& config);

struct Layer {
  Eigen::MatrixXd weight;  // conv: filters x (channels*k*k); dense: out x in
  Eigen::VectorXd bias;
};

// Layers in order: one per conv spec, one per hidden dense width, then the head.
struct Weights {
  PolicyConfig config;
  std::vector<Layer> layers;

  std::size_t parameter_count() const;
  bool operator==(const Weights& other) const;
};

class ShapeMismatch : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Throws ShapeMismatch if any layer disagrees with the config, and
// std::invalid_argument on non-finite values.
void check_weights(const Weights& weights);

// Fan-in scaled Gaussian weights, zero biases.
Weights init_policy(const PolicyConfig& config, std::uint64_t seed);
Weights zero_weights(const PolicyConfig& config);

using Logits = std::array<double, kNumActions>;
using ActionDistribution = std::array<double, kNumActions>;

Logits forward(const Weights& weights, const Observation& observation);
std::vector<Logits> forward_batch(const Weights& weights, std::span<const Observation> observations);

ActionDistribution softmax_with_temperature(const Logits& logits, double tau);
double mse_loss(const ActionDistribution& dist, Action target);
int argmax(const Logits& values);

struct Gradients {
  double loss = 0.0;  // mean loss over the batch
  std::vector<Layer> layers;
};

// Exact gradient of the mean MSE loss (softmax at temperature 1).
Gradients backward(const Weights& weights, std::span<const Sample> batch);

struct TrainConfig {
  double initial_lr = 5e-5;
  double decay_factor = 0.2;
  int decay_every = 8;
  int epochs = 35;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

double learning_rate(const TrainConfig& config, int epoch);

struct TrainResult {
  Weights weights;
  std::vector<double> epoch_loss;
};

class TrainingDiverged : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

// Adam over seeded per-epoch shuffles; weights start from init_policy(config, seed).
TrainResult train(std::span<const Sample> dataset, const PolicyConfig& policy_config, const TrainConfig& train_config,
                  const EpochCallback& on_epoch = {});

// Fraction of samples whose argmax logit is the expert action.
double greedy_accuracy(const Weights& weights, std::span<const Sample> samples);

class WeightsFormatError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kWeightsVersion = 1;

nlohmann::json weights_to_json(const Weights& weights);
Weights weights_from_json(const nlohmann::json& j);
void save_weights(const std::filesystem::path& path, const Weights& weights);
Weights load_weights(const std::filesystem::path& path);

}  // namespace mapfil
