#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emgrl/movements.hpp"
#include "emgrl/nn.hpp"
#include "emgrl/rng.hpp"
#include "emgrl/sigproc.hpp"

namespace emgrl {

inline constexpr double kProbabilityClamp = 1e-6;
inline constexpr double kStdFloor = 1e-8;

// Per-feature z-scoring fitted once on the pretraining data and reused for
// every later input.
struct Standardizer {
  FeatureState mean{};
  FeatureState stddev{};

  static Standardizer identity();
  static Standardizer fit(std::span<const FeatureState> states);

  FeatureState apply(const FeatureState& s) const;
  FeatureState invert(const FeatureState& z) const;
};

struct PolicyArchitecture {
  int input = kStateDim;
  std::vector<int> hidden = std::vector<int>(6, 128);
  int output = kActionBits;

  std::vector<int> sizes() const;
};

enum class DataSplit { kTrain, kValidation };

struct LabeledRecord {
  FeatureState state{};
  MovementVector target;
  DataSplit split = DataSplit::kTrain;
  int movement = 0;
  int recording = 0;
};

struct LabeledDataset {
  std::vector<LabeledRecord> records;

  std::size_t count(DataSplit split) const;
};

using Probabilities = std::array<double, kActionBits>;

// Sigmoid multi-label actor. Inputs are raw FeatureStates; the standardizer
// is part of the network.
template <typename T>
class BasicPolicyNet {
 public:
  using Matrix = nn::Matrix<T>;
  using Vector = nn::Vector<T>;

  BasicPolicyNet() : BasicPolicyNet(PolicyArchitecture{}, 0) {}
  BasicPolicyNet(const PolicyArchitecture& arch, std::uint64_t seed);

  // Standardized inputs, one column per state.
  Matrix input_batch(std::span<const FeatureState> states) const;
  Matrix probabilities(const Matrix& inputs) const;

  Probabilities forward(const FeatureState& s) const;
  // Throws std::invalid_argument unless s has 32 entries.
  Probabilities forward(std::span<const double> s) const;
  // d forward / d raw input, 7 x 32.
  nn::Matrix<double> input_jacobian(const FeatureState& s) const;

  MovementVector predict(const FeatureState& s) const;
  std::vector<MovementVector> predict(std::span<const FeatureState> states) const;
  MovementVector sample(const FeatureState& s, Rng& rng) const;
  std::vector<MovementVector> sample(const Matrix& inputs, Rng& rng) const;

  // sqrt(mean over batch and outputs of (p - target)^2). When `grad` is set
  // it receives d loss / d params (zero at loss 0).
  double rmse_loss(std::span<const FeatureState> states, std::span<const MovementVector> targets,
                   Vector* grad = nullptr) const;

  double log_prob(const FeatureState& s, MovementVector a) const;
  // mean_b weights[b] * log pi(actions[b] | inputs[:, b]) and its gradient.
  double weighted_log_prob(const Matrix& inputs, std::span<const MovementVector> actions,
                           std::span<const double> weights, Vector* grad = nullptr) const;

  nn::Mlp<T>& mlp() { return mlp_; }
  const nn::Mlp<T>& mlp() const { return mlp_; }
  const Standardizer& standardizer() const { return standardizer_; }
  void set_standardizer(const Standardizer& s) { standardizer_ = s; }
  const PolicyArchitecture& architecture() const { return arch_; }
  std::uint64_t seed() const { return seed_; }

  template <typename U>
  BasicPolicyNet<U> cast() const {
    BasicPolicyNet<U> out(arch_, seed_);
    out.mlp().params() = mlp_.params().template cast<U>();
    out.set_standardizer(standardizer_);
    return out;
  }

 private:
  PolicyArchitecture arch_;
  std::uint64_t seed_ = 0;
  nn::Mlp<T> mlp_;
  Standardizer standardizer_ = Standardizer::identity();
};

using PolicyNet = BasicPolicyNet<float>;

MovementVector round_probabilities(const Probabilities& p);

struct PretrainConfig {
  int epochs = 500;
  int batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  PolicyNet policy;
  int best_epoch = -1;
  double best_val_f1 = -1.0;
  std::vector<double> val_f1_history;
  std::vector<double> train_loss_history;
};

// Mini-batch Adam on the RMSE loss; returns the epoch snapshot with the
// highest validation F1 macro. Throws when either split is empty.
PretrainResult sl_pretrain(const LabeledDataset& data, const PretrainConfig& config,
                           const PolicyArchitecture& arch = {});

// Versioned JSON checkpoint.
struct PolicyCheckpoint {
  PolicyNet policy;
  int repetition = 0;
};

void save_policy(const std::string& path, const PolicyNet& policy, int repetition);
PolicyCheckpoint load_policy(const std::string& path);
// Stable content hash of the parameters and standardizer.
std::string policy_hash(const PolicyNet& policy);

extern template class BasicPolicyNet<float>;
extern template class BasicPolicyNet<double>;

}  // namespace emgrl
