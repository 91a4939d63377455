#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emgrl/game.hpp"
#include "emgrl/movements.hpp"
#include "emgrl/nn.hpp"
#include "emgrl/policy.hpp"
#include "emgrl/rng.hpp"

namespace emgrl {

struct Transition {
  FeatureState state{};
  MovementVector action;
  int reward = 0;
  FeatureState next_state{};
  bool done = false;
  MovementVector ideal;
  int repetition = 0;
  bool augmented = false;
};

struct Episode {
  int repetition = 0;
  std::vector<Transition> transitions;
};

// Builds transitions from a played episode; the last tick is terminal.
Episode episode_from_log(std::span<const TickRecord> log, int repetition);

struct AwacConfig {
  double gamma = 0.8935;
  double lambda = 0.95;
  int batch_size = 512;
  double policy_lr = 9.844e-4;
  double q_lr = 7.627e-4;
  double policy_weight_decay = 1e-4;
  double q_weight_decay = 0.0;
  double tau = 8.948e-3;
  int actor_interval = 4;
  int advantage_samples = 1;
  int n_step = 1;
  double epsilon = 0.9;
  int gradient_steps = 2000;
  int eval_interval = 10;
  std::vector<int> q_hidden{256, 256};
  double max_exp_arg = 20.0;
  bool include_pretraining_data = false;

  // Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

// With probability epsilon, each r = -1 transition gets a uniformly random
// movement as its action and the reward recomputed against the ideal action.
// Other transitions are left untouched.
Episode augment_episode(Episode episode, double epsilon, Rng& rng);

// Append-only store of augmented gameplay episodes, plus optional
// single-step pretraining transitions that take part in sampling only.
class ReplayBuffer {
 public:
  void append(Episode episode, double epsilon, Rng& rng);
  void append_raw(Episode episode);  // already augmented (e.g. loaded from disk)
  void add_pretraining(const LabeledDataset& data);

  const std::vector<Episode>& episodes() const { return episodes_; }
  std::size_t size() const { return flat_.size(); }
  bool empty() const { return flat_.empty(); }
  const Transition& at(std::size_t i) const;

 private:
  std::vector<Episode> episodes_;
  std::vector<Transition> pretraining_;
  std::vector<std::pair<int, int>> flat_;  // (episode or -1, index)
};

struct Batch {
  std::vector<FeatureState> states;
  std::vector<MovementVector> actions;
  std::vector<double> rewards;
  std::vector<FeatureState> next_states;
  std::vector<double> dones;

  std::size_t size() const { return states.size(); }
};

// Uniform sampling with replacement; throws on an empty buffer.
Batch sample_batch(const ReplayBuffer& buffer, int batch_size, Rng& rng);

// exp(min(A / lambda, max_exp_arg)).
std::vector<double> advantage_weights(std::span<const double> advantages, double lambda, double max_exp_arg = 20.0);

// Two Q-networks on [standardized state ; action bits] with Polyak-averaged
// target copies.
template <typename T>
class BasicCriticPair {
 public:
  using Matrix = nn::Matrix<T>;
  using Vector = nn::Vector<T>;

  BasicCriticPair() = default;
  BasicCriticPair(const std::vector<int>& hidden, std::uint64_t seed);

  // Stacks standardized state columns (32 x B) with action bits (7 x B).
  static Matrix inputs(const Matrix& standardized_states, std::span<const MovementVector> actions);

  Matrix q(int which, const Matrix& in) const { return online_[static_cast<std::size_t>(which)].forward(in); }
  Matrix q_target(int which, const Matrix& in) const { return target_[static_cast<std::size_t>(which)].forward(in); }
  Matrix min_q(const Matrix& in) const;
  Matrix min_q_target(const Matrix& in) const;

  void polyak(double tau);

  nn::Mlp<T>& online(int which) { return online_[static_cast<std::size_t>(which)]; }
  const nn::Mlp<T>& online(int which) const { return online_[static_cast<std::size_t>(which)]; }
  nn::Mlp<T>& target(int which) { return target_[static_cast<std::size_t>(which)]; }
  const nn::Mlp<T>& target(int which) const { return target_[static_cast<std::size_t>(which)]; }

 private:
  std::array<nn::Mlp<T>, 2> online_;
  std::array<nn::Mlp<T>, 2> target_;
};

// mean_b (Q(x_b) - y_b)^2 and its gradient.
template <typename T>
double critic_regression_loss(const nn::Mlp<T>& q, const nn::Matrix<T>& inputs, std::span<const double> targets,
                              nn::Vector<T>* grad = nullptr);

struct CriticStats {
  double td_loss = 0.0;  // mean of both critics' squared errors
  double mean_target = 0.0;
};

struct ActorStats {
  double actor_loss = 0.0;  // -mean(w log pi)
  double mean_weight = 0.0;
  double mean_advantage = 0.0;
};

template <typename T>
class BasicAwacTrainer {
 public:
  BasicAwacTrainer(const BasicPolicyNet<T>& policy, const AwacConfig& config, std::uint64_t seed);

  // y = r + gamma (1 - done) min target Q(s', a'), a' ~ pi(s').
  std::vector<double> td_targets(const Batch& batch);
  CriticStats critic_update(const Batch& batch);
  ActorStats actor_update(const Batch& batch);

  struct StepStats {
    CriticStats critic;
    std::optional<ActorStats> actor;
  };
  // One gradient step: critics every step, actor every actor_interval-th.
  StepStats step(const ReplayBuffer& buffer);

  const BasicPolicyNet<T>& policy() const { return policy_; }
  BasicPolicyNet<T>& policy() { return policy_; }
  const BasicCriticPair<T>& critics() const { return critics_; }
  BasicCriticPair<T>& critics() { return critics_; }
  long steps() const { return steps_; }

 private:
  nn::Matrix<T> standardized(std::span<const FeatureState> states) const { return policy_.input_batch(states); }

  AwacConfig config_;
  BasicPolicyNet<T> policy_;
  BasicCriticPair<T> critics_;
  nn::Adam<T> policy_opt_;
  std::array<nn::Adam<T>, 2> critic_opt_;
  Rng rng_;
  long steps_ = 0;
};

using CriticPair = BasicCriticPair<float>;
using AwacTrainer = BasicAwacTrainer<float>;

// Undiscounted return of replaying the recorded states through `policy`.
// Throws std::invalid_argument when the episode does not match the chart.
long simulate_song(const PolicyNet& policy, const Episode& recorded, const NoteChart& chart);

// Caches standardized inputs of every recorded episode so repeated
// evaluation is a single batched forward pass.
class SongEvaluator {
 public:
  SongEvaluator(const ReplayBuffer& buffer, const NoteChart& chart, const Standardizer& standardizer);
  long total_return(const PolicyNet& policy) const;
  std::vector<long> episode_returns(const PolicyNet& policy) const;

 private:
  std::vector<nn::Matrix<float>> inputs_;
  std::vector<std::vector<MovementVector>> ideals_;
};

struct TrainingLogRow {
  int step = 0;
  double td_loss = 0.0;
  std::optional<double> actor_loss;
  std::optional<double> mean_weight;
  std::optional<long> simulated_return;
};

struct FinetuneResult {
  PolicyNet policy;
  int best_step = 0;
  long best_return = 0;
  long start_return = 0;
  std::vector<std::pair<int, long>> evaluations;  // (step, simulated return)
  std::vector<TrainingLogRow> log;
};

// Runs config.gradient_steps AWAC steps from `start`, evaluating the summed
// simulated return over all recorded episodes every eval_interval steps
// (step 0 included) and returning the best snapshot.
FinetuneResult finetune_repetition(const ReplayBuffer& buffer, const NoteChart& chart, const PolicyNet& start,
                                   const AwacConfig& config, std::uint64_t seed);

void write_training_log_csv(const std::string& path, std::span<const TrainingLogRow> rows);

extern template class BasicCriticPair<float>;
extern template class BasicCriticPair<double>;
extern template class BasicAwacTrainer<float>;
extern template class BasicAwacTrainer<double>;

}  // namespace emgrl
