#include "emgrl/awac.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace emgrl {

Episode episode_from_log(std::span<const TickRecord> log, int repetition) {
  Episode ep;
  ep.repetition = repetition;
  ep.transitions.reserve(log.size());
  for (std::size_t t = 0; t < log.size(); ++t) {
    const bool last = t + 1 == log.size();
    Transition tr;
    tr.state = log[t].state;
    tr.action = log[t].action;
    tr.reward = log[t].reward;
    tr.next_state = last ? log[t].state : log[t + 1].state;
    tr.done = last;
    tr.ideal = log[t].ideal;
    tr.repetition = repetition;
    ep.transitions.push_back(tr);
  }
  return ep;
}

void AwacConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
  if (!(lambda > 0.0 && policy_lr > 0.0 && q_lr > 0.0 && tau > 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("lambda, learning rates and tau must be positive (tau <= 1)");
  }
  if (policy_weight_decay < 0.0 || q_weight_decay < 0.0) throw std::invalid_argument("weight decay must be >= 0");
  if (batch_size < 1 || actor_interval < 1 || advantage_samples < 1 || gradient_steps < 0 || eval_interval < 1) {
    throw std::invalid_argument("batch size, intervals and sample counts must be positive");
  }
  if (n_step != 1) throw std::invalid_argument("only 1-step TD targets are supported");
  if (q_hidden.empty()) throw std::invalid_argument("critic needs at least one hidden layer");
}

Episode augment_episode(Episode episode, double epsilon, Rng& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (auto& tr : episode.transitions) {
    if (tr.reward != -1) continue;
    if (coin(rng) >= epsilon) continue;
    tr.action = encode(uniform_random_movement(rng));
    tr.reward = reward(tr.action, tr.ideal);
    tr.augmented = true;
  }
  return episode;
}

void ReplayBuffer::append(Episode episode, double epsilon, Rng& rng) {
  append_raw(augment_episode(std::move(episode), epsilon, rng));
}

void ReplayBuffer::append_raw(Episode episode) {
  const int e = static_cast<int>(episodes_.size());
  for (std::size_t i = 0; i < episode.transitions.size(); ++i) flat_.emplace_back(e, static_cast<int>(i));
  episodes_.push_back(std::move(episode));
}

void ReplayBuffer::add_pretraining(const LabeledDataset& data) {
  for (const auto& r : data.records) {
    Transition tr;
    tr.state = r.state;
    tr.next_state = r.state;
    tr.action = r.target;
    tr.ideal = r.target;
    tr.reward = reward(r.target, r.target);
    tr.done = true;
    tr.repetition = -1;
    flat_.emplace_back(-1, static_cast<int>(pretraining_.size()));
    pretraining_.push_back(tr);
  }
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  const auto [e, k] = flat_.at(i);
  if (e < 0) return pretraining_[static_cast<std::size_t>(k)];
  return episodes_[static_cast<std::size_t>(e)].transitions[static_cast<std::size_t>(k)];
}

Batch sample_batch(const ReplayBuffer& buffer, int batch_size, Rng& rng) {
  if (buffer.empty()) throw std::invalid_argument("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, buffer.size() - 1);
  Batch b;
  const auto n = static_cast<std::size_t>(batch_size);
  b.states.reserve(n);
  b.actions.reserve(n);
  b.rewards.reserve(n);
  b.next_states.reserve(n);
  b.dones.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Transition& tr = buffer.at(pick(rng));
    b.states.push_back(tr.state);
    b.actions.push_back(tr.action);
    b.rewards.push_back(static_cast<double>(tr.reward));
    b.next_states.push_back(tr.next_state);
    b.dones.push_back(tr.done ? 1.0 : 0.0);
  }
  return b;
}

std::vector<double> advantage_weights(std::span<const double> advantages, double lambda, double max_exp_arg) {
  std::vector<double> w;
  w.reserve(advantages.size());
  for (double a : advantages) w.push_back(std::exp(std::min(a / lambda, max_exp_arg)));
  return w;
}

template <typename T>
BasicCriticPair<T>::BasicCriticPair(const std::vector<int>& hidden, std::uint64_t seed) {
  std::vector<int> sizes{kStateDim + kActionBits};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  for (int k = 0; k < 2; ++k) {
    Rng rng = make_rng(seed, "critic-init", static_cast<std::uint64_t>(k));
    online_[static_cast<std::size_t>(k)] = nn::Mlp<T>(sizes);
    online_[static_cast<std::size_t>(k)].init_he_uniform(rng);
    target_[static_cast<std::size_t>(k)] = online_[static_cast<std::size_t>(k)];
  }
}

template <typename T>
typename BasicCriticPair<T>::Matrix BasicCriticPair<T>::inputs(const Matrix& standardized_states,
                                                               std::span<const MovementVector> actions) {
  if (standardized_states.rows() != kStateDim || static_cast<std::size_t>(standardized_states.cols()) != actions.size()) {
    throw std::invalid_argument("critic input batch mismatch");
  }
  Matrix in(kStateDim + kActionBits, standardized_states.cols());
  in.topRows(kStateDim) = standardized_states;
  for (std::size_t b = 0; b < actions.size(); ++b) {
    for (int i = 0; i < kActionBits; ++i) {
      in(kStateDim + i, static_cast<Eigen::Index>(b)) = actions[b][i] ? T(1) : T(0);
    }
  }
  return in;
}

template <typename T>
typename BasicCriticPair<T>::Matrix BasicCriticPair<T>::min_q(const Matrix& in) const {
  return q(0, in).cwiseMin(q(1, in));
}

template <typename T>
typename BasicCriticPair<T>::Matrix BasicCriticPair<T>::min_q_target(const Matrix& in) const {
  return q_target(0, in).cwiseMin(q_target(1, in));
}

template <typename T>
void BasicCriticPair<T>::polyak(double tau) {
  for (int k = 0; k < 2; ++k) nn::polyak_update(target(k), online(k), tau);
}

template <typename T>
double critic_regression_loss(const nn::Mlp<T>& q, const nn::Matrix<T>& inputs, std::span<const double> targets,
                              nn::Vector<T>* grad) {
  const auto batch = static_cast<std::size_t>(inputs.cols());
  if (batch == 0 || targets.size() != batch) throw std::invalid_argument("critic loss needs matching non-empty batch");
  typename nn::Mlp<T>::Tape tape;
  const nn::Matrix<T> out = q.forward(inputs, grad ? &tape : nullptr);
  nn::Matrix<T> diff(1, out.cols());
  for (std::size_t b = 0; b < batch; ++b) {
    diff(0, static_cast<Eigen::Index>(b)) = out(0, static_cast<Eigen::Index>(b)) - static_cast<T>(targets[b]);
  }
  const double loss = static_cast<double>(diff.squaredNorm()) / static_cast<double>(batch);
  if (grad) {
    *grad = nn::Vector<T>::Zero(static_cast<Eigen::Index>(q.num_params()));
    q.backward(tape, diff * static_cast<T>(2.0 / static_cast<double>(batch)), *grad);
  }
  return loss;
}

template double critic_regression_loss<float>(const nn::Mlp<float>&, const nn::Matrix<float>&, std::span<const double>,
                                               nn::Vector<float>*);
template double critic_regression_loss<double>(const nn::Mlp<double>&, const nn::Matrix<double>&,
                                                std::span<const double>, nn::Vector<double>*);

template <typename T>
BasicAwacTrainer<T>::BasicAwacTrainer(const BasicPolicyNet<T>& policy, const AwacConfig& config, std::uint64_t seed)
    : config_(config),
      policy_(policy),
      critics_(config.q_hidden, derive_seed(seed, "critics")),
      policy_opt_(config.policy_lr, config.policy_weight_decay, policy.mlp().num_params()),
      rng_(make_rng(seed, "awac")) {
  config_.validate();
  for (int k = 0; k < 2; ++k) {
    critic_opt_[static_cast<std::size_t>(k)] = nn::Adam<T>(config.q_lr, config.q_weight_decay, critics_.online(k).num_params());
  }
}

template <typename T>
std::vector<double> BasicAwacTrainer<T>::td_targets(const Batch& batch) {
  const nn::Matrix<T> next = standardized(batch.next_states);
  const auto next_actions = policy_.sample(next, rng_);
  const nn::Matrix<T> q_next = critics_.min_q_target(BasicCriticPair<T>::inputs(next, next_actions));
  std::vector<double> y(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    y[b] = batch.rewards[b] + config_.gamma * (1.0 - batch.dones[b]) * static_cast<double>(q_next(0, static_cast<Eigen::Index>(b)));
  }
  return y;
}

template <typename T>
CriticStats BasicAwacTrainer<T>::critic_update(const Batch& batch) {
  const std::vector<double> y = td_targets(batch);
  const nn::Matrix<T> in = BasicCriticPair<T>::inputs(standardized(batch.states), batch.actions);
  CriticStats stats;
  nn::Vector<T> grad;
  for (int k = 0; k < 2; ++k) {
    stats.td_loss += 0.5 * critic_regression_loss(critics_.online(k), in, y, &grad);
    critic_opt_[static_cast<std::size_t>(k)].step(critics_.online(k).params(), grad);
  }
  critics_.polyak(config_.tau);
  for (double v : y) stats.mean_target += v;
  stats.mean_target /= static_cast<double>(y.size());
  return stats;
}

template <typename T>
ActorStats BasicAwacTrainer<T>::actor_update(const Batch& batch) {
  const nn::Matrix<T> s = standardized(batch.states);
  const nn::Matrix<T> q_data = critics_.min_q(BasicCriticPair<T>::inputs(s, batch.actions));
  nn::Matrix<T> baseline = nn::Matrix<T>::Zero(1, s.cols());
  for (int k = 0; k < config_.advantage_samples; ++k) {
    const auto sampled = policy_.sample(s, rng_);
    baseline += critics_.min_q(BasicCriticPair<T>::inputs(s, sampled));
  }
  baseline /= static_cast<T>(config_.advantage_samples);

  std::vector<double> adv(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto col = static_cast<Eigen::Index>(b);
    adv[b] = static_cast<double>(q_data(0, col)) - static_cast<double>(baseline(0, col));
  }
  const std::vector<double> w = advantage_weights(adv, config_.lambda, config_.max_exp_arg);

  nn::Vector<T> grad;
  const double objective = policy_.weighted_log_prob(s, batch.actions, w, &grad);
  grad = -grad;  // ascend the weighted log-likelihood
  policy_opt_.step(policy_.mlp().params(), grad);

  ActorStats stats;
  stats.actor_loss = -objective;
  for (std::size_t b = 0; b < w.size(); ++b) {
    stats.mean_weight += w[b];
    stats.mean_advantage += adv[b];
  }
  stats.mean_weight /= static_cast<double>(w.size());
  stats.mean_advantage /= static_cast<double>(w.size());
  return stats;
}

template <typename T>
typename BasicAwacTrainer<T>::StepStats BasicAwacTrainer<T>::step(const ReplayBuffer& buffer) {
  const Batch batch = sample_batch(buffer, config_.batch_size, rng_);
  StepStats out;
  out.critic = critic_update(batch);
  ++steps_;
  if (steps_ % config_.actor_interval == 0) out.actor = actor_update(batch);
  return out;
}

template class BasicCriticPair<float>;
template class BasicCriticPair<double>;
template class BasicAwacTrainer<float>;
template class BasicAwacTrainer<double>;

namespace {

void check_episode(const Episode& recorded, const NoteChart& chart) {
  if (recorded.transitions.size() != static_cast<std::size_t>(chart.ticks())) {
    throw std::invalid_argument("recorded episode length does not match the chart");
  }
  for (std::size_t t = 0; t < recorded.transitions.size(); ++t) {
    if (recorded.transitions[t].ideal != chart.ideal[t]) {
      throw std::invalid_argument("recorded ideal actions do not match the chart");
    }
  }
}

}  // namespace

long simulate_song(const PolicyNet& policy, const Episode& recorded, const NoteChart& chart) {
  check_episode(recorded, chart);
  std::vector<FeatureState> states;
  states.reserve(recorded.transitions.size());
  for (const auto& tr : recorded.transitions) states.push_back(tr.state);
  const auto actions = policy.predict(states);
  long g = 0;
  for (std::size_t t = 0; t < actions.size(); ++t) g += reward(actions[t], chart.ideal[t]);
  return g;
}

SongEvaluator::SongEvaluator(const ReplayBuffer& buffer, const NoteChart& chart, const Standardizer& standardizer) {
  PolicyNet shape;
  shape.set_standardizer(standardizer);
  for (const auto& ep : buffer.episodes()) {
    check_episode(ep, chart);
    std::vector<FeatureState> states;
    states.reserve(ep.transitions.size());
    for (const auto& tr : ep.transitions) states.push_back(tr.state);
    inputs_.push_back(shape.input_batch(states));
    ideals_.push_back(chart.ideal);
  }
}

std::vector<long> SongEvaluator::episode_returns(const PolicyNet& policy) const {
  std::vector<long> out(inputs_.size(), 0);
  const int n = static_cast<int>(inputs_.size());
#pragma omp parallel for schedule(static)
  for (int e = 0; e < n; ++e) {
    const auto ue = static_cast<std::size_t>(e);
    const nn::Matrix<float> p = policy.probabilities(inputs_[ue]);
    long g = 0;
    for (Eigen::Index t = 0; t < p.cols(); ++t) {
      MovementVector a;
      for (int i = 0; i < kActionBits; ++i) a.set(i, p(i, t) > 0.5F);
      g += reward(a, ideals_[ue][static_cast<std::size_t>(t)]);
    }
    out[ue] = g;
  }
  return out;
}

long SongEvaluator::total_return(const PolicyNet& policy) const {
  long total = 0;
  for (long g : episode_returns(policy)) total += g;
  return total;
}

FinetuneResult finetune_repetition(const ReplayBuffer& buffer, const NoteChart& chart, const PolicyNet& start,
                                   const AwacConfig& config, std::uint64_t seed) {
  config.validate();
  if (buffer.empty() || buffer.episodes().empty()) throw std::invalid_argument("fine-tuning needs at least one recorded episode");
  const SongEvaluator evaluator(buffer, chart, start.standardizer());
  AwacTrainer trainer(start, config, seed);

  FinetuneResult result;
  result.policy = start;
  result.start_return = evaluator.total_return(start);
  result.best_return = result.start_return;
  result.best_step = 0;
  result.evaluations.emplace_back(0, result.start_return);

  for (int step = 1; step <= config.gradient_steps; ++step) {
    const auto stats = trainer.step(buffer);
    TrainingLogRow row;
    row.step = step;
    row.td_loss = stats.critic.td_loss;
    if (stats.actor) {
      row.actor_loss = stats.actor->actor_loss;
      row.mean_weight = stats.actor->mean_weight;
    }
    if (step % config.eval_interval == 0) {
      const long g = evaluator.total_return(trainer.policy());
      row.simulated_return = g;
      result.evaluations.emplace_back(step, g);
      if (g > result.best_return) {
        result.best_return = g;
        result.best_step = step;
        result.policy = trainer.policy();
      }
    }
    result.log.push_back(row);
  }
  return result;
}

void write_training_log_csv(const std::string& path, std::span<const TrainingLogRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write training log " + path);
  out << "step,td_loss,actor_loss,mean_weight,simulated_return\n";
  for (const auto& r : rows) {
    out << r.step << ',' << r.td_loss << ',';
    if (r.actor_loss) out << *r.actor_loss;
    out << ',';
    if (r.mean_weight) out << *r.mean_weight;
    out << ',';
    if (r.simulated_return) out << *r.simulated_return;
    out << '\n';
  }
}

}  // namespace emgrl
