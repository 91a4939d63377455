#include "emgrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "emgrl/metrics.hpp"

namespace emgrl {
namespace {

constexpr const char* kPolicySchema = "emgrl.policy.v1";

template <typename T>
T clamp_probability(T p) {
  return std::clamp(p, static_cast<T>(kProbabilityClamp), static_cast<T>(1.0 - kProbabilityClamp));
}

}  // namespace

Standardizer Standardizer::identity() {
  Standardizer s;
  s.mean.fill(0.0);
  s.stddev.fill(1.0);
  return s;
}

Standardizer Standardizer::fit(std::span<const FeatureState> states) {
  if (states.empty()) throw std::invalid_argument("cannot fit a standardizer on no data");
  Standardizer s;
  const double n = static_cast<double>(states.size());
  for (std::size_t j = 0; j < static_cast<std::size_t>(kStateDim); ++j) {
    double sum = 0.0;
    for (const auto& x : states) sum += x[j];
    const double mu = sum / n;
    double ss = 0.0;
    for (const auto& x : states) ss += (x[j] - mu) * (x[j] - mu);
    s.mean[j] = mu;
    s.stddev[j] = std::max(std::sqrt(ss / n), kStdFloor);
  }
  return s;
}

FeatureState Standardizer::apply(const FeatureState& s) const {
  FeatureState z{};
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = (s[j] - mean[j]) / stddev[j];
  return z;
}

FeatureState Standardizer::invert(const FeatureState& z) const {
  FeatureState s{};
  for (std::size_t j = 0; j < s.size(); ++j) s[j] = z[j] * stddev[j] + mean[j];
  return s;
}

std::vector<int> PolicyArchitecture::sizes() const {
  std::vector<int> out{input};
  out.insert(out.end(), hidden.begin(), hidden.end());
  out.push_back(output);
  return out;
}

std::size_t LabeledDataset::count(DataSplit split) const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [&](const LabeledRecord& r) { return r.split == split; }));
}

MovementVector round_probabilities(const Probabilities& p) {
  MovementVector v;
  // Exactly 0.5 rounds down.
  for (int i = 0; i < kActionBits; ++i) v.set(i, p[static_cast<std::size_t>(i)] > 0.5);
  return v;
}

template <typename T>
BasicPolicyNet<T>::BasicPolicyNet(const PolicyArchitecture& arch, std::uint64_t seed)
    : arch_(arch), seed_(seed), mlp_(arch.sizes()) {
  if (arch.input != kStateDim || arch.output != kActionBits) {
    throw std::invalid_argument("policy must map 32 features to 7 outputs");
  }
  Rng rng = make_rng(seed, "policy-init");
  mlp_.init_he_uniform(rng);
}

template <typename T>
typename BasicPolicyNet<T>::Matrix BasicPolicyNet<T>::input_batch(std::span<const FeatureState> states) const {
  Matrix x(kStateDim, static_cast<Eigen::Index>(states.size()));
  for (std::size_t b = 0; b < states.size(); ++b) {
    for (std::size_t j = 0; j < static_cast<std::size_t>(kStateDim); ++j) {
      x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(b)) =
          static_cast<T>((states[b][j] - standardizer_.mean[j]) / standardizer_.stddev[j]);
    }
  }
  return x;
}

template <typename T>
typename BasicPolicyNet<T>::Matrix BasicPolicyNet<T>::probabilities(const Matrix& inputs) const {
  return nn::sigmoid(mlp_.forward(inputs).array()).matrix();
}

template <typename T>
Probabilities BasicPolicyNet<T>::forward(const FeatureState& s) const {
  const Matrix p = probabilities(input_batch(std::span<const FeatureState>(&s, 1)));
  Probabilities out{};
  for (int i = 0; i < kActionBits; ++i) out[static_cast<std::size_t>(i)] = static_cast<double>(p(i, 0));
  return out;
}

template <typename T>
Probabilities BasicPolicyNet<T>::forward(std::span<const double> s) const {
  if (s.size() != static_cast<std::size_t>(kStateDim)) {
    throw std::invalid_argument("policy input must have 32 features, got " + std::to_string(s.size()));
  }
  FeatureState f{};
  std::copy(s.begin(), s.end(), f.begin());
  return forward(f);
}

template <typename T>
nn::Matrix<double> BasicPolicyNet<T>::input_jacobian(const FeatureState& s) const {
  const Matrix x = input_batch(std::span<const FeatureState>(&s, 1));
  typename nn::Mlp<T>::Tape tape;
  const Matrix z = mlp_.forward(x, &tape);
  const Matrix p = nn::sigmoid(z.array()).matrix();
  nn::Matrix<double> jac(kActionBits, kStateDim);
  Vector scratch = Vector::Zero(static_cast<Eigen::Index>(mlp_.num_params()));
  for (int i = 0; i < kActionBits; ++i) {
    Matrix g = Matrix::Zero(kActionBits, 1);
    g(i, 0) = p(i, 0) * (T(1) - p(i, 0));
    Matrix gin;
    mlp_.backward(tape, g, scratch, &gin);
    for (int j = 0; j < kStateDim; ++j) {
      jac(i, j) = static_cast<double>(gin(j, 0)) / standardizer_.stddev[static_cast<std::size_t>(j)];
    }
  }
  return jac;
}

template <typename T>
MovementVector BasicPolicyNet<T>::predict(const FeatureState& s) const {
  return round_probabilities(forward(s));
}

template <typename T>
std::vector<MovementVector> BasicPolicyNet<T>::predict(std::span<const FeatureState> states) const {
  std::vector<MovementVector> out;
  out.reserve(states.size());
  constexpr std::size_t kChunk = 1024;
  for (std::size_t start = 0; start < states.size(); start += kChunk) {
    const auto chunk = states.subspan(start, std::min(kChunk, states.size() - start));
    const Matrix p = probabilities(input_batch(chunk));
    for (Eigen::Index b = 0; b < p.cols(); ++b) {
      MovementVector v;
      for (int i = 0; i < kActionBits; ++i) v.set(i, p(i, b) > T(0.5));
      out.push_back(v);
    }
  }
  return out;
}

template <typename T>
MovementVector BasicPolicyNet<T>::sample(const FeatureState& s, Rng& rng) const {
  return sample(input_batch(std::span<const FeatureState>(&s, 1)), rng).front();
}

template <typename T>
std::vector<MovementVector> BasicPolicyNet<T>::sample(const Matrix& inputs, Rng& rng) const {
  const Matrix p = probabilities(inputs);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<MovementVector> out(static_cast<std::size_t>(p.cols()));
  for (Eigen::Index b = 0; b < p.cols(); ++b) {
    for (int i = 0; i < kActionBits; ++i) out[static_cast<std::size_t>(b)].set(i, u(rng) < static_cast<double>(p(i, b)));
  }
  return out;
}

template <typename T>
double BasicPolicyNet<T>::rmse_loss(std::span<const FeatureState> states, std::span<const MovementVector> targets,
                                    Vector* grad) const {
  if (states.empty()) throw std::invalid_argument("rmse loss needs a non-empty batch");
  if (states.size() != targets.size()) throw std::invalid_argument("state/target count mismatch");
  const Matrix x = input_batch(states);
  typename nn::Mlp<T>::Tape tape;
  const Matrix z = mlp_.forward(x, grad ? &tape : nullptr);
  const Matrix p = nn::sigmoid(z.array()).matrix();
  Matrix diff(p.rows(), p.cols());
  for (Eigen::Index b = 0; b < p.cols(); ++b) {
    for (int i = 0; i < kActionBits; ++i) {
      diff(i, b) = p(i, b) - (targets[static_cast<std::size_t>(b)][i] ? T(1) : T(0));
    }
  }
  const double count = static_cast<double>(diff.size());
  const double mse = static_cast<double>(diff.squaredNorm()) / count;
  const double loss = std::sqrt(mse);
  if (grad) {
    *grad = Vector::Zero(static_cast<Eigen::Index>(mlp_.num_params()));
    if (loss > 0.0) {
      const Matrix gz = (diff.array() * p.array() * (T(1) - p.array())).matrix() * static_cast<T>(1.0 / (count * loss));
      mlp_.backward(tape, gz, *grad);
    }
  }
  return loss;
}

template <typename T>
double BasicPolicyNet<T>::log_prob(const FeatureState& s, MovementVector a) const {
  const Probabilities p = forward(s);
  double lp = 0.0;
  for (int i = 0; i < kActionBits; ++i) {
    const double pc = clamp_probability(p[static_cast<std::size_t>(i)]);
    lp += a[i] ? std::log(pc) : std::log(1.0 - pc);
  }
  return lp;
}

template <typename T>
double BasicPolicyNet<T>::weighted_log_prob(const Matrix& inputs, std::span<const MovementVector> actions,
                                            std::span<const double> weights, Vector* grad) const {
  const auto batch = static_cast<std::size_t>(inputs.cols());
  if (batch == 0 || actions.size() != batch || weights.size() != batch) {
    throw std::invalid_argument("weighted log-prob needs matching non-empty batch");
  }
  typename nn::Mlp<T>::Tape tape;
  const Matrix z = mlp_.forward(inputs, grad ? &tape : nullptr);
  const Matrix p = nn::sigmoid(z.array()).matrix();
  Matrix gz(p.rows(), p.cols());
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto col = static_cast<Eigen::Index>(b);
    double lp = 0.0;
    for (int i = 0; i < kActionBits; ++i) {
      const double raw = static_cast<double>(p(i, col));
      const double pc = clamp_probability(raw);
      const bool on = actions[b][i];
      lp += on ? std::log(pc) : std::log(1.0 - pc);
      // d/dz of the clamped log-likelihood; flat where the clamp is active.
      const bool clamped = raw < kProbabilityClamp || raw > 1.0 - kProbabilityClamp;
      gz(i, col) = clamped ? T(0) : static_cast<T>(weights[b] * inv_b * ((on ? 1.0 : 0.0) - raw));
    }
    total += weights[b] * lp;
  }
  if (grad) {
    *grad = Vector::Zero(static_cast<Eigen::Index>(mlp_.num_params()));
    mlp_.backward(tape, gz, *grad);
  }
  return total * inv_b;
}

template class BasicPolicyNet<float>;
template class BasicPolicyNet<double>;

PretrainResult sl_pretrain(const LabeledDataset& data, const PretrainConfig& config, const PolicyArchitecture& arch) {
  std::vector<FeatureState> train_x, val_x, all_x;
  std::vector<MovementVector> train_y, val_y;
  for (const auto& r : data.records) {
    all_x.push_back(r.state);
    if (r.split == DataSplit::kTrain) {
      train_x.push_back(r.state);
      train_y.push_back(r.target);
    } else {
      val_x.push_back(r.state);
      val_y.push_back(r.target);
    }
  }
  if (train_x.empty() || val_x.empty()) throw std::invalid_argument("pretraining needs non-empty train and validation splits");
  if (config.epochs < 1 || config.batch_size < 1) throw std::invalid_argument("pretraining needs epochs and batch size >= 1");

  PretrainResult result;
  result.policy = PolicyNet(arch, config.seed);
  PolicyNet& net = result.policy;
  net.set_standardizer(Standardizer::fit(all_x));

  nn::Adam<float> opt(config.learning_rate, 0.0, net.mlp().num_params());
  Rng rng = make_rng(config.seed, "sl-shuffle");
  std::vector<std::size_t> order(train_x.size());
  std::iota(order.begin(), order.end(), 0);

  nn::Vector<float> best_params = net.mlp().params();
  nn::Vector<float> grad;
  std::vector<FeatureState> bx;
  std::vector<MovementVector> by;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      bx.clear();
      by.clear();
      for (std::size_t i = start; i < end; ++i) {
        bx.push_back(train_x[order[i]]);
        by.push_back(train_y[order[i]]);
      }
      loss_sum += net.rmse_loss(bx, by, &grad);
      opt.step(net.mlp().params(), grad);
      ++batches;
    }
    const double f1 = metrics::f1_macro(net.predict(val_x), val_y).macro;
    result.train_loss_history.push_back(loss_sum / batches);
    result.val_f1_history.push_back(f1);
    if (f1 > result.best_val_f1) {
      result.best_val_f1 = f1;
      result.best_epoch = epoch;
      best_params = net.mlp().params();
    }
  }
  net.mlp().params() = best_params;
  return result;
}

void save_policy(const std::string& path, const PolicyNet& policy, int repetition) {
  nlohmann::json j;
  j["schema"] = kPolicySchema;
  j["architecture"] = policy.architecture().sizes();
  j["seed"] = policy.seed();
  j["repetition"] = repetition;
  j["standardizer"] = {{"mean", policy.standardizer().mean}, {"std", policy.standardizer().stddev}};
  const auto& p = policy.mlp().params();
  j["params"] = std::vector<float>(p.data(), p.data() + p.size());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write policy checkpoint " + path);
  out << j.dump() << '\n';
}

PolicyCheckpoint load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read policy checkpoint " + path);
  const nlohmann::json j = nlohmann::json::parse(in);
  if (j.at("schema") != kPolicySchema) throw std::runtime_error("unsupported policy schema in " + path);
  const auto sizes = j.at("architecture").get<std::vector<int>>();
  PolicyArchitecture arch;
  arch.input = sizes.front();
  arch.output = sizes.back();
  arch.hidden.assign(sizes.begin() + 1, sizes.end() - 1);
  PolicyCheckpoint ck{PolicyNet(arch, j.at("seed").get<std::uint64_t>()), j.at("repetition").get<int>()};
  Standardizer s;
  s.mean = j.at("standardizer").at("mean").get<FeatureState>();
  s.stddev = j.at("standardizer").at("std").get<FeatureState>();
  ck.policy.set_standardizer(s);
  const auto params = j.at("params").get<std::vector<float>>();
  if (params.size() != ck.policy.mlp().num_params()) throw std::runtime_error("policy checkpoint parameter count mismatch");
  std::copy(params.begin(), params.end(), ck.policy.mlp().params().data());
  return ck;
}

std::string policy_hash(const PolicyNet& policy) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  const auto& p = policy.mlp().params();
  mix(p.data(), static_cast<std::size_t>(p.size()) * sizeof(float));
  mix(policy.standardizer().mean.data(), sizeof(FeatureState));
  mix(policy.standardizer().stddev.data(), sizeof(FeatureState));
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace emgrl
