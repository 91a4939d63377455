#include "emgrl/subject.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace emgrl {
namespace {

constexpr double kMavFloor = 2.0;
constexpr double kMavGain = 40.0;
constexpr double kZcBase = 15.0;
constexpr double kZcGain = 25.0;
constexpr double kSlpchBase = 25.0;
constexpr double kSlpchGain = 30.0;
constexpr double kMaxCount = kWindowSamples - 1;
constexpr double kRawGain = 50.0;
constexpr double kRestActivation = 0.0;

std::array<double, kChannels> twl_ratios(std::uint64_t seed) {
  Rng rng = make_rng(seed, "subject-twl");
  std::uniform_real_distribution<double> u(4.0, 8.0);
  std::array<double, kChannels> r{};
  for (auto& v : r) v = u(rng);
  return r;
}

// Activation of each of the six DOF-direction bits on each channel.
std::array<ChannelActivation, 6> bit_activations(Rng& rng) {
  std::array<ChannelActivation, 6> out{};
  std::uniform_int_distribution<int> width(2, 3);
  std::uniform_real_distribution<double> weight(0.5, 1.0);
  std::array<int, kChannels> channels{};
  for (int i = 0; i < kChannels; ++i) channels[static_cast<std::size_t>(i)] = i;
  for (auto& act : out) {
    act.fill(0.0);
    std::shuffle(channels.begin(), channels.end(), rng);
    const int w = width(rng);
    for (int k = 0; k < w; ++k) act[static_cast<std::size_t>(channels[static_cast<std::size_t>(k)])] = weight(rng);
  }
  return out;
}

FeatureState random_direction(Rng& rng, const FeatureState& units) {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureState d{};
  double norm = 0.0;
  for (auto& v : d) {
    v = n(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (std::size_t j = 0; j < d.size(); ++j) d[j] = d[j] / norm * units[j];
  return d;
}

bool is_count_feature(std::size_t j) {
  const auto f = static_cast<Feature>(j % kFeaturesPerChannel);
  return f == Feature::kZc || f == Feature::kSlpch;
}

double squared_distance(const FeatureState& a, const FeatureState& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

}  // namespace

FeatureState prototype_from_activation(const ChannelActivation& activation, std::span<const double> twl_ratio) {
  FeatureState s{};
  for (int ch = 0; ch < kChannels; ++ch) {
    const double a = activation[static_cast<std::size_t>(ch)];
    const double mav = kMavFloor + kMavGain * a;
    s[static_cast<std::size_t>(feature_index(ch, Feature::kMav))] = mav;
    s[static_cast<std::size_t>(feature_index(ch, Feature::kTwl))] = twl_ratio[static_cast<std::size_t>(ch)] * mav;
    s[static_cast<std::size_t>(feature_index(ch, Feature::kZc))] = std::min(kMaxCount, kZcBase + kZcGain * a);
    s[static_cast<std::size_t>(feature_index(ch, Feature::kSlpch))] = std::min(kMaxCount, kSlpchBase + kSlpchGain * a);
  }
  return s;
}

SubjectProfile make_profile(const SubjectSpec& spec) {
  if (spec.noise_scale < 0.0 || spec.drift_rate < 0.0 || spec.gameplay_shift < 0.0) {
    throw std::invalid_argument("subject noise, drift and shift must be >= 0");
  }
  if (!(spec.error_rate >= 0.0 && spec.error_rate <= 1.0) || !(spec.adaptation_rate >= 0.0 && spec.adaptation_rate <= 1.0)) {
    throw std::invalid_argument("subject error and adaptation rates must lie in [0, 1]");
  }
  if (!(spec.pretrain_contraction > 0.0)) throw std::invalid_argument("pretraining contraction must be positive");

  SubjectProfile p;
  p.spec = spec;
  p.noise_scale = spec.noise_scale;
  p.error_rate = spec.error_rate;
  const auto ratio = twl_ratios(spec.seed);

  Rng rng = make_rng(spec.seed, "subject-activation");
  for (int attempt = 0;; ++attempt) {
    const auto bits = bit_activations(rng);
    for (int m = 0; m < kNumMovements; ++m) {
      ChannelActivation act{};
      act.fill(kRestActivation);
      const MovementVector v = encode(MovementId(m));
      for (int b = 0; b < 6; ++b) {
        if (!v[b]) continue;
        for (int ch = 0; ch < kChannels; ++ch) act[static_cast<std::size_t>(ch)] += bits[static_cast<std::size_t>(b)][static_cast<std::size_t>(ch)];
      }
      p.activations[static_cast<std::size_t>(m)] = act;
      p.prototypes[static_cast<std::size_t>(m)] = prototype_from_activation(act, ratio);
    }
    bool distinct = true;
    for (int i = 0; i < kNumMovements && distinct; ++i) {
      for (int j = i + 1; j < kNumMovements; ++j) {
        if (squared_distance(p.prototypes[static_cast<std::size_t>(i)], p.prototypes[static_cast<std::size_t>(j)]) < 1.0) {
          distinct = false;
          break;
        }
      }
    }
    if (distinct) break;
    if (attempt > 100) throw std::logic_error("could not build distinct subject prototypes");
  }

  for (int ch = 0; ch < kChannels; ++ch) {
    const auto c = static_cast<std::size_t>(ch);
    p.noise_units[static_cast<std::size_t>(feature_index(ch, Feature::kMav))] = kMavGain;
    p.noise_units[static_cast<std::size_t>(feature_index(ch, Feature::kTwl))] = kMavGain * ratio[c];
    p.noise_units[static_cast<std::size_t>(feature_index(ch, Feature::kZc))] = kZcGain;
    p.noise_units[static_cast<std::size_t>(feature_index(ch, Feature::kSlpch))] = kSlpchGain;
  }

  const FeatureState& rest = p.prototypes[0];
  Rng shift_rng = make_rng(spec.seed, "subject-gameplay-shift");
  for (std::size_t m = 0; m < p.prototypes.size(); ++m) {
    for (std::size_t j = 0; j < rest.size(); ++j) {
      p.pretrain_prototypes[m][j] = rest[j] + spec.pretrain_contraction * (p.prototypes[m][j] - rest[j]);
    }
    if (m > 0 && spec.gameplay_shift > 0.0) {
      const FeatureState d = random_direction(shift_rng, p.noise_units);
      for (std::size_t j = 0; j < rest.size(); ++j) p.prototypes[m][j] += spec.gameplay_shift * d[j];
    }
  }
  return p;
}

FeatureState emit_features(const SubjectProfile& profile, MovementId executed, Rng& rng, SessionKind kind) {
  const auto& mu = kind == SessionKind::kGameplay ? profile.prototypes[static_cast<std::size_t>(executed.index())]
                                                  : profile.pretrain_prototypes[static_cast<std::size_t>(executed.index())];
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureState s{};
  for (std::size_t j = 0; j < s.size(); ++j) {
    double v = mu[j];
    if (profile.noise_scale > 0.0) v += profile.noise_scale * profile.noise_units[j] * n(rng);
    if (is_count_feature(j)) {
      v = std::clamp(std::round(v), 0.0, kMaxCount);
    } else {
      v = std::max(0.0, v);
    }
    s[j] = v;
  }
  return s;
}

IntentionEvent execute_intention(const SubjectProfile& profile, MovementId intended, Rng& rng, int tick) {
  IntentionEvent e{intended, intended, tick};
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (profile.error_rate > 0.0 && coin(rng) < profile.error_rate) {
    std::uniform_int_distribution<int> other(0, kNumMovements - 2);
    int idx = other(rng);
    if (idx >= intended.index()) ++idx;
    e.executed = MovementId(idx);
  }
  return e;
}

SubjectProfile evolve(const SubjectProfile& profile, int repetition) {
  if (repetition < 1) throw std::invalid_argument("evolve needs repetition >= 1");
  SubjectProfile next = profile;
  next.repetition = repetition;
  const double a = profile.spec.adaptation_rate;
  next.noise_scale = profile.noise_scale * (1.0 - a);
  next.error_rate = profile.error_rate * (1.0 - a);
  const double d = profile.spec.drift_rate;
  if (d > 0.0) {
    Rng rng = make_rng(profile.spec.seed, "subject-drift", static_cast<std::uint64_t>(repetition));
    const double decay = 1.0 / repetition;
    for (auto& mu : next.prototypes) {
      const FeatureState dir = random_direction(rng, profile.noise_units);
      for (std::size_t j = 0; j < mu.size(); ++j) mu[j] += d * decay * dir[j];
    }
  }
  return next;
}

SubjectProfile profile_at_repetition(const SubjectProfile& base, int k) {
  SubjectProfile p = base;
  for (int r = 1; r <= k; ++r) p = evolve(p, r);
  return p;
}

std::vector<RawEmgFrame> emit_raw(const ChannelActivation& activation, std::int64_t duration_ms, Rng& rng,
                                  std::int64_t start_ms) {
  if (duration_ms < kWindowSamples) throw std::invalid_argument("raw emission needs at least 200 ms");
  // Band-pass shaping around the EMG power peak.
  const double w0 = 2.0 * std::numbers::pi * 120.0 / kSampleRateHz;
  const double alpha = std::sin(w0) / (2.0 * 0.7);
  const double a0 = 1.0 + alpha;
  BiquadCoeffs bp;
  bp.b0 = alpha / a0;
  bp.b1 = 0.0;
  bp.b2 = -alpha / a0;
  bp.a1 = -2.0 * std::cos(w0) / a0;
  bp.a2 = (1.0 - alpha) / a0;
  std::array<Biquad, kChannels> shape;
  shape.fill(Biquad(bp));

  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<RawEmgFrame> frames(static_cast<std::size_t>(duration_ms));
  for (std::int64_t t = 0; t < duration_ms; ++t) {
    auto& f = frames[static_cast<std::size_t>(t)];
    f.t_ms = start_ms + t;
    f.channels.resize(kChannels);
    for (std::size_t ch = 0; ch < static_cast<std::size_t>(kChannels); ++ch) {
      f.channels[ch] = kRawGain * activation[ch] * shape[ch].process(n(rng));
    }
  }
  return frames;
}

std::vector<RawEmgFrame> emit_raw(const SubjectProfile& profile, MovementId executed, std::int64_t duration_ms, Rng& rng,
                                  std::int64_t start_ms) {
  ChannelActivation act = profile.activations[static_cast<std::size_t>(executed.index())];
  // Resting muscle still carries a small background level.
  for (auto& a : act) a += 0.05;
  return emit_raw(act, duration_ms, rng, start_ms);
}

MovementId chord_to_movement(std::span<const std::string> keys) {
  std::array<bool, 6> pressed{};
  for (std::string k : keys) {
    std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    int bit = -1;
    if (k == "q" || k == "thumb_ext") bit = 0;
    else if (k == "a" || k == "thumb_flex") bit = 1;
    else if (k == "w" || k == "index_ext") bit = 2;
    else if (k == "s" || k == "index_flex") bit = 3;
    else if (k == "e" || k == "middle_ext") bit = 4;
    else if (k == "d" || k == "middle_flex") bit = 5;
    if (bit >= 0) pressed[static_cast<std::size_t>(bit)] = true;
  }
  MovementVector v;
  for (int dof = 0; dof < kNumDofs; ++dof) {
    const bool ext = pressed[static_cast<std::size_t>(2 * dof)];
    const bool flex = pressed[static_cast<std::size_t>(2 * dof + 1)];
    if (ext != flex) v.set(ext ? 2 * dof : 2 * dof + 1, true);
  }
  if (v.popcount() == 0) return MovementId::rest();
  const auto d = decode(v);
  return d.id ? *d.id : MovementId::rest();
}

HumanAdapter::HumanAdapter(SubjectProfile profile, std::uint64_t seed)
    : profile_(std::move(profile)), rng_(make_rng(seed, "human-adapter")) {}

HumanAdapter::Output HumanAdapter::on_chord(std::span<const std::string> keys, int tick) {
  Output out;
  out.event = execute_intention(profile_, chord_to_movement(keys), rng_, tick);
  out.features = emit_features(profile_, out.event.executed, rng_);
  return out;
}

}  // namespace emgrl
