#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "emgrl/game.hpp"
#include "emgrl/metrics.hpp"
#include "emgrl/sigproc.hpp"
#include "emgrl/subject.hpp"

using namespace emgrl;

namespace {

SubjectSpec spec_with(double noise, double shift = 0.0) {
  SubjectSpec s;
  s.seed = 21;
  s.noise_scale = noise;
  s.gameplay_shift = shift;
  return s;
}

}  // namespace

TEST_CASE("profiles are seeded") {
  const auto a = make_profile(spec_with(0.3));
  const auto b = make_profile(spec_with(0.3));
  SubjectSpec other = spec_with(0.3);
  other.seed = 22;
  CHECK(a.prototypes == b.prototypes);
  CHECK(a.prototypes != make_profile(other).prototypes);
  SubjectSpec bad = spec_with(-1.0);
  CHECK_THROWS_AS(make_profile(bad), std::invalid_argument);
}

TEST_CASE("pretraining prototypes are contracted towards rest") {
  const auto p = make_profile(spec_with(0.3));
  const double c = p.spec.pretrain_contraction;
  for (int m = 0; m < kNumMovements; ++m) {
    for (int j = 0; j < kStateDim; ++j) {
      const auto i = static_cast<std::size_t>(j);
      const auto mm = static_cast<std::size_t>(m);
      CHECK(p.pretrain_prototypes[mm][i] ==
            doctest::Approx(p.prototypes[0][i] + c * (p.prototypes[mm][i] - p.prototypes[0][i])));
    }
  }
}

TEST_CASE("gameplay shift moves each movement by the requested distance") {
  const auto base = make_profile(spec_with(0.3, 0.0));
  const auto shifted = make_profile(spec_with(0.3, 3.0));
  CHECK(base.prototypes[0] == shifted.prototypes[0]);
  CHECK(base.pretrain_prototypes == shifted.pretrain_prototypes);
  for (int m = 1; m < kNumMovements; ++m) {
    double d2 = 0.0;
    for (int j = 0; j < kStateDim; ++j) {
      const auto i = static_cast<std::size_t>(j);
      const auto mm = static_cast<std::size_t>(m);
      const double d = (shifted.prototypes[mm][i] - base.prototypes[mm][i]) / base.noise_units[i];
      d2 += d * d;
    }
    CHECK(std::sqrt(d2) == doctest::Approx(3.0).epsilon(1e-9));
  }
}

TEST_CASE("emitted features are valid and centred on the prototype") {
  const auto p = make_profile(spec_with(0.2));
  Rng rng = make_rng(1, "emit");
  const int n = 4000;
  for (int m : {0, 5, 11}) {
    FeatureState mean{};
    for (int i = 0; i < n; ++i) {
      const auto s = emit_features(p, MovementId(m), rng);
      for (int ch = 0; ch < kChannels; ++ch) {
        const double zc = s[static_cast<std::size_t>(feature_index(ch, Feature::kZc))];
        CHECK(zc == std::round(zc));
        CHECK(zc >= 0.0);
      }
      for (std::size_t j = 0; j < s.size(); ++j) mean[j] += s[j] / n;
    }
    for (int ch = 0; ch < kChannels; ++ch) {
      const auto j = static_cast<std::size_t>(feature_index(ch, Feature::kMav));
      const double mu = p.prototypes[static_cast<std::size_t>(m)][j];
      // Clamping at 0 only matters within a few sigma of zero.
      if (mu > 4.0 * p.noise_scale * p.noise_units[j]) {
        CHECK(mean[j] == doctest::Approx(mu).epsilon(0.02));
      }
    }
  }
  Rng r1 = make_rng(2, "emit");
  Rng r2 = make_rng(2, "emit");
  CHECK(emit_features(p, MovementId(3), r1) == emit_features(p, MovementId(3), r2));
}

TEST_CASE("execution errors happen at the configured rate") {
  SubjectSpec s = spec_with(0.2);
  s.error_rate = 0.1;
  const auto p = make_profile(s);
  Rng rng = make_rng(3, "exec");
  int errors = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const MovementId intended(i % kNumMovements);
    const auto e = execute_intention(p, intended, rng, i);
    CHECK(e.intended == intended);
    CHECK(e.tick == i);
    if (e.executed != intended) ++errors;
  }
  const double rate = static_cast<double>(errors) / n;
  CHECK(std::abs(rate - 0.1) < 3.29 * std::sqrt(0.1 * 0.9 / n));
}

TEST_CASE("repetition drift and adaptation") {
  SubjectSpec s = spec_with(0.4);
  s.drift_rate = 0.5;
  s.adaptation_rate = 0.1;
  const auto p = make_profile(s);
  CHECK(profile_at_repetition(p, 0).prototypes == p.prototypes);
  const auto p3 = profile_at_repetition(p, 3);
  CHECK(p3.repetition == 3);
  CHECK(p3.prototypes != p.prototypes);
  CHECK(p3.noise_scale < p.noise_scale);
  CHECK(p3.error_rate < p.error_rate);
  CHECK(evolve(evolve(evolve(p, 1), 2), 3).prototypes == p3.prototypes);
  CHECK_THROWS(evolve(p, 0));
}

TEST_CASE("chords map to movements") {
  using K = std::vector<std::string>;
  CHECK(chord_to_movement(K{}) == MovementId::rest());
  CHECK(chord_to_movement(K{"q"}) == MovementId(1));
  CHECK(chord_to_movement(K{"a"}) == MovementId(2));
  CHECK(chord_to_movement(K{"index_ext"}) == MovementId(3));
  CHECK(chord_to_movement(K{"q", "w"}) == MovementId(7));
  CHECK(chord_to_movement(K{"a", "s"}) == MovementId(8));
  CHECK(chord_to_movement(K{"w", "e"}) == MovementId(9));
  CHECK(chord_to_movement(K{"s", "d"}) == MovementId(10));
  CHECK(chord_to_movement(K{"q", "w", "e"}) == MovementId(11));
  CHECK(chord_to_movement(K{"a", "s", "d"}) == MovementId(12));
  CHECK(chord_to_movement(K{"q", "a"}) == MovementId::rest());
  CHECK(chord_to_movement(K{"q", "e"}) == MovementId::rest());  // not in the table
  CHECK(chord_to_movement(K{"z", "w"}) == MovementId(3));
}

TEST_CASE("raw synthesis feeds the signal chain") {
  const auto p = make_profile(spec_with(0.2));
  Rng rng = make_rng(4, "raw");
  const auto rest = extract_features(emit_raw(p, MovementId::rest(), 2000, rng));
  const auto active = extract_features(emit_raw(p, MovementId(11), 2000, rng));
  CHECK(rest.size() == static_cast<std::size_t>(window_count(2000)));
  auto mean_mav = [](const std::vector<FeatureSample>& xs) {
    double m = 0.0;
    for (const auto& x : xs) {
      for (int ch = 0; ch < kChannels; ++ch) m += x.features[static_cast<std::size_t>(feature_index(ch, Feature::kMav))];
    }
    return m / static_cast<double>(xs.size());
  };
  CHECK(mean_mav(active) > 1.5 * mean_mav(rest));
  CHECK_THROWS(emit_raw(p, MovementId(1), 150, rng));
}

TEST_CASE("human adapter turns chords into features") {
  SubjectSpec s = spec_with(0.2);
  s.error_rate = 0.0;
  HumanAdapter adapter(make_profile(s), 5);
  const std::vector<std::string> keys{"w"};
  const auto out = adapter.on_chord(keys, 17);
  CHECK(out.event.intended == MovementId(3));
  CHECK(out.event.executed == MovementId(3));
  CHECK(out.event.tick == 17);
}

TEST_CASE("noise-free emission reproduces the prototype") {
  SubjectSpec s = spec_with(0.0, 2.0);
  s.error_rate = 0.0;
  const auto p = make_profile(s);
  Rng rng = make_rng(6, "exact");
  for (int m = 0; m < kNumMovements; ++m) {
    const auto& mu = p.prototypes[static_cast<std::size_t>(m)];
    const auto x = emit_features(p, MovementId(m), rng);
    for (int ch = 0; ch < kChannels; ++ch) {
      for (Feature f : {Feature::kMav, Feature::kTwl}) {
        const auto j = static_cast<std::size_t>(feature_index(ch, f));
        CHECK(x[j] == std::max(0.0, mu[j]));
      }
      // Counts are integers by construction.
      for (Feature f : {Feature::kZc, Feature::kSlpch}) {
        const auto j = static_cast<std::size_t>(feature_index(ch, f));
        CHECK(x[j] == std::clamp(std::round(mu[j]), 0.0, double(kWindowSamples - 1)));
      }
    }
    if (m > 0) CHECK(x != emit_features(p, MovementId(0), rng));
  }
}

TEST_CASE("rest has the smallest prototype and all prototypes differ") {
  const auto p = make_profile(spec_with(0.3));
  auto norm2 = [](const FeatureState& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
  };
  for (int m = 1; m < kNumMovements; ++m) {
    CHECK(norm2(p.prototypes[0]) < norm2(p.prototypes[static_cast<std::size_t>(m)]));
    for (int k = 0; k < m; ++k) CHECK(p.prototypes[static_cast<std::size_t>(m)] != p.prototypes[static_cast<std::size_t>(k)]);
  }
}

TEST_CASE("error rate extremes") {
  SubjectSpec s = spec_with(0.2);
  s.error_rate = 1.0;
  const auto always = make_profile(s);
  s.error_rate = 0.0;
  const auto never = make_profile(s);
  Rng rng = make_rng(7, "extremes");
  for (int i = 0; i < 2000; ++i) {
    const MovementId m(i % kNumMovements);
    CHECK(execute_intention(always, m, rng).executed != m);
    CHECK(execute_intention(never, m, rng).executed == m);
  }
}

TEST_CASE("evolve with zero rates is the identity") {
  const auto p = make_profile(spec_with(0.3, 1.0));
  const auto q = profile_at_repetition(p, 8);
  CHECK(q.prototypes == p.prototypes);
  CHECK(q.noise_scale == p.noise_scale);
  CHECK(q.error_rate == p.error_rate);
}

TEST_CASE("drift settles: later repetitions look more like the last one") {
  SubjectSpec s = spec_with(0.3);
  s.drift_rate = 2.0;
  s.error_rate = 0.0;
  const auto base = make_profile(s);
  const NoteChart chart = build_chart(7);
  auto session = [&](int k) {
    const auto p = profile_at_repetition(base, k);
    Rng rng = make_rng(8, "drift-session", static_cast<std::uint64_t>(k));
    std::vector<FeatureState> out;
    for (const auto& v : chart.ideal) out.push_back(emit_features(p, canonicalize(v), rng));
    return out;
  };
  const auto last = session(8);
  const double early = metrics::psi(session(1), last).mean;
  const double middle = metrics::psi(session(4), last).mean;
  const double late = metrics::psi(session(7), last).mean;
  CHECK(early > middle);
  CHECK(middle > late);
}

TEST_CASE("raw synthesis amplitude follows the activation") {
  ChannelActivation zero{};
  Rng rng = make_rng(9, "raw-amp");
  for (const auto& f : extract_features(emit_raw(zero, 1000, rng))) {
    for (int ch = 0; ch < kChannels; ++ch) CHECK(f.features[static_cast<std::size_t>(feature_index(ch, Feature::kMav))] < 1e-9);
  }

  ChannelActivation one{};
  one.fill(1.0);
  ChannelActivation doubled = one;
  doubled[2] = 2.0;
  auto channel_mav = [](const std::vector<FeatureSample>& xs, int ch) {
    double m = 0.0;
    for (const auto& x : xs) m += x.features[static_cast<std::size_t>(feature_index(ch, Feature::kMav))];
    return m / static_cast<double>(xs.size());
  };
  const auto a = extract_features(emit_raw(one, 20000, rng));
  const auto b = extract_features(emit_raw(doubled, 20000, rng));
  CHECK(channel_mav(b, 2) / channel_mav(a, 2) == doctest::Approx(2.0).epsilon(0.1));
  CHECK(channel_mav(b, 5) / channel_mav(a, 5) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("raw movement recordings are louder than rest") {
  const auto p = make_profile(spec_with(0.2));
  Rng rng = make_rng(10, "raw-snr");
  std::vector<FeatureState> states;
  std::vector<MovementId> labels;
  for (int m : {0, 1}) {
    for (const auto& f : extract_features(emit_raw(p, MovementId(m), 3000, rng))) {
      states.push_back(f.features);
      labels.push_back(MovementId(m));
    }
  }
  const auto snr = metrics::snr(states, labels);
  CHECK(snr.per_movement_db[1] > 0.0);
}
