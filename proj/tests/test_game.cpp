#include <doctest.h>

#include <filesystem>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "emgrl/game.hpp"
#include "emgrl/metrics.hpp"

using namespace emgrl;

namespace {

// Reward as a lookup over (correct, ideal is rest).
int reward_oracle(const MovementVector& a, const MovementVector& ideal) {
  if (a.mask() != ideal.mask()) return -1;
  return ideal.mask() == encode(MovementId::rest()).mask() ? 0 : 1;
}

long play(const NoteChart& chart, const std::function<MovementVector(int)>& policy) {
  GameSession s(chart);
  while (!s.finished()) s.step(FeatureState{}, policy(s.tick()));
  return s.episode_return();
}

}  // namespace

TEST_CASE("reward follows the three-way rule") {
  const auto rest = encode(MovementId::rest());
  const auto m3 = encode(MovementId(3));
  CHECK(reward(m3, m3) == 1);
  CHECK(reward(rest, rest) == 0);
  CHECK(reward(rest, m3) == -1);
  CHECK(reward(m3, rest) == -1);
  for (int a = 0; a < 128; a += 7) {
    for (int m = 0; m < kNumMovements; ++m) {
      const auto av = MovementVector::from_mask(static_cast<std::uint8_t>(a));
      CHECK(reward(av, encode(MovementId(m))) == reward_oracle(av, encode(MovementId(m))));
    }
  }
}

TEST_CASE("chart structure holds for 100 seeds") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const NoteChart c = build_chart(seed);
    REQUIRE(c.notes.size() == 48);
    CHECK(c.ticks() == 2740);
    CHECK(c.note_seconds() == doctest::Approx(60.0));
    std::map<std::pair<int, int>, int> pairs;
    int prev_end = 0;
    for (const auto& n : c.notes) {
      CHECK_FALSE(n.movement.is_rest());
      ++pairs[{n.movement.index(), n.duration_ticks}];
      CHECK(n.start_tick - prev_end >= kMinGapTicks);
      prev_end = n.end_tick();
    }
    CHECK(c.ticks() - prev_end >= kMinGapTicks);
    CHECK(pairs.size() == 48);
    CHECK(metrics::action_changes(c.ideal) == 96);
    int note_ticks = 0;
    for (const auto& v : c.ideal) note_ticks += v.test(ActionBit::kRest) ? 0 : 1;
    CHECK(note_ticks == 1200);
  }
  CHECK(build_chart(3).notes[0].start_tick == build_chart(3).notes[0].start_tick);
}

TEST_CASE("ideal_action uses half-open note intervals") {
  const NoteChart c = build_chart(1);
  const Note& n = c.notes[0];
  CHECK(ideal_action(c, n.start_tick) == encode(n.movement));
  CHECK(ideal_action(c, n.end_tick() - 1) == encode(n.movement));
  CHECK(ideal_action(c, n.end_tick()) == encode(MovementId::rest()));
  CHECK(ideal_action(c, n.start_tick - 1) == encode(MovementId::rest()));
  CHECK_THROWS_AS(ideal_action(c, -1), std::out_of_range);
  CHECK_THROWS_AS(ideal_action(c, 2740), std::out_of_range);
}

TEST_CASE("reference policies produce the analytic returns") {
  for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
    const NoteChart c = build_chart(seed);
    const auto rest = encode(MovementId::rest());
    const long oracle = play(c, [&](int t) { return c.ideal[static_cast<std::size_t>(t)]; });
    CHECK(oracle == 1200);
    CHECK(normalized_return(oracle) == doctest::Approx(1.0).epsilon(1e-12));
    // Never correct: thumb ext+flex is non-canonical.
    const long wrong = play(c, [](int) { return MovementVector::from_bits({1, 1, 0, 0, 0, 0, 0}); });
    CHECK(wrong == -2740);
    CHECK(normalized_return(wrong) == doctest::Approx(0.0));
    const long always_rest = play(c, [&](int) { return rest; });
    CHECK(always_rest == -1200);
    CHECK(std::abs(normalized_return(always_rest) - 1540.0 / 3940.0) < 1e-12);
  }
  CHECK_THROWS_AS(normalized_return(1201), std::out_of_range);
  CHECK_THROWS_AS(normalized_return(-2741), std::out_of_range);
}

TEST_CASE("display score never decreases and ignores penalties") {
  const NoteChart c = build_chart(4);
  GameSession s(c);
  long prev = 0;
  long positives = 0;
  int t = 0;
  while (!s.finished()) {
    const auto a = (t % 3 == 0) ? c.ideal[static_cast<std::size_t>(t)] : encode(MovementId(1));
    const auto r = s.step(FeatureState{}, a);
    positives += std::max(0, r.reward);
    CHECK(r.display_score >= prev);
    prev = r.display_score;
    ++t;
  }
  CHECK(s.display_score() == positives);
  CHECK_THROWS_AS(s.step(FeatureState{}, encode(MovementId::rest())), std::logic_error);
}

TEST_CASE("chart round-trips through its file format") {
  const NoteChart c = build_chart(17);
  const auto path = (std::filesystem::temp_directory_path() / "emgrl_chart_test.json").string();
  save_chart(path, c);
  const NoteChart back = load_chart(path);
  CHECK(back.ideal == c.ideal);
  CHECK(back.seed == c.seed);
  std::filesystem::remove(path);
}

TEST_CASE("chart_from_notes rejects overlaps") {
  std::vector<Note> notes{{MovementId(1), 10, 20}, {MovementId(2), 25, 10}};
  CHECK_THROWS(chart_from_notes(0, notes));
}

TEST_CASE("display score tracks the episode return across policies") {
  const NoteChart c = build_chart(7);
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
      i = j + 1;
    }
    return r;
  };
  std::vector<double> scores, returns;
  Rng rng = make_rng(12, "spearman");
  for (int p = 0; p < 40; ++p) {
    const double accuracy = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    GameSession s(c);
    while (!s.finished()) {
      const auto ideal = s.current_ideal();
      MovementVector a = ideal;
      if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) > accuracy) {
        a = encode(MovementId(std::uniform_int_distribution<int>(0, kNumMovements - 1)(rng)));
      }
      s.step(FeatureState{}, a);
    }
    scores.push_back(static_cast<double>(s.display_score()));
    returns.push_back(static_cast<double>(s.episode_return()));
  }
  const auto rs = ranks(scores);
  const auto rg = ranks(returns);
  const double n = static_cast<double>(rs.size());
  const double mean = (n - 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    sxy += (rs[i] - mean) * (rg[i] - mean);
    sxx += (rs[i] - mean) * (rs[i] - mean);
    syy += (rg[i] - mean) * (rg[i] - mean);
  }
  CHECK(sxy / std::sqrt(sxx * syy) > 0.9);
}
