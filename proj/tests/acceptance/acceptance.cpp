// One PASS/FAIL line per headline criterion. Exit status is non-zero when
// any criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

#include "emgrl/awac.hpp"
#include "emgrl/experiment.hpp"
#include "emgrl/metrics.hpp"
#include "emgrl/sigproc.hpp"
#include "../oracles.hpp"

using namespace emgrl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

long play_constant(const NoteChart& chart, const std::function<MovementVector(int)>& policy) {
  GameSession s(chart);
  while (!s.finished()) s.step(FeatureState{}, policy(s.tick()));
  return s.episode_return();
}

Outcome rewards() {
  const auto rest = encode(MovementId::rest());
  const auto wrong = MovementVector::from_bits({1, 1, 0, 0, 0, 0, 0});
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const NoteChart c = build_chart(seed);
    const long g_oracle = play_constant(c, [&](int t) { return c.ideal[static_cast<std::size_t>(t)]; });
    const long g_wrong = play_constant(c, [&](int) { return wrong; });
    const long g_rest = play_constant(c, [&](int) { return rest; });
    if (g_oracle != 1200 || g_wrong != -2740 || g_rest != -1200) {
      return {false, format("seed %llu: returns %ld / %ld / %ld", static_cast<unsigned long long>(seed), g_oracle, g_wrong, g_rest)};
    }
    worst = std::max({worst, std::abs(normalized_return(g_oracle) - 1.0), std::abs(normalized_return(g_wrong)),
                      std::abs(normalized_return(g_rest) - 1540.0 / 3940.0)});
  }
  return {worst <= 1e-9, format("G0 = 1200 / -2740 / -1200 on 20 charts, normalized 1, 0, %.5f (max err %.1e)",
                                normalized_return(-1200), worst)};
}

Outcome charts() {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const NoteChart c = build_chart(seed);
    const int changes = metrics::action_changes(c.ideal);
    if (c.notes.size() != 48 || c.ticks() != 2740 || std::abs(c.note_seconds() - 60.0) > 1e-12 || changes != 96) {
      return {false, format("seed %llu: %zu notes, %d ticks, %.3f s, %d changes", static_cast<unsigned long long>(seed),
                            c.notes.size(), c.ticks(), c.note_seconds(), changes)};
    }
  }
  return {true, "100 charts: 48 notes, 60.000 s of notes, 2740 ticks, 96 ideal changes"};
}

std::vector<std::size_t> random_probes(std::size_t n, int count, std::uint64_t seed) {
  Rng rng = make_rng(seed, "acceptance-probes");
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> out;
  for (int i = 0; i < count; ++i) out.push_back(pick(rng));
  return out;
}

Outcome gradients() {
  using Net = BasicPolicyNet<double>;
  PolicyArchitecture arch;
  arch.hidden = {32, 32};
  Rng rng = make_rng(1, "acceptance-grad");
  std::normal_distribution<double> n01;
  std::uniform_int_distribution<int> bits(0, 127);
  std::vector<FeatureState> states(24);
  std::vector<MovementVector> actions(24);
  std::vector<double> weights(24, 1.0);
  for (std::size_t b = 0; b < states.size(); ++b) {
    for (auto& v : states[b]) v = n01(rng);
    actions[b] = MovementVector::from_mask(static_cast<std::uint8_t>(bits(rng)));
  }
  const Net net(arch, 5);
  auto params = [](const Net& n) {
    return std::vector<double>(n.mlp().params().data(), n.mlp().params().data() + n.mlp().params().size());
  };
  auto with = [&](const std::vector<double>& x) {
    Net copy = net;
    copy.mlp().params() = Eigen::Map<const nn::Vector<double>>(x.data(), static_cast<Eigen::Index>(x.size()));
    return copy;
  };
  const auto probes = random_probes(net.mlp().num_params(), 64, 2);

  nn::Vector<double> g;
  net.rmse_loss(states, actions, &g);
  const double e_rmse = oracle::max_relative_error([&](const auto& x) { return with(x).rmse_loss(states, actions); },
                                                   params(net), {g.data(), g.data() + g.size()}, probes);
  const auto inputs = net.input_batch(states);
  net.weighted_log_prob(inputs, actions, weights, &g);
  const double e_logp = oracle::max_relative_error(
      [&](const auto& x) { return with(x).weighted_log_prob(inputs, actions, weights); }, params(net),
      {g.data(), g.data() + g.size()}, probes);

  nn::Mlp<double> q({kStateDim + kActionBits, 48, 48, 1});
  q.init_he_uniform(rng);
  nn::Matrix<double> qin(kStateDim + kActionBits, 24);
  for (Eigen::Index i = 0; i < qin.size(); ++i) qin.data()[i] = n01(rng);
  std::vector<double> y(24);
  for (auto& v : y) v = 5.0 * n01(rng);
  critic_regression_loss(q, qin, y, &g);
  const std::vector<double> qx(q.params().data(), q.params().data() + q.params().size());
  const double e_td = oracle::max_relative_error(
      [&](const std::vector<double>& x) {
        nn::Mlp<double> c = q;
        c.params() = Eigen::Map<const nn::Vector<double>>(x.data(), static_cast<Eigen::Index>(x.size()));
        return critic_regression_loss(c, qin, y);
      },
      qx, {g.data(), g.data() + g.size()}, random_probes(q.num_params(), 64, 3));
  const double worst = std::max({e_rmse, e_logp, e_td});
  return {worst < 1e-3, format("max relative error on 64 probes: rmse %.1e, log-prob %.1e, critic TD %.1e", e_rmse,
                               e_logp, e_td)};
}

Outcome log_prob_normalization() {
  const PolicyNet net(PolicyArchitecture{}, 9);
  Rng rng = make_rng(2, "acceptance-logprob");
  std::normal_distribution<double> n(0.0, 3.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    FeatureState s{};
    for (auto& v : s) v = n(rng);
    double total = 0.0;
    for (int m = 0; m < 128; ++m) total += std::exp(net.log_prob(s, MovementVector::from_mask(static_cast<std::uint8_t>(m))));
    worst = std::max(worst, std::abs(total - 1.0));
  }
  return {worst <= 1e-9, format("100 states, max |sum - 1| = %.1e", worst)};
}

Outcome estimators() {
  // MI on the deterministic one-hot fixture.
  Rng rng = make_rng(3, "acceptance-mi");
  std::normal_distribution<double> jitter(0.0, 1e-3);
  kernels::SampleMatrix x(2000, 4);
  std::vector<int> labels(2000);
  for (Eigen::Index i = 0; i < 2000; ++i) {
    labels[static_cast<std::size_t>(i)] = static_cast<int>(i % 4);
    for (int j = 0; j < 4; ++j) x(i, j) = (j == i % 4 ? 1.0 : 0.0) + jitter(rng);
  }
  metrics::MiOptions joint;
  joint.mode = metrics::MiMode::kJoint;
  const double mi = metrics::mutual_information(x, labels, joint);

  std::normal_distribution<double> n01;
  std::vector<double> p(50000);
  std::vector<double> q(50000);
  for (auto& v : p) v = n01(rng);
  for (auto& v : q) v = n01(rng);
  const double psi = metrics::psi(p, q);

  int mismatches = 0;
  std::uniform_int_distribution<int> small(-4, 4);
  for (int n = 1; n <= 12; ++n) {
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> a(static_cast<std::size_t>(n), 0.0);
      std::vector<double> d(static_cast<std::size_t>(n));
      for (auto& v : d) {
        v = trial % 2 ? small(rng) : n01(rng);
        if (v == 0.0) v = 0.5;
      }
      const double got = metrics::wilcoxon_signed_rank(a, d).p_value;
      if (std::abs(got - oracle::wilcoxon_p(d)) > 1e-12) ++mismatches;
    }
  }
  std::vector<double> before(15);
  std::vector<double> after(15);
  for (int i = 0; i < 15; ++i) {
    before[static_cast<std::size_t>(i)] = 0.2 + 0.01 * i;
    after[static_cast<std::size_t>(i)] = 0.5 + 0.013 * i;
  }
  const double p15 = metrics::wilcoxon_signed_rank(before, after).p_value;
  const bool pass = std::abs(mi - std::log(4.0)) < 0.1 && psi < 0.01 && mismatches == 0 &&
                    std::abs(p15 - 6.1e-5) < 0.05e-5;
  return {pass, format("MI %.4f vs ln 4 = %.4f; PSI(P,P') %.5f at n=50000; Wilcoxon %d/120 enumeration mismatches; "
                       "n=15 all-positive p = %.3e",
                       mi, std::log(4.0), psi, mismatches, p15)};
}

Outcome signal_chain() {
  FilterChain chain;
  double peak = 0.0;
  for (int t = 0; t < 6000; ++t) {
    RawEmgFrame f{t, std::vector<double>(kChannels, std::sin(2.0 * std::numbers::pi * 50.0 * t / 1000.0))};
    const auto y = chain.process(f);
    if (t >= 4000) peak = std::max(peak, std::abs(y[0]));
  }
  const double notch_db = 20.0 * std::log10(peak);
  chain.reset();
  std::array<double, kChannels> dc{};
  for (int t = 0; t < 3000; ++t) dc = chain.process(RawEmgFrame{t, std::vector<double>(kChannels, 1.0)});

  Windower w;
  std::vector<std::int64_t> emitted;
  for (std::int64_t t = 0; t < 3000; ++t) {
    if (w.push(FilteredSample{t, {}})) emitted.push_back(t);
  }
  bool cadence = emitted.size() == 57;
  for (std::size_t i = 1; i < emitted.size(); ++i) cadence = cadence && emitted[i] - emitted[i - 1] == 50;

  const std::vector<double> alt{1, -1, 1, -1};
  const auto f = channel_features(alt);
  const auto z = channel_features(std::vector<double>(4, 0.0));
  const auto c = channel_features(std::vector<double>(4, 3.0));
  const bool hudgins = f.mav == 1.0 && f.twl == 6.0 && f.zc == 3.0 && f.slpch == 2.0 && z.mav == 0.0 && z.twl == 0.0 &&
                       z.zc == 0.0 && z.slpch == 0.0 && c.mav == 3.0 && c.twl == 0.0 && c.zc == 0.0 && c.slpch == 0.0;
  const bool pass = notch_db <= -20.0 && std::abs(dc[0]) < 1e-6 && cadence && hudgins;
  return {pass, format("50 Hz at %.1f dB, DC residual %.1e, %zu windows from 3 s every 50 ms, Hudgins fixtures %s", notch_db,
                       std::abs(dc[0]), emitted.size(), hudgins ? "exact" : "wrong")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const ExperimentConfig& config, const fs::path& scratch) {
  const fs::path a = scratch / "bundle_a";
  const fs::path b = scratch / "bundle_b";
  for (const auto& dir : {a, b}) {
    fs::remove_all(dir);
    Experiment e(config);
    e.run_to_end();
    e.write_bundle(dir.string());
  }
  std::size_t files = 0;
  std::size_t bytes = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto other = b / fs::relative(entry.path(), a);
    const std::string x = slurp(entry.path());
    if (!fs::exists(other) || x != slurp(other)) {
      return {false, "bundles differ at " + fs::relative(entry.path(), a).string()};
    }
    ++files;
    bytes += x.size();
  }
  std::size_t files_b = 0;
  for (const auto& entry : fs::recursive_directory_iterator(b)) files_b += entry.is_regular_file() ? 1 : 0;
  if (files_b != files) return {false, "bundles hold different file sets"};
  return {files > 0, format("two runs, %zu files / %zu bytes byte-identical", files, bytes)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string configs = "configs";
  int n_seeds = 10;
  std::string scratch = (fs::temp_directory_path() / "emgrl_acceptance").string();
  app.add_option("--configs", configs, "Directory holding desk.json and desk_low_mi.json")->capture_default_str();
  app.add_option("--seeds", n_seeds, "Seeds per batch")->capture_default_str()->check(CLI::Range(2, 1000));
  app.add_option("--scratch", scratch)->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  std::vector<std::uint64_t> seeds;
  for (int s = 1; s <= n_seeds; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
  const ExperimentConfig calibrated = load_experiment_config((fs::path(configs) / "desk.json").string());
  const ExperimentConfig low_mi = load_experiment_config((fs::path(configs) / "desk_low_mi.json").string());
  fs::create_directories(scratch);

  report(1, "reward and return exactness", rewards);
  report(2, "chart structure", charts);
  report(3, "gradient suites", gradients);
  report(4, "log-prob normalization", log_prob_normalization);

  std::optional<BatchReport> batch;
  report(5, "trend on the calibrated subject", [&]() -> Outcome {
    batch = run_batch(calibrated, seeds);
    const auto& b = *batch;
    double initial = 0.0;
    for (const auto& o : b.seeds) initial += o.return_initial_policy / static_cast<double>(b.seeds.size());
    const bool pass = b.mean_improvement >= 0.15 && b.mean_motion_emr_final > b.mean_motion_emr_initial &&
                      b.returns_test.significant;
    return {pass, format("%d seeds, MI %.3f nats; return pi_8 %.3f vs pi_0 %.3f (mean gain %.3f); Motion Test EMR "
                         "%.3f -> %.3f; Wilcoxon p = %.2e",
                         n_seeds, b.mean_mi, initial + b.mean_improvement, initial, b.mean_improvement,
                         b.mean_motion_emr_initial, b.mean_motion_emr_final, b.returns_test.p_value)};
  });

  report(6, "degradation at low MI", [&]() -> Outcome {
    const BatchReport b = run_batch(low_mi, seeds);
    int below = 0;
    for (const auto& o : b.seeds) below += o.improvement() < 0.15 ? 1 : 0;
    const bool pass = b.mean_mi < 0.25 && 2 * below > n_seeds;
    return {pass, format("MI %.3f nats; gain below 0.15 in %d/%d seeds (mean gain %.3f)", b.mean_mi, below, n_seeds,
                         b.mean_improvement)};
  });

  report(7, "stability trend", [&]() -> Outcome {
    if (!batch) return {false, "criterion 5 batch did not run"};
    return {batch->mean_changes_final < batch->mean_changes_initial,
            format("mean action changes pi_0 %.1f -> pi_8 %.1f", batch->mean_changes_initial, batch->mean_changes_final)};
  });

  report(8, "estimator validation", estimators);
  report(9, "signal chain", signal_chain);
  report(10, "determinism", [&] { return determinism(calibrated, scratch); });

  std::printf("%s: %d of 10 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
