#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "emgrl/experiment.hpp"
#include "emgrl/io.hpp"

using namespace emgrl;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.subject.seed = 5;
  c.subject.noise_scale = 0.3;
  c.subject.gameplay_shift = 1.0;
  c.n_repetitions = 2;
  c.pretraining.sl.epochs = 4;
  c.awac.gradient_steps = 20;
  c.awac.eval_interval = 10;
  c.awac.batch_size = 64;
  c.motion_test.trials_per_movement = 1;
  c.seed = 3;
  return c;
}

fs::path temp_dir(const std::string& tag) {
  const auto p = fs::temp_directory_path() / ("emgrl_exp_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every file below `a` must exist below `b` with identical bytes, and vice versa.
bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t count_a = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++count_a;
    const auto other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) return false;
  }
  std::size_t count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) count_b += e.is_regular_file() ? 1 : 0;
  return count_a == count_b && count_a > 0;
}

PolicyNet constant_policy(MovementVector a) {
  PolicyNet net(PolicyArchitecture{}, 1);
  const int last = net.mlp().num_layers() - 1;
  net.mlp().weight(last).setZero();
  for (int i = 0; i < kActionBits; ++i) net.mlp().bias(last)(i) = a[i] ? 20.0f : -20.0f;
  return net;
}

}  // namespace

TEST_CASE("session state follows the protocol order") {
  SessionState s(2);
  CHECK(s.phase() == Phase::kPretrain);
  CHECK_THROWS_AS(s.advance(Phase::kPlay), std::logic_error);
  const std::vector<Phase> order{Phase::kFamiliarize, Phase::kPlay, Phase::kTrain, Phase::kPlay, Phase::kTrain,
                                 Phase::kPlay,        Phase::kPlay, Phase::kMotionTest, Phase::kMotionTest, Phase::kDone};
  const std::vector<std::string> policies{"pi_0", "pi_0", "pi_0", "pi_1", "pi_1", "pi_2", "pi_0", "", "", ""};
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (Phase other : {Phase::kPretrain, Phase::kFamiliarize, Phase::kPlay, Phase::kTrain, Phase::kMotionTest,
                        Phase::kDone}) {
      if (other != order[i]) CHECK_FALSE(s.can_advance(other));
    }
    s.advance(order[i]);
    CHECK(s.active_policy() == policies[i]);
  }
  CHECK(s.repetition() == 3);
  CHECK(s.motion_tests_done() == 2);
  const auto replayed = SessionState::replay(2, s.history());
  CHECK(replayed.phase() == Phase::kDone);
  CHECK(replayed.history() == s.history());
  for (Phase p : {Phase::kPretrain, Phase::kPlay, Phase::kDone}) CHECK(phase_from_name(phase_name(p)) == p);

  CHECK(policy_for_repetition(0, 8) == 0);
  CHECK(policy_for_repetition(8, 8) == 8);
  CHECK(policy_for_repetition(9, 8) == 0);
  CHECK_THROWS(policy_for_repetition(10, 8));
}

TEST_CASE("pretraining session sizes and split") {
  const auto profile = make_profile(SubjectSpec{});
  Rng rng = make_rng(1, "pretrain");
  const PretrainingSpec spec;
  const auto data = record_pretraining_session(profile, spec, rng);
  CHECK(spec.kept_per_recording() == 48);
  CHECK(data.records.size() == 3744);
  CHECK(data.count(DataSplit::kTrain) == 2496);
  CHECK(data.count(DataSplit::kValidation) == 1248);
  for (const auto& r : data.records) {
    const bool val = r.recording == 2 || r.recording == 5;
    CHECK((r.split == DataSplit::kValidation) == val);
    CHECK(r.target == encode(MovementId(r.movement)));
  }
}

TEST_CASE("Motion Test with constant policies") {
  SubjectSpec s;
  s.error_rate = 0.0;
  const auto profile = make_profile(s);
  const MotionTestSpec spec;  // 3 trials, 200 ticks, 40 hits

  Rng r1 = make_rng(1, "motion");
  const auto rest = run_motion_test(constant_policy(encode(MovementId::rest())), 0, profile, spec, r1);
  CHECK(rest.trials.size() == 36);
  CHECK(rest.successes == 0);
  CHECK(rest.total_ticks == 36 * 200);
  CHECK(rest.emr == 0.0);

  Rng r2 = make_rng(1, "motion");
  const auto m3 = run_motion_test(constant_policy(encode(MovementId(3))), 0, profile, spec, r2);
  CHECK(m3.successes == 3);
  for (const auto& t : m3.trials) {
    CHECK(t.success == (t.movement == 3));
    CHECK(t.ticks == (t.movement == 3 ? 40 : 200));
  }
  CHECK(m3.emr == doctest::Approx(120.0 / (120.0 + 33.0 * 200.0)).epsilon(1e-12));
}

TEST_CASE("config round-trips through JSON") {
  const auto c = tiny_config();
  const auto back = experiment_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  auto bad = to_json(c);
  bad["n_repetitions"] = 0;
  CHECK_THROWS(experiment_config_from_json(bad));
}

TEST_CASE("full tiny experiment: protocol, determinism and resume") {
  const auto config = tiny_config();
  Experiment a(config);
  CHECK_THROWS_AS(a.play(0), std::logic_error);
  a.run_to_end();
  const auto report = a.report();
  REQUIRE(report.repetitions.size() == 4);
  CHECK(report.rep(0).policy_index == 0);
  CHECK(report.rep(2).policy_index == 2);
  CHECK(report.rep(3).policy_index == 0);
  CHECK(report.pi0_identity);
  CHECK(report.rep(3).policy_hash == report.rep(0).policy_hash);
  CHECK(report.motion_tests.size() == 2);
  CHECK(report.pretrain_train == 2496);
  CHECK(report.pretrain_val == 1248);
  CHECK(a.buffer().episodes().size() == 2);  // repetitions 0 and 1 only
  for (const auto& f : a.finetune_summaries()) CHECK(f.best_return >= f.start_return);
  CHECK(report.improvement() == doctest::Approx(report.rep(2).normalized_return - report.rep(3).normalized_return));

  const auto out_a = temp_dir("bundle_a");
  const auto out_b = temp_dir("bundle_b");
  a.write_bundle(out_a.string());
  Experiment b(config);
  b.run_to_end();
  b.write_bundle(out_b.string());
  CHECK(same_tree(out_a, out_b));

  // Phase by phase with a work directory, reopening before every step.
  const auto work = temp_dir("work");
  {
    Experiment e(config, work.string());
    e.pretrain();
  }
  while (Experiment::open(work.string()).state().phase() != Phase::kDone) {
    Experiment e = Experiment::open(work.string());
    switch (e.state().phase()) {
      case Phase::kFamiliarize: e.familiarize(); break;
      case Phase::kPlay: e.play(e.state().repetition()); break;
      case Phase::kTrain: e.finetune(e.state().repetition()); break;
      case Phase::kMotionTest: {
        const int first = e.first_motion_policy();
        e.motion_test(e.state().motion_tests_done() == 0 ? first : (first == 0 ? 2 : 0));
        break;
      }
      default: FAIL("unexpected phase");
    }
  }
  const auto out_c = temp_dir("bundle_c");
  Experiment::open(work.string()).write_bundle(out_c.string());
  CHECK(same_tree(out_a, out_c));
  CHECK(fs::exists(work / "policies" / "pi_2.json"));
  CHECK(fs::exists(work / "episodes" / "rep_3.jsonl"));

  auto other = config;
  other.seed = 4;
  CHECK_THROWS(run_full_experiment(other, work.string()));

  for (const auto& p : {out_a, out_b, out_c, work}) fs::remove_all(p);
}

TEST_CASE("gameplay MI falls as subject noise grows") {
  SubjectSpec s;
  s.seed = 11;
  s.gameplay_shift = 1.0;
  double prev = 1e9;
  for (double noise : {0.2, 0.5, 1.0}) {
    s.noise_scale = noise;
    const double mi = measure_gameplay_mi(s, 7, 3);
    CHECK(mi < prev);
    prev = mi;
  }
}

TEST_CASE("noise-free subject gives perfect supervised validation") {
  ExperimentConfig c = tiny_config();
  c.subject.noise_scale = 0.0;
  c.subject.error_rate = 0.0;
  c.pretraining.sl.epochs = 40;
  Rng rng = make_rng(c.seed, "pretrain-session");
  const auto data = record_pretraining_session(make_profile(c.subject), c.pretraining, rng);
  const auto r = sl_pretrain(data, c.pretraining.sl);
  CHECK(r.best_val_f1 == doctest::Approx(1.0));
}
