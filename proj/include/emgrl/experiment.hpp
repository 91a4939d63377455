#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "emgrl/awac.hpp"
#include "emgrl/game.hpp"
#include "emgrl/metrics.hpp"
#include "emgrl/policy.hpp"
#include "emgrl/subject.hpp"

namespace emgrl {

struct PretrainingSpec {
  int recordings = 6;
  int ticks_per_recording = 60;  // 3 s at the 20 Hz feature rate
  int trim_ticks = 6;            // dropped at each end of a recording
  std::vector<int> validation_recordings{2, 5};  // 1-based
  PretrainConfig sl;

  int kept_per_recording() const { return ticks_per_recording - 2 * trim_ticks; }
  void validate() const;
};

struct MotionTestSpec {
  int trials_per_movement = 3;
  int timeout_ticks = 200;
  int success_hits = 40;
  bool consecutive = false;  // count only an unbroken run of hits
};

struct ExperimentConfig {
  SubjectSpec subject;
  std::uint64_t chart_seed = 7;
  int n_repetitions = 8;
  PretrainingSpec pretraining;
  AwacConfig awac;
  MotionTestSpec motion_test;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
// Missing members keep their defaults. A "subject_ref" string is resolved
// relative to `base_dir` and loaded as a subject profile.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
ExperimentConfig load_experiment_config(const std::string& path);

enum class Phase { kPretrain, kFamiliarize, kPlay, kTrain, kMotionTest, kDone };

std::string_view phase_name(Phase p);
Phase phase_from_name(std::string_view name);

// Protocol order: pretrain, familiarize, play 0, (train, play k) for
// k = 1..n, play n+1 with pi_0, two Motion Tests, done.
class SessionState {
 public:
  explicit SessionState(int n_repetitions = 8);

  Phase phase() const { return phase_; }
  int repetition() const { return repetition_; }  // -1 before the first play
  int n_repetitions() const { return n_repetitions_; }
  int motion_tests_done() const { return motion_tests_; }
  // "pi_k" for the policy that drives the current phase, empty during
  // pretraining and Motion Tests.
  std::string active_policy() const;

  bool can_advance(Phase next) const;
  // Throws std::logic_error on an out-of-order transition.
  void advance(Phase next);

  const std::vector<Phase>& history() const { return history_; }
  // Rebuilds a state by replaying a persisted history.
  static SessionState replay(int n_repetitions, const std::vector<Phase>& history);

 private:
  int n_repetitions_;
  Phase phase_ = Phase::kPretrain;
  int repetition_ = -1;
  int motion_tests_ = 0;
  std::vector<Phase> history_{Phase::kPretrain};
};

// Policy index played at repetition k: k for k <= n, 0 for the final one.
int policy_for_repetition(int k, int n_repetitions);

struct PretrainOutcome {
  LabeledDataset dataset;
  PolicyNet policy;
  int best_epoch = -1;
  double best_val_f1 = 0.0;
};

// Static recordings of every movement; recordings are trimmed at both ends
// and split into train and validation by recording number.
LabeledDataset record_pretraining_session(const SubjectProfile& profile, const PretrainingSpec& spec, Rng& rng);

struct PlayedEpisode {
  int repetition = 0;
  int policy_index = 0;
  std::vector<TickRecord> log;
};

// One pass of the chart: the subject executes each tick's ideal movement
// and the policy decodes the resulting features.
PlayedEpisode play_episode(const NoteChart& chart, const SubjectProfile& profile, const PolicyNet& policy, Rng& rng,
                           int repetition, int policy_index);

struct MotionTrial {
  int movement = 0;
  int trial = 0;
  bool success = false;
  int ticks = 0;
  int hits = 0;
};

struct MotionTestResult {
  int policy_index = 0;
  std::vector<MotionTrial> trials;
  double emr = 0.0;
  int successes = 0;
  int total_ticks = 0;
};

MotionTestResult run_motion_test(const PolicyNet& policy, int policy_index, const SubjectProfile& profile,
                                 const MotionTestSpec& spec, Rng& rng);

struct RepetitionMetrics {
  int repetition = 0;
  int policy_index = 0;
  std::string policy_hash;
  long episode_return = 0;
  double normalized_return = 0.0;
  double emr = 0.0;
  double f1_macro = 0.0;
  int action_changes = 0;
  double mi = 0.0;
  double psi_vs_final = 0.0;  // PSI(S_k, S_n)
  double snr_db = 0.0;
  double mav_z_mean = 0.0;  // session MAV z-scored against pretraining
  std::optional<int> best_step;
  std::optional<long> simulated_start;
  std::optional<long> simulated_best;
};

struct FinetuneSummary {
  int repetition = 0;  // trained after this repetition
  int best_step = 0;
  long start_return = 0;
  long best_return = 0;
};

struct ExperimentReport {
  nlohmann::json config;
  int pretrain_best_epoch = -1;
  double pretrain_val_f1 = 0.0;
  std::size_t pretrain_train = 0;
  std::size_t pretrain_val = 0;
  std::vector<RepetitionMetrics> repetitions;
  std::vector<MotionTestResult> motion_tests;  // in the order they ran
  double subject_mi = 0.0;                     // mean gameplay MI over all repetitions
  double subject_snr_db = 0.0;
  double psi_first_pair = 0.0;  // PSI(S_0, S_1)
  double psi_last_pair = 0.0;   // PSI(S_{n-1}, S_n)
  bool pi0_identity = false;    // final repetition's hash equals repetition 0's

  const RepetitionMetrics& rep(int k) const { return repetitions.at(static_cast<std::size_t>(k)); }
  const MotionTestResult& motion(int policy_index) const;
  double improvement() const;  // normalized return of rep n minus rep n+1
};

nlohmann::json to_json(const ExperimentReport& r);

// Runs the protocol phase by phase. With a work directory every finished
// phase is persisted, and reopening the directory resumes from there.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config, std::string workdir = {});
  // Loads config and all finished phases from a work directory.
  static Experiment open(const std::string& workdir);

  const ExperimentConfig& config() const { return config_; }
  const SessionState& state() const { return state_; }
  const NoteChart& chart() const { return chart_; }
  const SubjectProfile& base_profile() const { return profile_; }
  SubjectProfile profile_at(int repetition) const;

  void pretrain();
  void familiarize();
  // Plays repetition k, which must be the next one in protocol order.
  const PlayedEpisode& play(int k);
  // Trains pi_{k+1} on the episodes of repetitions 0..k.
  const FinetuneSummary& finetune(int k);
  // policy_index is 0 or n_repetitions; the other one must follow.
  const MotionTestResult& motion_test(int policy_index);
  // Seeded coin for which policy is tested first.
  int first_motion_policy() const;

  // Runs whatever phases remain.
  void run_to_end();

  ExperimentReport report() const;
  // report.json, repetitions.csv, motion_tests.csv, training logs, chart.
  void write_bundle(const std::string& out_dir) const;

  const PolicyNet& policy(int index) const;
  const ReplayBuffer& buffer() const { return buffer_; }
  const std::vector<PlayedEpisode>& episodes() const { return episodes_; }
  const std::optional<PretrainOutcome>& pretraining() const { return pretrain_; }
  const std::vector<FinetuneSummary>& finetune_summaries() const { return finetune_summaries_; }
  const std::vector<std::vector<TrainingLogRow>>& training_logs() const { return training_logs_; }

 private:
  void persist_state() const;
  std::string path(const std::string& rel) const;

  ExperimentConfig config_;
  std::string workdir_;
  SessionState state_;
  NoteChart chart_;
  SubjectProfile profile_;
  std::optional<PretrainOutcome> pretrain_;
  std::vector<PolicyNet> policies_;
  std::vector<PlayedEpisode> episodes_;
  std::vector<FinetuneSummary> finetune_summaries_;
  std::vector<std::vector<TrainingLogRow>> training_logs_;
  std::vector<MotionTestResult> motion_tests_;
  ReplayBuffer buffer_;
};

ExperimentReport run_full_experiment(const ExperimentConfig& config, const std::string& workdir = {});

struct SeedOutcome {
  std::uint64_t seed = 0;
  double subject_mi = 0.0;
  double return_final_policy = 0.0;  // normalized, repetition n
  double return_initial_policy = 0.0;  // normalized, repetition n+1
  double motion_emr_initial = 0.0;
  double motion_emr_final = 0.0;
  int changes_initial = 0;
  int changes_final = 0;

  double improvement() const { return return_final_policy - return_initial_policy; }
};

struct BatchReport {
  std::vector<SeedOutcome> seeds;
  metrics::WilcoxonResult returns_test;
  std::optional<metrics::WilcoxonResult> motion_test;
  double mean_improvement = 0.0;
  double mean_mi = 0.0;
  double mean_motion_emr_initial = 0.0;
  double mean_motion_emr_final = 0.0;
  double mean_changes_initial = 0.0;
  double mean_changes_final = 0.0;
};

// Subject seed i is derived from seeds[i]; the chart is shared. Seeds run
// in parallel.
std::vector<ExperimentConfig> seed_configs(const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds);
BatchReport run_batch(const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds);
nlohmann::json to_json(const BatchReport& b);

// Gameplay MI for a subject following the chart perfectly.
double measure_gameplay_mi(const SubjectSpec& spec, std::uint64_t chart_seed, std::uint64_t seed);

}  // namespace emgrl
