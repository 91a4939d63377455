#include "emgrl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "emgrl/io.hpp"

namespace emgrl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kConfigSchema = "emgrl.experiment.v1";
constexpr const char* kSessionSchema = "emgrl.session.v1";
constexpr const char* kReportSchema = "emgrl.report.v1";
constexpr const char* kBatchSchema = "emgrl.batch-report.v1";

template <typename T>
void maybe(const json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

std::string fmt(double v, int digits = 6) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string policy_name(int index) { return "pi_" + std::to_string(index); }

json motion_json(const MotionTestResult& m) {
  json trials = json::array();
  for (const auto& t : m.trials) {
    trials.push_back(
        {{"movement", t.movement}, {"trial", t.trial}, {"success", t.success}, {"ticks", t.ticks}, {"hits", t.hits}});
  }
  return {{"policy", policy_name(m.policy_index)},
          {"policy_index", m.policy_index},
          {"emr", m.emr},
          {"successes", m.successes},
          {"total_ticks", m.total_ticks},
          {"trials", trials}};
}

MotionTestResult motion_from_json(const json& j) {
  MotionTestResult m;
  m.policy_index = j.at("policy_index").get<int>();
  m.emr = j.at("emr").get<double>();
  m.successes = j.at("successes").get<int>();
  m.total_ticks = j.at("total_ticks").get<int>();
  for (const auto& t : j.at("trials")) {
    m.trials.push_back({t.at("movement").get<int>(), t.at("trial").get<int>(), t.at("success").get<bool>(),
                        t.at("ticks").get<int>(), t.at("hits").get<int>()});
  }
  return m;
}

json finetune_json(const FinetuneSummary& f) {
  return {{"repetition", f.repetition},
          {"best_step", f.best_step},
          {"start_return", f.start_return},
          {"best_return", f.best_return}};
}

FinetuneSummary finetune_from_json(const json& j) {
  return {j.at("repetition").get<int>(), j.at("best_step").get<int>(), j.at("start_return").get<long>(),
          j.at("best_return").get<long>()};
}

std::optional<double> parse_optional(const std::string& field) {
  if (field.empty()) return std::nullopt;
  return std::stod(field);
}

std::vector<TrainingLogRow> read_training_log_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read training log " + path);
  std::string line;
  std::getline(in, line);
  std::vector<TrainingLogRow> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    f.resize(5);
    TrainingLogRow r;
    r.step = std::stoi(f[0]);
    r.td_loss = std::stod(f[1]);
    r.actor_loss = parse_optional(f[2]);
    r.mean_weight = parse_optional(f[3]);
    if (!f[4].empty()) r.simulated_return = std::stol(f[4]);
    rows.push_back(r);
  }
  return rows;
}

std::vector<FeatureState> states_of(const PlayedEpisode& ep) {
  std::vector<FeatureState> out;
  out.reserve(ep.log.size());
  for (const auto& r : ep.log) out.push_back(r.state);
  return out;
}

}  // namespace

// ---------------------------------------------------------------- config

void PretrainingSpec::validate() const {
  if (recordings < 2) throw std::invalid_argument("pretraining needs at least two recordings per movement");
  if (trim_ticks < 0 || kept_per_recording() < 1) throw std::invalid_argument("trim leaves no windows");
  if (validation_recordings.empty() || validation_recordings.size() >= static_cast<std::size_t>(recordings)) {
    throw std::invalid_argument("validation must use some but not all recordings");
  }
  for (int r : validation_recordings) {
    if (r < 1 || r > recordings) throw std::invalid_argument("validation recording out of range");
  }
  if (sl.epochs < 1 || sl.batch_size < 1 || !(sl.learning_rate > 0.0)) throw std::invalid_argument("bad SL settings");
}

void ExperimentConfig::validate() const {
  if (n_repetitions < 1) throw std::invalid_argument("n_repetitions must be >= 1");
  pretraining.validate();
  awac.validate();
  if (motion_test.trials_per_movement < 1 || motion_test.timeout_ticks < 1 || motion_test.success_hits < 1) {
    throw std::invalid_argument("motion test counts must be positive");
  }
  if (subject.noise_scale < 0.0 || subject.error_rate < 0.0 || subject.error_rate > 1.0) {
    throw std::invalid_argument("subject noise and error rate out of range");
  }
}

json to_json(const ExperimentConfig& c) {
  return {{"schema", kConfigSchema},
          {"seed", c.seed},
          {"chart_seed", c.chart_seed},
          {"n_repetitions", c.n_repetitions},
          {"subject", io::to_json(c.subject)},
          {"pretraining",
           {{"recordings", c.pretraining.recordings},
            {"ticks_per_recording", c.pretraining.ticks_per_recording},
            {"trim_ticks", c.pretraining.trim_ticks},
            {"validation_recordings", c.pretraining.validation_recordings},
            {"sl", io::to_json(c.pretraining.sl)}}},
          {"awac", io::to_json(c.awac)},
          {"motion_test",
           {{"trials_per_movement", c.motion_test.trials_per_movement},
            {"timeout_ticks", c.motion_test.timeout_ticks},
            {"success_hits", c.motion_test.success_hits},
            {"consecutive", c.motion_test.consecutive}}}};
}

ExperimentConfig experiment_config_from_json(const json& j, const std::string& base_dir) {
  if (j.contains("schema") && j.at("schema") != kConfigSchema) throw std::runtime_error("not an experiment config");
  ExperimentConfig c;
  maybe(j, "seed", c.seed);
  maybe(j, "chart_seed", c.chart_seed);
  maybe(j, "n_repetitions", c.n_repetitions);
  if (j.contains("subject_ref")) {
    c.subject = io::load_subject_spec((fs::path(base_dir) / j.at("subject_ref").get<std::string>()).string());
  }
  if (j.contains("subject")) c.subject = io::subject_spec_from_json(j.at("subject"));
  if (j.contains("pretraining")) {
    const auto& p = j.at("pretraining");
    maybe(p, "recordings", c.pretraining.recordings);
    maybe(p, "ticks_per_recording", c.pretraining.ticks_per_recording);
    maybe(p, "trim_ticks", c.pretraining.trim_ticks);
    maybe(p, "validation_recordings", c.pretraining.validation_recordings);
    if (p.contains("sl")) c.pretraining.sl = io::pretrain_config_from_json(p.at("sl"));
  }
  if (j.contains("awac")) c.awac = io::awac_config_from_json(j.at("awac"));
  if (j.contains("motion_test")) {
    const auto& m = j.at("motion_test");
    maybe(m, "trials_per_movement", c.motion_test.trials_per_movement);
    maybe(m, "timeout_ticks", c.motion_test.timeout_ticks);
    maybe(m, "success_hits", c.motion_test.success_hits);
    maybe(m, "consecutive", c.motion_test.consecutive);
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from_json(io::read_json(path), fs::path(path).parent_path().string());
}

// ---------------------------------------------------------------- session state

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::kPretrain: return "pretrain";
    case Phase::kFamiliarize: return "familiarize";
    case Phase::kPlay: return "play";
    case Phase::kTrain: return "train";
    case Phase::kMotionTest: return "motion_test";
    case Phase::kDone: return "done";
  }
  return "?";
}

Phase phase_from_name(std::string_view name) {
  for (Phase p : {Phase::kPretrain, Phase::kFamiliarize, Phase::kPlay, Phase::kTrain, Phase::kMotionTest, Phase::kDone}) {
    if (phase_name(p) == name) return p;
  }
  throw std::invalid_argument("unknown phase " + std::string(name));
}

SessionState::SessionState(int n_repetitions) : n_repetitions_(n_repetitions) {
  if (n_repetitions < 1) throw std::invalid_argument("n_repetitions must be >= 1");
}

std::string SessionState::active_policy() const {
  switch (phase_) {
    case Phase::kFamiliarize: return policy_name(0);
    case Phase::kPlay: return policy_name(policy_for_repetition(repetition_, n_repetitions_));
    case Phase::kTrain: return policy_name(repetition_);
    default: return "";
  }
}

bool SessionState::can_advance(Phase next) const {
  switch (phase_) {
    case Phase::kPretrain: return next == Phase::kFamiliarize;
    case Phase::kFamiliarize: return next == Phase::kPlay;
    case Phase::kPlay:
      if (repetition_ < n_repetitions_) return next == Phase::kTrain;
      if (repetition_ == n_repetitions_) return next == Phase::kPlay;
      return next == Phase::kMotionTest;
    case Phase::kTrain: return next == Phase::kPlay;
    case Phase::kMotionTest: return motion_tests_ == 0 ? next == Phase::kMotionTest : next == Phase::kDone;
    case Phase::kDone: return false;
  }
  return false;
}

void SessionState::advance(Phase next) {
  if (!can_advance(next)) {
    throw std::logic_error("illegal transition " + std::string(phase_name(phase_)) + " -> " +
                           std::string(phase_name(next)));
  }
  if (phase_ == Phase::kMotionTest) ++motion_tests_;
  if (next == Phase::kPlay) ++repetition_;
  phase_ = next;
  history_.push_back(next);
}

SessionState SessionState::replay(int n_repetitions, const std::vector<Phase>& history) {
  SessionState s(n_repetitions);
  if (history.empty() || history.front() != Phase::kPretrain) throw std::logic_error("history must start with pretrain");
  for (std::size_t i = 1; i < history.size(); ++i) s.advance(history[i]);
  return s;
}

int policy_for_repetition(int k, int n_repetitions) {
  if (k < 0 || k > n_repetitions + 1) throw std::out_of_range("repetition out of range");
  return k <= n_repetitions ? k : 0;
}

// ---------------------------------------------------------------- protocol pieces

LabeledDataset record_pretraining_session(const SubjectProfile& profile, const PretrainingSpec& spec, Rng& rng) {
  spec.validate();
  LabeledDataset data;
  data.records.reserve(static_cast<std::size_t>(kNumMovements * spec.recordings * spec.kept_per_recording()));
  for (int m = 0; m < kNumMovements; ++m) {
    const MovementId id(m);
    for (int r = 1; r <= spec.recordings; ++r) {
      const bool val = std::find(spec.validation_recordings.begin(), spec.validation_recordings.end(), r) !=
                       spec.validation_recordings.end();
      for (int t = 0; t < spec.ticks_per_recording; ++t) {
        const FeatureState s = emit_features(profile, id, rng, SessionKind::kPretraining);
        if (t < spec.trim_ticks || t >= spec.ticks_per_recording - spec.trim_ticks) continue;
        data.records.push_back({s, encode(id), val ? DataSplit::kValidation : DataSplit::kTrain, m, r});
      }
    }
  }
  return data;
}

PlayedEpisode play_episode(const NoteChart& chart, const SubjectProfile& profile, const PolicyNet& policy, Rng& rng,
                           int repetition, int policy_index) {
  std::vector<FeatureState> states(static_cast<std::size_t>(chart.ticks()));
  for (int t = 0; t < chart.ticks(); ++t) {
    const MovementId intended = canonicalize(chart.ideal[static_cast<std::size_t>(t)]);
    const IntentionEvent ev = execute_intention(profile, intended, rng, t);
    states[static_cast<std::size_t>(t)] = emit_features(profile, ev.executed, rng);
  }
  // The policy is deterministic, so decoding the whole episode at once gives
  // the same actions as decoding tick by tick.
  const std::vector<MovementVector> actions = policy.predict(states);
  GameSession session(chart);
  for (std::size_t t = 0; t < states.size(); ++t) session.step(states[t], actions[t]);
  return {repetition, policy_index, session.take_log()};
}

MotionTestResult run_motion_test(const PolicyNet& policy, int policy_index, const SubjectProfile& profile,
                                 const MotionTestSpec& spec, Rng& rng) {
  std::vector<std::pair<int, int>> order;
  for (int m = 1; m < kNumMovements; ++m) {
    for (int k = 0; k < spec.trials_per_movement; ++k) order.emplace_back(m, k);
  }
  std::shuffle(order.begin(), order.end(), rng);

  MotionTestResult result;
  result.policy_index = policy_index;
  long correct = 0;
  for (const auto& [m, k] : order) {
    const MovementId id(m);
    const MovementVector target = encode(id);
    std::vector<FeatureState> states(static_cast<std::size_t>(spec.timeout_ticks));
    for (int t = 0; t < spec.timeout_ticks; ++t) {
      states[static_cast<std::size_t>(t)] = emit_features(profile, execute_intention(profile, id, rng, t).executed, rng);
    }
    const auto preds = policy.predict(states);
    MotionTrial trial{m, k, false, 0, 0};
    int run = 0;
    for (int t = 0; t < spec.timeout_ticks; ++t) {
      const bool hit = preds[static_cast<std::size_t>(t)] == target;
      ++trial.ticks;
      if (hit) {
        ++trial.hits;
        ++correct;
      }
      run = hit ? run + 1 : 0;
      if ((spec.consecutive ? run : trial.hits) >= spec.success_hits) {
        trial.success = true;
        break;
      }
    }
    result.total_ticks += trial.ticks;
    result.successes += trial.success ? 1 : 0;
    result.trials.push_back(trial);
  }
  result.emr = result.total_ticks > 0 ? static_cast<double>(correct) / result.total_ticks : 0.0;
  return result;
}

// ---------------------------------------------------------------- report

const MotionTestResult& ExperimentReport::motion(int policy_index) const {
  for (const auto& m : motion_tests) {
    if (m.policy_index == policy_index) return m;
  }
  throw std::out_of_range("no motion test for " + policy_name(policy_index));
}

double ExperimentReport::improvement() const {
  const int n = static_cast<int>(repetitions.size()) - 2;
  return rep(n).normalized_return - rep(n + 1).normalized_return;
}

json to_json(const ExperimentReport& r) {
  json reps = json::array();
  for (const auto& m : r.repetitions) {
    json j = {{"repetition", m.repetition},
              {"policy", policy_name(m.policy_index)},
              {"policy_hash", m.policy_hash},
              {"return", m.episode_return},
              {"normalized_return", m.normalized_return},
              {"emr", m.emr},
              {"f1_macro", m.f1_macro},
              {"action_changes", m.action_changes},
              {"mi", m.mi},
              {"psi_vs_final", m.psi_vs_final},
              {"snr_db", m.snr_db},
              {"mav_z_mean", m.mav_z_mean}};
    if (m.best_step) {
      j["finetune"] = {{"best_step", *m.best_step},
                       {"simulated_start", *m.simulated_start},
                       {"simulated_best", *m.simulated_best}};
    }
    reps.push_back(j);
  }
  json motion = json::array();
  for (const auto& m : r.motion_tests) motion.push_back(motion_json(m));
  return {{"schema", kReportSchema},
          {"config", r.config},
          {"pretraining",
           {{"best_epoch", r.pretrain_best_epoch},
            {"val_f1", r.pretrain_val_f1},
            {"train_states", r.pretrain_train},
            {"val_states", r.pretrain_val}}},
          {"subject", {{"mi", r.subject_mi}, {"snr_db", r.subject_snr_db}}},
          {"psi", {{"first_pair", r.psi_first_pair}, {"last_pair", r.psi_last_pair}}},
          {"pi0_identity", r.pi0_identity},
          {"repetitions", reps},
          {"motion_tests", motion}};
}

// ---------------------------------------------------------------- experiment

Experiment::Experiment(ExperimentConfig config, std::string workdir)
    : config_(std::move(config)), workdir_(std::move(workdir)), state_(config_.n_repetitions) {
  config_.validate();
  chart_ = build_chart(config_.chart_seed);
  profile_ = make_profile(config_.subject);
  if (!workdir_.empty()) {
    for (const char* sub : {"policies", "episodes", "training", "finetune", "motion"}) {
      fs::create_directories(fs::path(workdir_) / sub);
    }
    io::write_json(path("config.json"), to_json(config_));
    save_chart(path("chart.json"), chart_);
    persist_state();
  }
}

std::string Experiment::path(const std::string& rel) const { return (fs::path(workdir_) / rel).string(); }

void Experiment::persist_state() const {
  if (workdir_.empty()) return;
  json hist = json::array();
  for (Phase p : state_.history()) hist.push_back(phase_name(p));
  const int first = first_motion_policy();
  const json motion_order = {policy_name(first), policy_name(first == 0 ? config_.n_repetitions : 0)};
  io::write_json(path("state.json"), {{"schema", kSessionSchema},
                                      {"n_repetitions", state_.n_repetitions()},
                                      {"phase", phase_name(state_.phase())},
                                      {"repetition", state_.repetition()},
                                      {"active_policy", state_.active_policy()},
                                      {"motion_order", motion_order},
                                      {"history", hist}});
}

Experiment Experiment::open(const std::string& workdir) {
  const ExperimentConfig config = experiment_config_from_json(io::read_json((fs::path(workdir) / "config.json").string()));
  const json st = io::read_json((fs::path(workdir) / "state.json").string());
  if (st.at("schema") != kSessionSchema) throw std::runtime_error("not a session state file");
  std::vector<Phase> history;
  for (const auto& p : st.at("history")) history.push_back(phase_from_name(p.get<std::string>()));

  Experiment e(config);
  e.workdir_ = workdir;
  e.state_ = SessionState::replay(config.n_repetitions, history);
  const auto& s = e.state_;
  if (s.phase() == Phase::kPretrain) return e;

  PretrainOutcome pre;
  pre.dataset = io::read_dataset(e.path("dataset.jsonl"));
  pre.policy = load_policy(e.path("policies/pi_0.json")).policy;
  const json pj = io::read_json(e.path("pretrain.json"));
  pre.best_epoch = pj.at("best_epoch").get<int>();
  pre.best_val_f1 = pj.at("best_val_f1").get<double>();
  e.policies_.push_back(pre.policy);
  e.pretrain_ = std::move(pre);

  const int n = config.n_repetitions;
  // A phase in the history is finished unless it is the current one.
  auto finished = [&](Phase p) {
    const auto c = std::count(history.begin(), history.end(), p);
    return static_cast<int>(c) - (s.phase() == p ? 1 : 0);
  };
  const int played = finished(Phase::kPlay);
  const int trained = finished(Phase::kTrain);
  for (int k = 0; k < trained; ++k) {
    const std::string rep = std::to_string(k);
    e.policies_.push_back(load_policy(e.path("policies/pi_" + std::to_string(k + 1) + ".json")).policy);
    e.finetune_summaries_.push_back(finetune_from_json(io::read_json(e.path("finetune/rep_" + rep + ".json"))));
    e.training_logs_.push_back(read_training_log_csv(e.path("training/rep_" + rep + ".csv")));
  }
  for (int k = 0; k < played; ++k) {
    PlayedEpisode ep;
    ep.repetition = k;
    ep.policy_index = policy_for_repetition(k, n);
    ep.log = io::read_episode_log(e.path("episodes/rep_" + std::to_string(k) + ".jsonl"));
    e.episodes_.push_back(std::move(ep));
  }
  if (played > 0) e.buffer_ = io::read_buffer(e.path("buffer.jsonl"));
  const int first = e.first_motion_policy();
  const int order[2] = {first, first == 0 ? n : 0};
  for (int i = 0; i < s.motion_tests_done(); ++i) {
    e.motion_tests_.push_back(motion_from_json(io::read_json(e.path("motion/" + policy_name(order[i]) + ".json"))));
  }
  return e;
}

SubjectProfile Experiment::profile_at(int repetition) const { return profile_at_repetition(profile_, repetition); }

const PolicyNet& Experiment::policy(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= policies_.size()) {
    throw std::out_of_range(policy_name(index) + " is not available yet");
  }
  return policies_[static_cast<std::size_t>(index)];
}

void Experiment::pretrain() {
  if (state_.phase() != Phase::kPretrain) throw std::logic_error("pretraining already done");
  Rng rng = make_rng(config_.seed, "pretrain", 0);
  PretrainOutcome out;
  out.dataset = record_pretraining_session(profile_, config_.pretraining, rng);
  PretrainConfig sl = config_.pretraining.sl;
  sl.seed = derive_seed(config_.seed, "sl", 0);
  PretrainResult r = sl_pretrain(out.dataset, sl);
  out.policy = r.policy;
  out.best_epoch = r.best_epoch;
  out.best_val_f1 = r.best_val_f1;
  policies_.assign(1, out.policy);
  pretrain_ = std::move(out);
  state_.advance(Phase::kFamiliarize);
  if (!workdir_.empty()) {
    io::write_dataset(path("dataset.jsonl"), pretrain_->dataset);
    save_policy(path("policies/pi_0.json"), pretrain_->policy, 0);
    io::write_json(path("pretrain.json"), {{"best_epoch", pretrain_->best_epoch},
                                           {"best_val_f1", pretrain_->best_val_f1},
                                           {"train_states", pretrain_->dataset.count(DataSplit::kTrain)},
                                           {"val_states", pretrain_->dataset.count(DataSplit::kValidation)}});
    persist_state();
  }
}

void Experiment::familiarize() {
  if (state_.phase() != Phase::kFamiliarize) throw std::logic_error("familiarization is not the next phase");
  // Played and thrown away: nothing is recorded.
  Rng rng = make_rng(config_.seed, "familiarize", 0);
  (void)play_episode(chart_, profile_, policy(0), rng, -1, 0);
  state_.advance(Phase::kPlay);
  persist_state();
}

const PlayedEpisode& Experiment::play(int k) {
  if (state_.phase() != Phase::kPlay || state_.repetition() != k) {
    throw std::logic_error("repetition " + std::to_string(k) + " is not the next phase");
  }
  const int n = config_.n_repetitions;
  const int p = policy_for_repetition(k, n);
  Rng rng = make_rng(config_.seed, "play", static_cast<std::uint64_t>(k));
  episodes_.push_back(play_episode(chart_, profile_at(k), policy(p), rng, k, p));
  const PlayedEpisode& ep = episodes_.back();
  if (k < n) {
    Rng aug = make_rng(config_.seed, "augment", static_cast<std::uint64_t>(k));
    buffer_.append(episode_from_log(ep.log, k), config_.awac.epsilon, aug);
  }
  state_.advance(k < n ? Phase::kTrain : (k == n ? Phase::kPlay : Phase::kMotionTest));
  if (!workdir_.empty()) {
    io::write_episode_log(path("episodes/rep_" + std::to_string(k) + ".jsonl"), ep.log, k);
    if (k < n) io::write_buffer(path("buffer.jsonl"), buffer_);
    persist_state();
  }
  return ep;
}

const FinetuneSummary& Experiment::finetune(int k) {
  if (state_.phase() != Phase::kTrain || state_.repetition() != k) {
    throw std::logic_error("fine-tuning after repetition " + std::to_string(k) + " is not the next phase");
  }
  ReplayBuffer train = buffer_;
  if (config_.awac.include_pretraining_data) train.add_pretraining(pretrain_->dataset);
  FinetuneResult r =
      finetune_repetition(train, chart_, policy(k), config_.awac, derive_seed(config_.seed, "finetune", static_cast<std::uint64_t>(k)));
  policies_.push_back(r.policy);
  finetune_summaries_.push_back({k, r.best_step, r.start_return, r.best_return});
  training_logs_.push_back(std::move(r.log));
  state_.advance(Phase::kPlay);
  if (!workdir_.empty()) {
    save_policy(path("policies/pi_" + std::to_string(k + 1) + ".json"), policies_.back(), k + 1);
    io::write_json(path("finetune/rep_" + std::to_string(k) + ".json"), finetune_json(finetune_summaries_.back()));
    write_training_log_csv(path("training/rep_" + std::to_string(k) + ".csv"), training_logs_.back());
    persist_state();
  }
  return finetune_summaries_.back();
}

int Experiment::first_motion_policy() const {
  Rng rng = make_rng(config_.seed, "motion-order", 0);
  return std::bernoulli_distribution(0.5)(rng) ? config_.n_repetitions : 0;
}

const MotionTestResult& Experiment::motion_test(int policy_index) {
  const int n = config_.n_repetitions;
  if (state_.phase() != Phase::kMotionTest) throw std::logic_error("Motion Tests are not the next phase");
  const int first = first_motion_policy();
  const int expected = state_.motion_tests_done() == 0 ? first : (first == 0 ? n : 0);
  if (policy_index != expected) {
    throw std::logic_error("Motion Test for " + policy_name(expected) + " runs next");
  }
  Rng rng = make_rng(config_.seed, "motion", static_cast<std::uint64_t>(policy_index));
  motion_tests_.push_back(run_motion_test(policy(policy_index), policy_index, profile_at(n + 1), config_.motion_test, rng));
  state_.advance(state_.motion_tests_done() == 0 ? Phase::kMotionTest : Phase::kDone);
  if (!workdir_.empty()) {
    io::write_json(path("motion/" + policy_name(policy_index) + ".json"), motion_json(motion_tests_.back()));
    persist_state();
  }
  return motion_tests_.back();
}

void Experiment::run_to_end() {
  while (state_.phase() != Phase::kDone) {
    switch (state_.phase()) {
      case Phase::kPretrain: pretrain(); break;
      case Phase::kFamiliarize: familiarize(); break;
      case Phase::kPlay: play(state_.repetition()); break;
      case Phase::kTrain: finetune(state_.repetition()); break;
      case Phase::kMotionTest: {
        const int first = first_motion_policy();
        motion_test(state_.motion_tests_done() == 0 ? first : (first == 0 ? config_.n_repetitions : 0));
        break;
      }
      case Phase::kDone: break;
    }
  }
}

ExperimentReport Experiment::report() const {
  if (state_.phase() != Phase::kDone) throw std::logic_error("the report needs a finished experiment");
  const int n = config_.n_repetitions;
  ExperimentReport r;
  r.config = to_json(config_);
  r.pretrain_best_epoch = pretrain_->best_epoch;
  r.pretrain_val_f1 = pretrain_->best_val_f1;
  r.pretrain_train = pretrain_->dataset.count(DataSplit::kTrain);
  r.pretrain_val = pretrain_->dataset.count(DataSplit::kValidation);

  std::vector<FeatureState> pre_states;
  std::vector<MovementId> pre_labels;
  for (const auto& rec : pretrain_->dataset.records) {
    pre_states.push_back(rec.state);
    pre_labels.emplace_back(rec.movement);
  }
  r.subject_snr_db = metrics::snr(pre_states, pre_labels).subject_db;

  std::vector<std::vector<FeatureState>> states;
  for (const auto& ep : episodes_) states.push_back(states_of(ep));

  // Session MAV trace: pretraining first, then every repetition in order.
  std::vector<double> trace = metrics::mean_mav(pre_states);
  for (const auto& s : states) {
    const auto m = metrics::mean_mav(s);
    trace.insert(trace.end(), m.begin(), m.end());
  }
  const auto z = metrics::normalize_mav_trace(trace, pre_states.size());

  std::size_t offset = pre_states.size();
  double mi_sum = 0.0;
  for (std::size_t k = 0; k < episodes_.size(); ++k) {
    const PlayedEpisode& ep = episodes_[k];
    RepetitionMetrics m;
    m.repetition = ep.repetition;
    m.policy_index = ep.policy_index;
    m.policy_hash = policy_hash(policy(ep.policy_index));
    std::vector<MovementVector> preds, ideals;
    std::vector<int> labels;
    std::vector<MovementId> ids;
    for (const auto& t : ep.log) {
      m.episode_return += t.reward;
      preds.push_back(t.action);
      ideals.push_back(t.ideal);
      ids.push_back(canonicalize(t.ideal));
      labels.push_back(ids.back().index());
    }
    m.normalized_return = normalized_return(m.episode_return);
    m.emr = metrics::emr(preds, ideals);
    m.f1_macro = metrics::f1_macro(preds, ideals).macro;
    m.action_changes = metrics::action_changes(preds);
    metrics::MiOptions mo;
    mo.jitter_seed = derive_seed(config_.seed, "mi", k);
    m.mi = metrics::mutual_information(states[k], labels, mo);
    mi_sum += m.mi;
    m.psi_vs_final = metrics::psi(states[k], states[static_cast<std::size_t>(n)]).mean;
    m.snr_db = metrics::snr(states[k], ids).subject_db;
    m.mav_z_mean = std::accumulate(z.begin() + static_cast<long>(offset), z.begin() + static_cast<long>(offset + ep.log.size()), 0.0) /
                   static_cast<double>(ep.log.size());
    offset += ep.log.size();
    if (k < finetune_summaries_.size()) {
      m.best_step = finetune_summaries_[k].best_step;
      m.simulated_start = finetune_summaries_[k].start_return;
      m.simulated_best = finetune_summaries_[k].best_return;
    }
    r.repetitions.push_back(std::move(m));
  }
  r.subject_mi = mi_sum / static_cast<double>(episodes_.size());
  r.psi_first_pair = metrics::psi(states[0], states[std::min<std::size_t>(1, states.size() - 1)]).mean;
  r.psi_last_pair = metrics::psi(states[static_cast<std::size_t>(n - 1)], states[static_cast<std::size_t>(n)]).mean;
  r.pi0_identity = r.repetitions.back().policy_hash == r.repetitions.front().policy_hash;
  r.motion_tests = motion_tests_;
  return r;
}

void Experiment::write_bundle(const std::string& out_dir) const {
  const ExperimentReport r = report();
  fs::create_directories(fs::path(out_dir) / "training");
  io::write_json((fs::path(out_dir) / "report.json").string(), to_json(r));

  std::ofstream reps((fs::path(out_dir) / "repetitions.csv").string());
  reps << "repetition,policy,return,normalized_return,emr,f1_macro,action_changes,mi,psi_vs_final,snr_db,mav_z_mean,"
          "best_step\n";
  for (const auto& m : r.repetitions) {
    reps << m.repetition << ',' << policy_name(m.policy_index) << ',' << m.episode_return << ','
         << fmt(m.normalized_return) << ',' << fmt(m.emr) << ',' << fmt(m.f1_macro) << ',' << m.action_changes << ','
         << fmt(m.mi) << ',' << fmt(m.psi_vs_final) << ',' << fmt(m.snr_db) << ',' << fmt(m.mav_z_mean) << ',';
    if (m.best_step) reps << *m.best_step;
    reps << '\n';
  }

  std::ofstream motion((fs::path(out_dir) / "motion_tests.csv").string());
  motion << "policy,order,emr,successes,trials,ticks\n";
  for (std::size_t i = 0; i < r.motion_tests.size(); ++i) {
    const auto& m = r.motion_tests[i];
    motion << policy_name(m.policy_index) << ',' << i << ',' << fmt(m.emr) << ',' << m.successes << ','
           << m.trials.size() << ',' << m.total_ticks << '\n';
  }

  for (std::size_t k = 0; k < training_logs_.size(); ++k) {
    write_training_log_csv((fs::path(out_dir) / "training" / ("rep_" + std::to_string(k) + ".csv")).string(),
                           training_logs_[k]);
  }
  save_chart((fs::path(out_dir) / "chart.json").string(), chart_);
}

ExperimentReport run_full_experiment(const ExperimentConfig& config, const std::string& workdir) {
  if (!workdir.empty() && fs::exists(fs::path(workdir) / "state.json")) {
    Experiment e = Experiment::open(workdir);
    if (to_json(e.config()) != to_json(config)) throw std::runtime_error(workdir + " holds a different experiment");
    e.run_to_end();
    return e.report();
  }
  Experiment e(config, workdir);
  e.run_to_end();
  return e.report();
}

// ---------------------------------------------------------------- batches

std::vector<ExperimentConfig> seed_configs(const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds) {
  std::vector<ExperimentConfig> out;
  for (std::uint64_t s : seeds) {
    ExperimentConfig c = base;
    c.seed = s;
    c.subject.seed = derive_seed(s, "subject", 0);
    out.push_back(c);
  }
  return out;
}

BatchReport run_batch(const ExperimentConfig& base, const std::vector<std::uint64_t>& seeds) {
  const auto configs = seed_configs(base, seeds);
  std::vector<SeedOutcome> outcomes(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  const long count = static_cast<long>(configs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < count; ++i) {
    try {
      const ExperimentConfig& c = configs[static_cast<std::size_t>(i)];
      const ExperimentReport r = run_full_experiment(c);
      const int n = c.n_repetitions;
      SeedOutcome& o = outcomes[static_cast<std::size_t>(i)];
      o.seed = c.seed;
      o.subject_mi = r.subject_mi;
      o.return_final_policy = r.rep(n).normalized_return;
      o.return_initial_policy = r.rep(n + 1).normalized_return;
      o.motion_emr_initial = r.motion(0).emr;
      o.motion_emr_final = r.motion(n).emr;
      o.changes_initial = r.rep(n + 1).action_changes;
      o.changes_final = r.rep(n).action_changes;
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  BatchReport b;
  b.seeds = outcomes;
  std::vector<double> r0, r8, e0, e8;
  for (const auto& o : outcomes) {
    r0.push_back(o.return_initial_policy);
    r8.push_back(o.return_final_policy);
    e0.push_back(o.motion_emr_initial);
    e8.push_back(o.motion_emr_final);
    b.mean_improvement += o.improvement();
    b.mean_mi += o.subject_mi;
    b.mean_motion_emr_initial += o.motion_emr_initial;
    b.mean_motion_emr_final += o.motion_emr_final;
    b.mean_changes_initial += o.changes_initial;
    b.mean_changes_final += o.changes_final;
  }
  const double n = static_cast<double>(outcomes.size());
  b.mean_improvement /= n;
  b.mean_mi /= n;
  b.mean_motion_emr_initial /= n;
  b.mean_motion_emr_final /= n;
  b.mean_changes_initial /= n;
  b.mean_changes_final /= n;
  try {
    b.returns_test = metrics::wilcoxon_signed_rank(r0, r8);
  } catch (const std::invalid_argument&) {
    b.returns_test = {};
  }
  try {
    b.motion_test = metrics::wilcoxon_signed_rank(e0, e8);
  } catch (const std::invalid_argument&) {
    b.motion_test.reset();
  }
  return b;
}

json to_json(const BatchReport& b) {
  auto w = [](const metrics::WilcoxonResult& r) {
    return json{{"statistic", r.statistic}, {"w_plus", r.w_plus}, {"p_value", r.p_value},
                {"significant", r.significant}, {"n", r.n}, {"exact", r.exact}};
  };
  json seeds = json::array();
  for (const auto& o : b.seeds) {
    seeds.push_back({{"seed", o.seed},
                     {"subject_mi", o.subject_mi},
                     {"return_initial_policy", o.return_initial_policy},
                     {"return_final_policy", o.return_final_policy},
                     {"improvement", o.improvement()},
                     {"motion_emr_initial", o.motion_emr_initial},
                     {"motion_emr_final", o.motion_emr_final},
                     {"changes_initial", o.changes_initial},
                     {"changes_final", o.changes_final}});
  }
  return {{"schema", kBatchSchema},
          {"seeds", seeds},
          {"mean_improvement", b.mean_improvement},
          {"mean_mi", b.mean_mi},
          {"mean_motion_emr_initial", b.mean_motion_emr_initial},
          {"mean_motion_emr_final", b.mean_motion_emr_final},
          {"mean_changes_initial", b.mean_changes_initial},
          {"mean_changes_final", b.mean_changes_final},
          {"returns_test", w(b.returns_test)},
          {"motion_test", b.motion_test ? w(*b.motion_test) : json(nullptr)}};
}

double measure_gameplay_mi(const SubjectSpec& spec, std::uint64_t chart_seed, std::uint64_t seed) {
  const SubjectProfile profile = make_profile(spec);
  const NoteChart chart = build_chart(chart_seed);
  Rng rng = make_rng(seed, "calibrate", 0);
  std::vector<FeatureState> states;
  std::vector<int> labels;
  for (int t = 0; t < chart.ticks(); ++t) {
    const MovementId intended = canonicalize(chart.ideal[static_cast<std::size_t>(t)]);
    states.push_back(emit_features(profile, execute_intention(profile, intended, rng, t).executed, rng));
    labels.push_back(intended.index());
  }
  metrics::MiOptions mo;
  mo.jitter_seed = derive_seed(seed, "mi", 0);
  return metrics::mutual_information(states, labels, mo);
}

}  // namespace emgrl
