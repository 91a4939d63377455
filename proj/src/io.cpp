#include "emgrl/io.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace emgrl::io {
namespace {

using nlohmann::json;

std::ofstream open_out(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return in;
}

void write_header(std::ostream& out, const char* schema, json extra = json::object()) {
  extra["schema"] = schema;
  out << extra.dump() << '\n';
}

// Reads a JSON-lines file, checking the header schema.
std::vector<json> read_lines(const std::string& path, const char* schema, json* header = nullptr) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty file " + path);
  const json head = json::parse(line);
  if (!head.contains("schema") || head.at("schema") != schema) {
    throw std::runtime_error(path + ": expected schema " + schema);
  }
  if (header) *header = head;
  std::vector<json> out;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

template <typename T>
void maybe(const json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

json transition_json(const Transition& t) {
  return {{"repetition", t.repetition}, {"state", t.state},       {"action", bits_json(t.action)},
          {"reward", t.reward},         {"next_state", t.next_state}, {"done", t.done},
          {"ideal", bits_json(t.ideal)}, {"augmented", t.augmented}};
}

Transition transition_from_json(const json& j) {
  Transition t;
  t.repetition = j.at("repetition").get<int>();
  t.state = j.at("state").get<FeatureState>();
  t.action = bits_from_json(j.at("action"));
  t.reward = j.at("reward").get<int>();
  t.next_state = j.at("next_state").get<FeatureState>();
  t.done = j.at("done").get<bool>();
  t.ideal = bits_from_json(j.at("ideal"));
  t.augmented = j.value("augmented", false);
  if (t.reward != reward(t.action, t.ideal)) throw std::runtime_error("buffer record violates the reward rule");
  return t;
}

}  // namespace

json bits_json(MovementVector v) { return v.bits(); }

MovementVector bits_from_json(const json& j) {
  return MovementVector::from_bits(j.get<std::array<int, kActionBits>>());
}

json to_json(const SubjectSpec& s) {
  return {{"seed", s.seed},
          {"noise_scale", s.noise_scale},
          {"error_rate", s.error_rate},
          {"drift_rate", s.drift_rate},
          {"adaptation_rate", s.adaptation_rate},
          {"pretrain_contraction", s.pretrain_contraction},
          {"gameplay_shift", s.gameplay_shift}};
}

SubjectSpec subject_spec_from_json(const json& j) {
  SubjectSpec s;
  maybe(j, "seed", s.seed);
  maybe(j, "noise_scale", s.noise_scale);
  maybe(j, "error_rate", s.error_rate);
  maybe(j, "drift_rate", s.drift_rate);
  maybe(j, "adaptation_rate", s.adaptation_rate);
  maybe(j, "pretrain_contraction", s.pretrain_contraction);
  maybe(j, "gameplay_shift", s.gameplay_shift);
  return s;
}

json to_json(const AwacConfig& c) {
  return {{"gamma", c.gamma},
          {"lambda", c.lambda},
          {"batch_size", c.batch_size},
          {"policy_lr", c.policy_lr},
          {"q_lr", c.q_lr},
          {"policy_weight_decay", c.policy_weight_decay},
          {"q_weight_decay", c.q_weight_decay},
          {"tau", c.tau},
          {"actor_interval", c.actor_interval},
          {"advantage_samples", c.advantage_samples},
          {"n_step", c.n_step},
          {"epsilon", c.epsilon},
          {"gradient_steps", c.gradient_steps},
          {"eval_interval", c.eval_interval},
          {"q_hidden", c.q_hidden},
          {"max_exp_arg", c.max_exp_arg},
          {"include_pretraining_data", c.include_pretraining_data}};
}

AwacConfig awac_config_from_json(const json& j) {
  AwacConfig c;
  maybe(j, "gamma", c.gamma);
  maybe(j, "lambda", c.lambda);
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "policy_lr", c.policy_lr);
  maybe(j, "q_lr", c.q_lr);
  maybe(j, "policy_weight_decay", c.policy_weight_decay);
  maybe(j, "q_weight_decay", c.q_weight_decay);
  maybe(j, "tau", c.tau);
  maybe(j, "actor_interval", c.actor_interval);
  maybe(j, "advantage_samples", c.advantage_samples);
  maybe(j, "n_step", c.n_step);
  maybe(j, "epsilon", c.epsilon);
  maybe(j, "gradient_steps", c.gradient_steps);
  maybe(j, "eval_interval", c.eval_interval);
  maybe(j, "q_hidden", c.q_hidden);
  maybe(j, "max_exp_arg", c.max_exp_arg);
  maybe(j, "include_pretraining_data", c.include_pretraining_data);
  c.validate();
  return c;
}

json to_json(const PretrainConfig& c) {
  return {{"epochs", c.epochs}, {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate}};
}

PretrainConfig pretrain_config_from_json(const json& j) {
  PretrainConfig c;
  maybe(j, "epochs", c.epochs);
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "learning_rate", c.learning_rate);
  return c;
}

void save_subject_spec(const std::string& path, const SubjectSpec& spec) {
  json j = to_json(spec);
  j["schema"] = kSubjectSchema;
  write_json(path, j);
}

SubjectSpec load_subject_spec(const std::string& path) {
  const json j = read_json(path);
  if (j.contains("schema") && j.at("schema") != kSubjectSchema) throw std::runtime_error(path + ": not a subject profile");
  return subject_spec_from_json(j);
}

void write_raw_session(const std::string& path, const std::vector<RawEmgFrame>& frames) {
  auto out = open_out(path);
  write_header(out, kRawSessionSchema, {{"sample_rate_hz", kSampleRateHz}});
  for (const auto& f : frames) out << json{{"t_ms", f.t_ms}, {"ch", f.channels}}.dump() << '\n';
}

std::vector<RawEmgFrame> read_raw_session(const std::string& path) {
  std::vector<RawEmgFrame> frames;
  for (const auto& j : read_lines(path, kRawSessionSchema)) {
    RawEmgFrame f;
    f.t_ms = j.at("t_ms").get<std::int64_t>();
    f.channels = j.at("ch").get<std::vector<double>>();
    frames.push_back(std::move(f));
  }
  return frames;
}

void write_feature_session(const std::string& path, const std::vector<FeatureSample>& samples) {
  auto out = open_out(path);
  write_header(out, kFeatureSessionSchema, {{"order", "channel-major MAV,TWL,ZC,SLPCH"}});
  for (const auto& s : samples) out << json{{"t_ms", s.t_ms}, {"features", s.features}}.dump() << '\n';
}

std::vector<FeatureSample> read_feature_session(const std::string& path) {
  std::vector<FeatureSample> out;
  for (const auto& j : read_lines(path, kFeatureSessionSchema)) {
    const auto f = j.at("features").get<std::vector<double>>();
    if (f.size() != static_cast<std::size_t>(kStateDim)) throw std::runtime_error(path + ": feature record needs 32 values");
    FeatureSample s;
    s.t_ms = j.at("t_ms").get<std::int64_t>();
    std::copy(f.begin(), f.end(), s.features.begin());
    out.push_back(s);
  }
  return out;
}

void write_episode_log(const std::string& path, const std::vector<TickRecord>& log, int repetition) {
  auto out = open_out(path);
  write_header(out, kEpisodeLogSchema, {{"repetition", repetition}, {"tick_hz", kTickHz}});
  for (const auto& r : log) {
    out << json{{"tick", r.tick},
                {"t_ms", static_cast<std::int64_t>(r.tick) * kTickMs},
                {"state", r.state},
                {"action", bits_json(r.action)},
                {"ideal", bits_json(r.ideal)},
                {"reward", r.reward},
                {"score", r.score}}
               .dump()
        << '\n';
  }
}

std::vector<TickRecord> read_episode_log(const std::string& path, int* repetition) {
  json header;
  std::vector<TickRecord> log;
  for (const auto& j : read_lines(path, kEpisodeLogSchema, &header)) {
    TickRecord r;
    r.tick = j.at("tick").get<int>();
    r.state = j.at("state").get<FeatureState>();
    r.action = bits_from_json(j.at("action"));
    r.ideal = bits_from_json(j.at("ideal"));
    r.reward = j.at("reward").get<int>();
    r.score = j.at("score").get<long>();
    if (r.reward != reward(r.action, r.ideal)) throw std::runtime_error(path + ": record violates the reward rule");
    log.push_back(r);
  }
  if (repetition) *repetition = header.value("repetition", 0);
  return log;
}

void write_buffer(const std::string& path, const ReplayBuffer& buffer) {
  auto out = open_out(path);
  write_header(out, kBufferSchema, {{"episodes", buffer.episodes().size()}});
  for (std::size_t e = 0; e < buffer.episodes().size(); ++e) {
    for (std::size_t t = 0; t < buffer.episodes()[e].transitions.size(); ++t) {
      json j = transition_json(buffer.episodes()[e].transitions[t]);
      j["episode"] = e;
      out << j.dump() << '\n';
    }
  }
}

ReplayBuffer read_buffer(const std::string& path) {
  ReplayBuffer buffer;
  Episode current;
  long current_index = -1;
  for (const auto& j : read_lines(path, kBufferSchema)) {
    const long e = j.at("episode").get<long>();
    if (e != current_index) {
      if (current_index >= 0) buffer.append_raw(std::move(current));
      if (e != current_index + 1) throw std::runtime_error(path + ": episodes out of order");
      current = Episode{};
      current_index = e;
    }
    current.transitions.push_back(transition_from_json(j));
    current.repetition = current.transitions.back().repetition;
  }
  if (current_index >= 0) buffer.append_raw(std::move(current));
  return buffer;
}

void write_dataset(const std::string& path, const LabeledDataset& data) {
  auto out = open_out(path);
  write_header(out, kDatasetSchema);
  for (const auto& r : data.records) {
    out << json{{"state", r.state},
                {"target", bits_json(r.target)},
                {"split", r.split == DataSplit::kTrain ? "train" : "val"},
                {"movement", r.movement},
                {"recording", r.recording}}
               .dump()
        << '\n';
  }
}

LabeledDataset read_dataset(const std::string& path) {
  LabeledDataset d;
  for (const auto& j : read_lines(path, kDatasetSchema)) {
    LabeledRecord r;
    r.state = j.at("state").get<FeatureState>();
    r.target = bits_from_json(j.at("target"));
    r.split = j.at("split").get<std::string>() == "train" ? DataSplit::kTrain : DataSplit::kValidation;
    r.movement = j.at("movement").get<int>();
    r.recording = j.at("recording").get<int>();
    d.records.push_back(r);
  }
  return d;
}

json movement_table() {
  json table = json::array();
  for (int i = 0; i < kNumMovements; ++i) {
    const MovementId id(i);
    table.push_back({{"id", i}, {"name", id.name()}, {"bits", bits_json(encode(id))}});
  }
  return {{"schema", kMovementTableSchema},
          {"bit_order", {"ThumbExt", "ThumbFlex", "IndexExt", "IndexFlex", "MiddleExt", "MiddleFlex", "Rest"}},
          {"movements", table}};
}

json read_json(const std::string& path) {
  auto in = open_in(path);
  return json::parse(in);
}

void write_json(const std::string& path, const json& j, int indent) {
  auto out = open_out(path);
  out << j.dump(indent) << '\n';
}

}  // namespace emgrl::io
