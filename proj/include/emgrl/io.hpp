#pragma once

// Persisted formats. JSON-lines files start with a {"schema": ...} header
// line; whole-document JSON files carry a "schema" member.

#include <string>
#include <vector>

#include <json.hpp>

#include "emgrl/awac.hpp"
#include "emgrl/game.hpp"
#include "emgrl/policy.hpp"
#include "emgrl/sigproc.hpp"
#include "emgrl/subject.hpp"

namespace emgrl::io {

inline constexpr const char* kRawSessionSchema = "emgrl.raw-session.v1";
inline constexpr const char* kFeatureSessionSchema = "emgrl.feature-session.v1";
inline constexpr const char* kEpisodeLogSchema = "emgrl.episode-log.v1";
inline constexpr const char* kBufferSchema = "emgrl.buffer.v1";
inline constexpr const char* kDatasetSchema = "emgrl.labeled-dataset.v1";
inline constexpr const char* kSubjectSchema = "emgrl.subject.v1";
inline constexpr const char* kMovementTableSchema = "emgrl.movements.v1";

nlohmann::json bits_json(MovementVector v);
MovementVector bits_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SubjectSpec& s);
SubjectSpec subject_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AwacConfig& c);
AwacConfig awac_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PretrainConfig& c);
PretrainConfig pretrain_config_from_json(const nlohmann::json& j);

void save_subject_spec(const std::string& path, const SubjectSpec& spec);
SubjectSpec load_subject_spec(const std::string& path);

void write_raw_session(const std::string& path, const std::vector<RawEmgFrame>& frames);
std::vector<RawEmgFrame> read_raw_session(const std::string& path);

void write_feature_session(const std::string& path, const std::vector<FeatureSample>& samples);
std::vector<FeatureSample> read_feature_session(const std::string& path);

void write_episode_log(const std::string& path, const std::vector<TickRecord>& log, int repetition);
std::vector<TickRecord> read_episode_log(const std::string& path, int* repetition = nullptr);

void write_buffer(const std::string& path, const ReplayBuffer& buffer);
ReplayBuffer read_buffer(const std::string& path);

void write_dataset(const std::string& path, const LabeledDataset& data);
LabeledDataset read_dataset(const std::string& path);

nlohmann::json movement_table();

nlohmann::json read_json(const std::string& path);
void write_json(const std::string& path, const nlohmann::json& j, int indent = 2);

}  // namespace emgrl::io
