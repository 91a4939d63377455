#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emgrl/movements.hpp"
#include "emgrl/sigproc.hpp"

namespace emgrl {

inline constexpr int kTickHz = 20;
inline constexpr int kTickMs = 1000 / kTickHz;
inline constexpr int kEpisodeSeconds = 137;
inline constexpr int kEpisodeTicks = kEpisodeSeconds * kTickHz;  // 2740
inline constexpr int kNoteSeconds = 60;
inline constexpr int kNoteTicks = kNoteSeconds * kTickHz;  // 1200
inline constexpr int kMinReturn = -kEpisodeTicks;
inline constexpr int kMaxReturn = kNoteTicks;
inline constexpr std::array<int, 4> kNoteDurationTicks{10, 20, 30, 40};  // 0.5 .. 2.0 s
inline constexpr int kMinGapTicks = 5;                                   // 0.25 s

struct Note {
  MovementId movement = MovementId::rest();
  int start_tick = 0;
  int duration_ticks = 0;

  double start_s() const { return start_tick / static_cast<double>(kTickHz); }
  double duration_s() const { return duration_ticks / static_cast<double>(kTickHz); }
  int end_tick() const { return start_tick + duration_ticks; }
};

struct NoteChart {
  std::uint64_t seed = 0;
  std::vector<Note> notes;  // sorted by start, non-overlapping
  std::vector<MovementVector> ideal;  // one entry per tick

  int ticks() const { return static_cast<int>(ideal.size()); }
  double note_seconds() const;
};

// One note per (movement m1..m12, duration) pair in seeded shuffled order,
// separated by rest gaps of at least kMinGapTicks (including before the first
// and after the last note) that fill the episode to exactly 2740 ticks.
NoteChart build_chart(std::uint64_t seed);
// Rebuilds the tick table from notes; throws on overlap or overflow.
NoteChart chart_from_notes(std::uint64_t seed, std::vector<Note> notes);

// Half-open note intervals; throws std::out_of_range outside [0, ticks).
MovementVector ideal_action(const NoteChart& chart, int tick);

// 1 for a correct non-rest prediction, 0 for a correct rest, -1 otherwise.
int reward(MovementVector action, MovementVector ideal);

// (G0 + 2740) / 3940; throws std::out_of_range outside [-2740, 1200].
double normalized_return(long g0);

struct TickRecord {
  int tick = 0;
  FeatureState state{};
  MovementVector action;
  MovementVector ideal;
  int reward = 0;
  long score = 0;
};

struct StepResult {
  int reward = 0;
  long display_score = 0;
  int tick = 0;  // the tick that was just played
};

// 20 Hz episode state machine. The display score accumulates positive
// rewards only, so it never decreases.
class GameSession {
 public:
  explicit GameSession(const NoteChart& chart);

  MovementVector current_ideal() const;
  // Throws std::logic_error after the last tick.
  StepResult step(const FeatureState& state, MovementVector action);

  bool finished() const { return tick_ >= chart_->ticks(); }
  int tick() const { return tick_; }
  long episode_return() const { return return_; }
  long display_score() const { return score_; }
  const std::vector<TickRecord>& log() const { return log_; }
  std::vector<TickRecord> take_log() { return std::move(log_); }

 private:
  const NoteChart* chart_;
  int tick_ = 0;
  long return_ = 0;
  long score_ = 0;
  std::vector<TickRecord> log_;
};

void save_chart(const std::string& path, const NoteChart& chart);
NoteChart load_chart(const std::string& path);

}  // namespace emgrl
