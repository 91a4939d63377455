#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "emgrl/movements.hpp"
#include "emgrl/rng.hpp"
#include "emgrl/sigproc.hpp"

namespace emgrl {

using ChannelActivation = std::array<double, kChannels>;

// Knobs a synthetic subject is built from.
struct SubjectSpec {
  std::uint64_t seed = 1;
  double noise_scale = 0.3;      // sigma, in units of a full-activation feature swing
  double error_rate = 0.05;      // chance of executing a random wrong movement
  double drift_rate = 0.0;       // per-repetition prototype shift magnitude
  double adaptation_rate = 0.0;  // per-repetition shrink of sigma and error rate
  // Effort during the static recording session relative to gameplay;
  // scales each prototype's deviation from rest.
  double pretrain_contraction = 0.6;
  // Fixed per-movement displacement between static recordings and dynamic
  // gameplay, same units as drift.
  double gameplay_shift = 0.0;
};

struct SubjectProfile {
  SubjectSpec spec;
  std::array<ChannelActivation, kNumMovements> activations{};
  std::array<FeatureState, kNumMovements> prototypes{};  // gameplay means
  std::array<FeatureState, kNumMovements> pretrain_prototypes{};
  FeatureState noise_units{};  // per-coordinate scale multiplied by sigma
  double noise_scale = 0.0;
  double error_rate = 0.0;
  int repetition = 0;  // how many evolve() steps have been applied
};

// Builds prototypes from a seeded channel-activation matrix: every DOF
// direction excites 2-3 of the 8 channels and combinations superpose.
SubjectProfile make_profile(const SubjectSpec& spec);

// Feature-space prototype of a channel activation pattern.
FeatureState prototype_from_activation(const ChannelActivation& activation, std::span<const double> twl_ratio);

enum class SessionKind { kGameplay, kPretraining };

// s = mu + sigma * N(0, I) scaled per coordinate; counts are rounded and all
// features clamped to their valid range.
FeatureState emit_features(const SubjectProfile& profile, MovementId executed, Rng& rng,
                           SessionKind kind = SessionKind::kGameplay);

struct IntentionEvent {
  MovementId intended = MovementId::rest();
  MovementId executed = MovementId::rest();
  int tick = 0;
};

// With probability error_rate the executed movement is a uniformly drawn
// different one.
IntentionEvent execute_intention(const SubjectProfile& profile, MovementId intended, Rng& rng, int tick = 0);

// Applies one repetition of drift (decaying as 1 / repetition) and
// adaptation. Throws for repetition < 1.
SubjectProfile evolve(const SubjectProfile& profile, int repetition);
// evolve() applied for repetitions 1..k in order.
SubjectProfile profile_at_repetition(const SubjectProfile& base, int k);

// 8-channel 1 kHz band-limited noise whose per-channel amplitude follows the
// activation pattern. Throws for durations under one window.
std::vector<RawEmgFrame> emit_raw(const ChannelActivation& activation, std::int64_t duration_ms, Rng& rng,
                                  std::int64_t start_ms = 0);
std::vector<RawEmgFrame> emit_raw(const SubjectProfile& profile, MovementId executed, std::int64_t duration_ms, Rng& rng,
                                  std::int64_t start_ms = 0);

// Keyboard/DOF tokens -> movement. Tokens are either DOF names
// ("thumb_ext", "index_flex", ...) or the default keys q/a (thumb), w/s
// (index), e/d (middle), upper key = extension. Ext+flex on one DOF cancels;
// unknown tokens are ignored; unmapped combinations become Rest.
MovementId chord_to_movement(std::span<const std::string> keys);

// Live-mode adapter: a human's chord becomes an intended movement, which the
// synthetic subject then executes and encodes as features.
class HumanAdapter {
 public:
  HumanAdapter(SubjectProfile profile, std::uint64_t seed);
  struct Output {
    IntentionEvent event;
    FeatureState features{};
  };
  Output on_chord(std::span<const std::string> keys, int tick);
  const SubjectProfile& profile() const { return profile_; }

 private:
  SubjectProfile profile_;
  Rng rng_;
};

}  // namespace emgrl
