#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "emgrl/kernels.hpp"
#include "emgrl/movements.hpp"
#include "emgrl/sigproc.hpp"

namespace emgrl::metrics {

// Fraction of steps whose full 7-bit prediction equals the target.
double emr(std::span<const MovementVector> preds, std::span<const MovementVector> targets);

enum class F1Basis {
  kBits,       // the 7 label bits (multi-label convention)
  kMovements,  // 13 movement ids; non-canonical predictions count as misses
};

struct F1Result {
  double macro = 0.0;
  std::vector<double> per_class;  // NaN for classes excluded from the mean
  std::vector<bool> included;     // false when absent from both preds and targets
  int included_classes = 0;
};

// Per-class F1 = TP / (TP + 0.5 (FP + FN)); classes with no positives in
// either sequence are excluded from the unweighted mean.
F1Result f1_macro(std::span<const MovementVector> preds, std::span<const MovementVector> targets,
                  F1Basis basis = F1Basis::kBits);

int action_changes(std::span<const MovementVector> sequence);

struct SnrResult {
  std::array<double, kNumMovements> per_movement_db{};  // NaN where undefined; index 0 unused
  std::array<int, kNumMovements> best_channel{};        // -1 where undefined
  double subject_db = 0.0;
};

// max over channels of 10 log10(MAV_m / MAV_rest). Throws when the rest MAV
// is zero on every channel.
double snr_db(std::span<const double> mav_movement, std::span<const double> mav_rest, int* best_channel = nullptr);

// Groups states by executed movement and uses per-channel mean MAV.
SnrResult snr(std::span<const FeatureState> states, std::span<const MovementId> labels);

enum class MiMode { kPerFeatureMean, kJoint };

struct MiOptions {
  int k = 3;
  MiMode mode = MiMode::kPerFeatureMean;
  // Columns are scaled to unit variance and jittered by 1e-10 * max(1, mean|x|)
  // before estimation; the jitter is drawn from this seed.
  std::uint64_t jitter_seed = 0;
  bool parallel = true;
};

// KSG-style estimate between continuous features (one sample per row) and
// discrete labels, in nats, clamped at 0. A single label yields 0.
double mutual_information(const kernels::SampleMatrix& x, std::span<const int> labels, const MiOptions& opts = {});
double mutual_information(std::span<const FeatureState> states, std::span<const int> labels,
                          const MiOptions& opts = {});

// Cut points from a base distribution: median with further cuts every third
// of a standard deviation out to one standard deviation on both sides, plus
// edge bins below min(P) and above max(P).
struct BinningScheme {
  double min = 0.0;
  double max = 0.0;
  std::vector<double> cuts;  // strictly increasing, all inside (min, max)

  static BinningScheme from_base(std::span<const double> p);
  int core_bins() const { return static_cast<int>(cuts.size()) + 1; }
  // -1 below min, core_bins() above max, otherwise the core bin.
  int bin(double x) const;
};

inline constexpr double kPsiFloor = 1e-4;

// PSI(P, Q) = sum_j (P_j - Q_j) ln(P_j / Q_j) with proportions floored at
// kPsiFloor; edge bins empty in both samples are dropped.
double psi(std::span<const double> p, std::span<const double> q);

struct PsiResult {
  std::vector<double> per_feature;
  double mean = 0.0;
};

PsiResult psi(const kernels::SampleMatrix& p, const kernels::SampleMatrix& q);
PsiResult psi(std::span<const FeatureState> p, std::span<const FeatureState> q);

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W-)
  double w_plus = 0.0;
  double p_value = 1.0;
  bool significant = false;
  int n = 0;  // non-zero differences used
  bool exact = false;
};

inline constexpr int kWilcoxonExactMaxN = 25;

// Two-sided signed-rank test on y - x. Zero differences are dropped; exact
// null distribution up to kWilcoxonExactMaxN, normal approximation with tie
// and continuity correction above. Throws when every difference is zero.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y, double alpha = 0.05);

// z-scores `means` using the mean and population standard deviation of the
// first `pretrain_count` entries.
std::vector<double> normalize_mav_trace(std::span<const double> means, std::size_t pretrain_count);

// Mean MAV over channels for each state.
std::vector<double> mean_mav(std::span<const FeatureState> states);

kernels::SampleMatrix to_matrix(std::span<const FeatureState> states);

}  // namespace emgrl::metrics
