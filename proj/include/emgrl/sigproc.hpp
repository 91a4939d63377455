#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

namespace emgrl {

inline constexpr int kChannels = 8;
inline constexpr double kSampleRateHz = 1000.0;
inline constexpr int kWindowSamples = 200;
inline constexpr int kWindowStepSamples = 50;
inline constexpr int kFeaturesPerChannel = 4;
inline constexpr int kStateDim = kChannels * kFeaturesPerChannel;

// Channel-major: [ch0: MAV, TWL, ZC, SLPCH, ch1: ..., ch7: ...].
using FeatureState = std::array<double, kStateDim>;

enum class Feature : int { kMav = 0, kTwl = 1, kZc = 2, kSlpch = 3 };

constexpr int feature_index(int channel, Feature f) {
  return channel * kFeaturesPerChannel + static_cast<int>(f);
}

struct RawEmgFrame {
  std::int64_t t_ms = 0;
  std::vector<double> channels;
};

// y[n] = b0 x[n] + b1 x[n-1] + b2 x[n-2] - a1 y[n-1] - a2 y[n-2]
struct BiquadCoeffs {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0, a1 = 0.0, a2 = 0.0;

  std::complex<double> response(double freq_hz, double sample_rate_hz) const;
};

BiquadCoeffs design_butterworth_highpass(double cutoff_hz, double sample_rate_hz);
BiquadCoeffs design_notch(double center_hz, double q, double sample_rate_hz);

// Transposed direct form II.
class Biquad {
 public:
  Biquad() = default;
  explicit Biquad(const BiquadCoeffs& c) : c_(c) {}

  double process(double x) {
    const double y = c_.b0 * x + z1_;
    z1_ = c_.b1 * x - c_.a1 * y + z2_;
    z2_ = c_.b2 * x - c_.a2 * y;
    return y;
  }
  void reset() { z1_ = z2_ = 0.0; }
  const BiquadCoeffs& coeffs() const { return c_; }

 private:
  BiquadCoeffs c_;
  double z1_ = 0.0;
  double z2_ = 0.0;
};

struct FilterConfig {
  double sample_rate_hz = kSampleRateHz;
  double highpass_hz = 20.0;
  double notch_hz = 50.0;
  double notch_q = 30.0;
};

// Per-channel high-pass -> notch cascade. Causal; state persists until reset().
class FilterChain {
 public:
  explicit FilterChain(const FilterConfig& config = {});

  // Throws std::invalid_argument when the frame does not carry 8 channels.
  std::array<double, kChannels> process(const RawEmgFrame& frame);
  std::array<double, kChannels> process(std::span<const double> samples);
  void reset();

  const FilterConfig& config() const { return config_; }
  BiquadCoeffs highpass_coeffs() const { return highpass_[0].coeffs(); }
  BiquadCoeffs notch_coeffs() const { return notch_[0].coeffs(); }
  // Cascade frequency response; identical for every channel.
  std::complex<double> response(double freq_hz) const;

 private:
  FilterConfig config_;
  std::array<Biquad, kChannels> highpass_;
  std::array<Biquad, kChannels> notch_;
};

struct FilteredSample {
  std::int64_t t_ms = 0;
  std::array<double, kChannels> channels{};
};

struct Window {
  std::int64_t start_ms = 0;
  // Channel-major, kWindowSamples per channel.
  std::vector<double> samples;

  std::span<const double> channel(int ch) const {
    return std::span<const double>(samples).subspan(static_cast<std::size_t>(ch) * kWindowSamples,
                                                    kWindowSamples);
  }
};

// Emits window i covering [origin + 50 i, origin + 50 i + 200) ms, where
// origin is the timestamp of the first sample pushed.
class Windower {
 public:
  std::optional<Window> push(const FilteredSample& sample);
  void reset();

 private:
  std::deque<std::array<double, kChannels>> buffer_;
  std::optional<std::int64_t> origin_ms_;
  std::int64_t next_start_ms_ = 0;
  std::int64_t received_ = 0;
};

std::vector<Window> slide_windows(std::span<const FilteredSample> stream);

// Number of windows a stream of `duration_ms` yields.
std::int64_t window_count(std::int64_t duration_ms);

struct ChannelFeatures {
  double mav = 0.0;
  double twl = 0.0;
  double zc = 0.0;
  double slpch = 0.0;
};

// Throws std::invalid_argument for fewer than 2 samples. `deadband` is the
// minimum step magnitude that counts for ZC and SLPCH.
ChannelFeatures channel_features(std::span<const double> x, double deadband = 0.0);
FeatureState hudgins_features(const Window& window, double deadband = 0.0);

struct FeatureSample {
  std::int64_t t_ms = 0;
  FeatureState features{};
};

// Filter -> window -> features for a raw frame stream.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const FilterConfig& filters = {}, double deadband = 0.0);

  std::optional<FeatureSample> push(const RawEmgFrame& frame);
  void reset();

 private:
  FilterChain chain_;
  Windower windower_;
  double deadband_;
};

std::vector<FeatureSample> extract_features(std::span<const RawEmgFrame> frames,
                                            const FilterConfig& filters = {}, double deadband = 0.0);

}  // namespace emgrl
