#include "emgrl/sigproc.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace emgrl {

std::complex<double> BiquadCoeffs::response(double freq_hz, double sample_rate_hz) const {
  const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate_hz;
  const std::complex<double> z1 = std::polar(1.0, -w);
  const std::complex<double> z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

BiquadCoeffs design_butterworth_highpass(double cutoff_hz, double sample_rate_hz) {
  if (!(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0)) {
    throw std::invalid_argument("high-pass cutoff must lie in (0, fs/2)");
  }
  // Bilinear transform with frequency pre-warping.
  const double k = std::tan(std::numbers::pi * cutoff_hz / sample_rate_hz);
  const double k2 = k * k;
  const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * k + k2);
  BiquadCoeffs c;
  c.b0 = norm;
  c.b1 = -2.0 * norm;
  c.b2 = norm;
  c.a1 = 2.0 * (k2 - 1.0) * norm;
  c.a2 = (1.0 - std::numbers::sqrt2 * k + k2) * norm;
  return c;
}

BiquadCoeffs design_notch(double center_hz, double q, double sample_rate_hz) {
  if (!(center_hz > 0.0 && center_hz < sample_rate_hz / 2.0) || !(q > 0.0)) {
    throw std::invalid_argument("notch needs center in (0, fs/2) and q > 0");
  }
  const double w0 = 2.0 * std::numbers::pi * center_hz / sample_rate_hz;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double cw = std::cos(w0);
  const double a0 = 1.0 + alpha;
  BiquadCoeffs c;
  c.b0 = 1.0 / a0;
  c.b1 = -2.0 * cw / a0;
  c.b2 = 1.0 / a0;
  c.a1 = -2.0 * cw / a0;
  c.a2 = (1.0 - alpha) / a0;
  return c;
}

FilterChain::FilterChain(const FilterConfig& config) : config_(config) {
  const BiquadCoeffs hp = design_butterworth_highpass(config.highpass_hz, config.sample_rate_hz);
  const BiquadCoeffs notch = design_notch(config.notch_hz, config.notch_q, config.sample_rate_hz);
  for (int ch = 0; ch < kChannels; ++ch) {
    highpass_[static_cast<std::size_t>(ch)] = Biquad(hp);
    notch_[static_cast<std::size_t>(ch)] = Biquad(notch);
  }
}

std::array<double, kChannels> FilterChain::process(const RawEmgFrame& frame) {
  return process(std::span<const double>(frame.channels));
}

std::array<double, kChannels> FilterChain::process(std::span<const double> samples) {
  if (samples.size() != static_cast<std::size_t>(kChannels)) {
    throw std::invalid_argument("rejected frame: expected 8 channels, got " + std::to_string(samples.size()));
  }
  std::array<double, kChannels> out{};
  for (std::size_t ch = 0; ch < out.size(); ++ch) {
    out[ch] = notch_[ch].process(highpass_[ch].process(samples[ch]));
  }
  return out;
}

void FilterChain::reset() {
  for (auto& f : highpass_) f.reset();
  for (auto& f : notch_) f.reset();
}

std::complex<double> FilterChain::response(double freq_hz) const {
  return highpass_[0].coeffs().response(freq_hz, config_.sample_rate_hz) *
         notch_[0].coeffs().response(freq_hz, config_.sample_rate_hz);
}

std::optional<Window> Windower::push(const FilteredSample& sample) {
  if (!origin_ms_) {
    origin_ms_ = sample.t_ms;
    next_start_ms_ = 0;
  }
  buffer_.push_back(sample.channels);
  if (buffer_.size() > static_cast<std::size_t>(kWindowSamples)) buffer_.pop_front();
  ++received_;
  if (received_ < kWindowSamples || (received_ - kWindowSamples) % kWindowStepSamples != 0) {
    return std::nullopt;
  }
  Window w;
  w.start_ms = *origin_ms_ + next_start_ms_;
  w.samples.resize(static_cast<std::size_t>(kChannels) * kWindowSamples);
  for (std::size_t t = 0; t < buffer_.size(); ++t) {
    for (std::size_t ch = 0; ch < static_cast<std::size_t>(kChannels); ++ch) {
      w.samples[ch * kWindowSamples + t] = buffer_[t][ch];
    }
  }
  next_start_ms_ += kWindowStepSamples;
  return w;
}

void Windower::reset() {
  buffer_.clear();
  origin_ms_.reset();
  next_start_ms_ = 0;
  received_ = 0;
}

std::vector<Window> slide_windows(std::span<const FilteredSample> stream) {
  Windower windower;
  std::vector<Window> out;
  for (const auto& s : stream) {
    if (auto w = windower.push(s)) out.push_back(std::move(*w));
  }
  return out;
}

std::int64_t window_count(std::int64_t duration_ms) {
  if (duration_ms < kWindowSamples) return 0;
  return (duration_ms - kWindowSamples) / kWindowStepSamples + 1;
}

ChannelFeatures channel_features(std::span<const double> x, double deadband) {
  if (x.size() < 2) throw std::invalid_argument("feature window needs at least 2 samples");
  ChannelFeatures f;
  double abs_sum = 0.0;
  for (double v : x) abs_sum += std::abs(v);
  f.mav = abs_sum / static_cast<double>(x.size());

  for (std::size_t t = 0; t + 1 < x.size(); ++t) {
    const double step = x[t + 1] - x[t];
    f.twl += std::abs(step);
    if (x[t] * x[t + 1] < 0.0 && std::abs(step) > deadband) f.zc += 1.0;
  }
  for (std::size_t t = 1; t + 1 < x.size(); ++t) {
    const double left = x[t] - x[t - 1];
    const double right = x[t] - x[t + 1];
    if (left * right > 0.0 && std::abs(left) > deadband && std::abs(right) > deadband) f.slpch += 1.0;
  }
  return f;
}

FeatureState hudgins_features(const Window& window, double deadband) {
  if (window.samples.size() != static_cast<std::size_t>(kChannels) * kWindowSamples) {
    throw std::invalid_argument("window must hold 8 x 200 samples");
  }
  FeatureState s{};
  for (int ch = 0; ch < kChannels; ++ch) {
    const ChannelFeatures f = channel_features(window.channel(ch), deadband);
    s[static_cast<std::size_t>(feature_index(ch, Feature::kMav))] = f.mav;
    s[static_cast<std::size_t>(feature_index(ch, Feature::kTwl))] = f.twl;
    s[static_cast<std::size_t>(feature_index(ch, Feature::kZc))] = f.zc;
    s[static_cast<std::size_t>(feature_index(ch, Feature::kSlpch))] = f.slpch;
  }
  return s;
}

FeatureExtractor::FeatureExtractor(const FilterConfig& filters, double deadband)
    : chain_(filters), deadband_(deadband) {}

std::optional<FeatureSample> FeatureExtractor::push(const RawEmgFrame& frame) {
  FilteredSample fs{frame.t_ms, chain_.process(frame)};
  auto w = windower_.push(fs);
  if (!w) return std::nullopt;
  return FeatureSample{w->start_ms, hudgins_features(*w, deadband_)};
}

void FeatureExtractor::reset() {
  chain_.reset();
  windower_.reset();
}

std::vector<FeatureSample> extract_features(std::span<const RawEmgFrame> frames, const FilterConfig& filters,
                                            double deadband) {
  FeatureExtractor extractor(filters, deadband);
  std::vector<FeatureSample> out;
  for (const auto& f : frames) {
    if (auto s = extractor.push(f)) out.push_back(*s);
  }
  return out;
}

}  // namespace emgrl
