#include "emgrl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "emgrl/rng.hpp"

namespace emgrl::metrics {
namespace {

void check_paired(std::size_t a, std::size_t b) {
  if (a != b) throw std::invalid_argument("prediction/target length mismatch");
  if (a == 0) throw std::invalid_argument("empty prediction sequence");
}

double quiet_nan() { return std::numeric_limits<double>::quiet_NaN(); }

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_std(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double emr(std::span<const MovementVector> preds, std::span<const MovementVector> targets) {
  check_paired(preds.size(), targets.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == targets[i] ? 1U : 0U;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

F1Result f1_macro(std::span<const MovementVector> preds, std::span<const MovementVector> targets, F1Basis basis) {
  check_paired(preds.size(), targets.size());
  const int classes = basis == F1Basis::kBits ? kActionBits : kNumMovements;
  std::vector<long> tp(static_cast<std::size_t>(classes), 0);
  std::vector<long> fp(tp), fn(tp);

  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (int c = 0; c < classes; ++c) {
      bool p = false;
      bool t = false;
      if (basis == F1Basis::kBits) {
        p = preds[i][c];
        t = targets[i][c];
      } else {
        const auto pd = decode(preds[i]);
        const auto td = decode(targets[i]);
        p = pd.id && pd.id->index() == c;
        t = td.id && td.id->index() == c;
      }
      const auto uc = static_cast<std::size_t>(c);
      if (p && t) ++tp[uc];
      if (p && !t) ++fp[uc];
      if (!p && t) ++fn[uc];
    }
  }

  F1Result out;
  out.per_class.assign(static_cast<std::size_t>(classes), quiet_nan());
  out.included.assign(static_cast<std::size_t>(classes), false);
  double sum = 0.0;
  for (std::size_t c = 0; c < static_cast<std::size_t>(classes); ++c) {
    const double denom = static_cast<double>(tp[c]) + 0.5 * static_cast<double>(fp[c] + fn[c]);
    if (denom == 0.0) continue;
    out.per_class[c] = static_cast<double>(tp[c]) / denom;
    out.included[c] = true;
    ++out.included_classes;
    sum += out.per_class[c];
  }
  out.macro = out.included_classes > 0 ? sum / out.included_classes : 0.0;
  return out;
}

int action_changes(std::span<const MovementVector> sequence) {
  int changes = 0;
  for (std::size_t t = 1; t < sequence.size(); ++t) changes += sequence[t] != sequence[t - 1] ? 1 : 0;
  return changes;
}

double snr_db(std::span<const double> mav_movement, std::span<const double> mav_rest, int* best_channel) {
  if (mav_movement.size() != mav_rest.size() || mav_rest.empty()) {
    throw std::invalid_argument("snr needs matching per-channel MAV vectors");
  }
  double best = -std::numeric_limits<double>::infinity();
  int best_ch = -1;
  for (std::size_t l = 0; l < mav_rest.size(); ++l) {
    if (!(mav_rest[l] > 0.0) || !(mav_movement[l] > 0.0)) continue;  // undefined channel
    const double db = 10.0 * std::log10(mav_movement[l] / mav_rest[l]);
    if (db > best) {
      best = db;
      best_ch = static_cast<int>(l);
    }
  }
  if (best_ch < 0) throw std::domain_error("snr undefined: zero rest MAV on every channel");
  if (best_channel) *best_channel = best_ch;
  return best;
}

SnrResult snr(std::span<const FeatureState> states, std::span<const MovementId> labels) {
  if (states.size() != labels.size()) throw std::invalid_argument("state/label count mismatch");
  std::array<std::array<double, kChannels>, kNumMovements> sums{};
  std::array<std::size_t, kNumMovements> counts{};
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto m = static_cast<std::size_t>(labels[i].index());
    ++counts[m];
    for (int ch = 0; ch < kChannels; ++ch) {
      sums[m][static_cast<std::size_t>(ch)] += states[i][static_cast<std::size_t>(feature_index(ch, Feature::kMav))];
    }
  }
  if (counts[0] == 0) throw std::invalid_argument("snr needs rest samples");
  std::array<std::array<double, kChannels>, kNumMovements> means{};
  for (std::size_t m = 0; m < means.size(); ++m) {
    for (std::size_t ch = 0; ch < static_cast<std::size_t>(kChannels); ++ch) {
      means[m][ch] = counts[m] > 0 ? sums[m][ch] / static_cast<double>(counts[m]) : 0.0;
    }
  }
  SnrResult out;
  out.per_movement_db.fill(quiet_nan());
  out.best_channel.fill(-1);
  out.subject_db = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 1; m < means.size(); ++m) {
    if (counts[m] == 0) continue;
    int best = -1;
    try {
      out.per_movement_db[m] = snr_db(means[m], means[0], &best);
    } catch (const std::domain_error&) {
      continue;
    }
    out.best_channel[m] = best;
    out.subject_db = std::max(out.subject_db, out.per_movement_db[m]);
  }
  if (!std::isfinite(out.subject_db)) throw std::domain_error("snr undefined for every movement");
  return out;
}

kernels::SampleMatrix to_matrix(std::span<const FeatureState> states) {
  kernels::SampleMatrix m(static_cast<Eigen::Index>(states.size()), kStateDim);
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (int j = 0; j < kStateDim; ++j) m(static_cast<Eigen::Index>(i), j) = states[i][static_cast<std::size_t>(j)];
  }
  return m;
}

double mutual_information(const kernels::SampleMatrix& x_in, std::span<const int> labels, const MiOptions& opts) {
  if (static_cast<std::size_t>(x_in.rows()) != labels.size()) {
    throw std::invalid_argument("feature/label count mismatch");
  }
  if (std::set<int>(labels.begin(), labels.end()).size() < 2) return 0.0;

  kernels::SampleMatrix x = x_in;
  Rng rng = make_rng(opts.jitter_seed, "mi-jitter");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const double var = (x.col(c).array() - mean).square().sum() / static_cast<double>(std::max<Eigen::Index>(x.rows() - 1, 1));
    if (var > 0.0) x.col(c) /= std::sqrt(var);
    const double scale = 1e-10 * std::max(1.0, x.col(c).cwiseAbs().mean());
    for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, c) += scale * normal(rng);
  }

  if (opts.mode == MiMode::kJoint) {
    const auto counts = opts.parallel ? kernels::knn_counts_omp(x, labels, opts.k)
                                      : kernels::knn_counts_serial(x, labels, opts.k);
    return kernels::ksg_from_counts(counts);
  }
  const auto per = opts.parallel ? kernels::per_feature_mi_omp(x, labels, opts.k)
                                 : kernels::per_feature_mi_serial(x, labels, opts.k);
  return std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
}

double mutual_information(std::span<const FeatureState> states, std::span<const int> labels, const MiOptions& opts) {
  return mutual_information(to_matrix(states), labels, opts);
}

BinningScheme BinningScheme::from_base(std::span<const double> p) {
  if (p.empty()) throw std::invalid_argument("binning needs a non-empty base sample");
  BinningScheme s;
  const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
  s.min = *lo;
  s.max = *hi;
  const double med = median_of(std::vector<double>(p.begin(), p.end()));
  const double sd = population_std(p, mean_of(p));
  for (int j = -3; j <= 3; ++j) {
    const double c = med + j * sd / 3.0;
    if (c > s.min && c < s.max && (s.cuts.empty() || c > s.cuts.back())) s.cuts.push_back(c);
  }
  return s;
}

int BinningScheme::bin(double x) const {
  if (x < min) return -1;
  if (x > max) return core_bins();
  return static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), x) - cuts.begin());
}

double psi(std::span<const double> p, std::span<const double> q) {
  if (p.empty() || q.empty()) throw std::invalid_argument("psi needs non-empty samples");
  const BinningScheme scheme = BinningScheme::from_base(p);
  const int bins = scheme.core_bins() + 2;  // slot 0 = below min, last = above max
  std::vector<double> pc(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> qc(pc);
  for (double v : p) pc[static_cast<std::size_t>(scheme.bin(v) + 1)] += 1.0;
  for (double v : q) qc[static_cast<std::size_t>(scheme.bin(v) + 1)] += 1.0;

  double total = 0.0;
  for (int b = 0; b < bins; ++b) {
    const auto ub = static_cast<std::size_t>(b);
    const bool edge = b == 0 || b == bins - 1;
    if (edge && pc[ub] == 0.0 && qc[ub] == 0.0) continue;
    const double pp = std::max(pc[ub] / static_cast<double>(p.size()), kPsiFloor);
    const double qq = std::max(qc[ub] / static_cast<double>(q.size()), kPsiFloor);
    total += (pp - qq) * std::log(pp / qq);
  }
  return total;
}

PsiResult psi(const kernels::SampleMatrix& p, const kernels::SampleMatrix& q) {
  if (p.cols() != q.cols()) throw std::invalid_argument("psi feature count mismatch");
  PsiResult out;
  out.per_feature.resize(static_cast<std::size_t>(p.cols()));
  const int cols = static_cast<int>(p.cols());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < cols; ++c) {
    const Eigen::VectorXd pc = p.col(c);
    const Eigen::VectorXd qc = q.col(c);
    out.per_feature[static_cast<std::size_t>(c)] =
        psi(std::span<const double>(pc.data(), pc.size()), std::span<const double>(qc.data(), qc.size()));
  }
  out.mean = mean_of(out.per_feature);
  return out;
}

PsiResult psi(std::span<const FeatureState> p, std::span<const FeatureState> q) {
  return psi(to_matrix(p), to_matrix(q));
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y, double alpha) {
  if (x.size() != y.size()) throw std::invalid_argument("wilcoxon needs paired samples of equal length");
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = y[i] - x[i];
    if (diff != 0.0) d.push_back(diff);
  }
  if (d.empty()) throw std::invalid_argument("wilcoxon: all paired differences are zero");

  const int n = static_cast<int>(d.size());
  std::vector<int> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return std::abs(d[static_cast<std::size_t>(a)]) < std::abs(d[static_cast<std::size_t>(b)]); });

  // Doubled average ranks keep tied ranks integral.
  std::vector<int> rank2(d.size());
  double tie_term = 0.0;
  for (int i = 0; i < n;) {
    int j = i;
    while (j + 1 < n && std::abs(d[static_cast<std::size_t>(order[static_cast<std::size_t>(j + 1)])]) ==
                            std::abs(d[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])])) {
      ++j;
    }
    for (int t = i; t <= j; ++t) rank2[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])] = i + j + 2;
    const double ties = j - i + 1;
    tie_term += ties * ties * ties - ties;
    i = j + 1;
  }

  long w_plus2 = 0;
  long total2 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    total2 += rank2[i];
    if (d[i] > 0.0) w_plus2 += rank2[i];
  }

  WilcoxonResult out;
  out.n = n;
  out.w_plus = w_plus2 / 2.0;
  out.statistic = std::min(w_plus2, total2 - w_plus2) / 2.0;

  if (n <= kWilcoxonExactMaxN) {
    out.exact = true;
    std::vector<double> ways(static_cast<std::size_t>(total2 + 1), 0.0);
    ways[0] = 1.0;
    long reach = 0;
    for (int r : rank2) {
      for (long s = reach; s >= 0; --s) {
        if (ways[static_cast<std::size_t>(s)] != 0.0) ways[static_cast<std::size_t>(s + r)] += ways[static_cast<std::size_t>(s)];
      }
      reach += r;
    }
    const double all = std::ldexp(1.0, n);
    double le = 0.0;
    double ge = 0.0;
    for (long s = 0; s <= total2; ++s) {
      if (s <= w_plus2) le += ways[static_cast<std::size_t>(s)];
      if (s >= w_plus2) ge += ways[static_cast<std::size_t>(s)];
    }
    out.p_value = std::min(1.0, 2.0 * std::min(le, ge) / all);
  } else {
    const double nn = n;
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double dev = std::max(0.0, std::abs(out.w_plus - mean) - 0.5);
    out.p_value = var > 0.0 ? std::min(1.0, std::erfc(dev / std::sqrt(var) / std::sqrt(2.0))) : 1.0;
  }
  out.significant = out.p_value < alpha;
  return out;
}

std::vector<double> normalize_mav_trace(std::span<const double> means, std::size_t pretrain_count) {
  if (pretrain_count == 0 || pretrain_count > means.size()) {
    throw std::invalid_argument("pretraining segment must be a non-empty prefix of the trace");
  }
  const auto base = means.first(pretrain_count);
  const double mu = mean_of(base);
  const double sd = population_std(base, mu);
  if (!(sd > 0.0)) throw std::domain_error("pretraining MAV segment has zero variance");
  std::vector<double> out(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) out[i] = (means[i] - mu) / sd;
  return out;
}

std::vector<double> mean_mav(std::span<const FeatureState> states) {
  std::vector<double> out;
  out.reserve(states.size());
  for (const auto& s : states) {
    double sum = 0.0;
    for (int ch = 0; ch < kChannels; ++ch) sum += s[static_cast<std::size_t>(feature_index(ch, Feature::kMav))];
    out.push_back(sum / kChannels);
  }
  return out;
}

}  // namespace emgrl::metrics
