#include "emgrl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include <omp.h>

namespace emgrl::kernels {
namespace {

double digamma(double x) {
  // Recurrence up to x >= 6, then the asymptotic series.
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
  return result;
}

struct LabelGroups {
  std::vector<std::vector<int>> members;
  std::vector<int> group_of;
};

LabelGroups group_labels(std::span<const int> labels) {
  std::map<int, int> index;
  LabelGroups g;
  g.group_of.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = index.emplace(labels[i], static_cast<int>(g.members.size()));
    if (inserted) g.members.emplace_back();
    g.members[static_cast<std::size_t>(it->second)].push_back(static_cast<int>(i));
    g.group_of[i] = it->second;
  }
  return g;
}

double chebyshev(const SampleMatrix& x, int i, int j) {
  return (x.row(i) - x.row(j)).cwiseAbs().maxCoeff();
}

void fill_sample(const SampleMatrix& x, const LabelGroups& g, int k, int i, NeighbourCounts& out) {
  const auto& same = g.members[static_cast<std::size_t>(g.group_of[static_cast<std::size_t>(i)])];
  const int n_label = static_cast<int>(same.size());
  const auto ui = static_cast<std::size_t>(i);
  out.label_n[ui] = n_label;
  if (n_label <= 1) {
    out.k_used[ui] = 0;
    out.within[ui] = 0;
    return;
  }
  const int kk = std::min(k, n_label - 1);
  std::vector<double> d;
  d.reserve(same.size());
  for (int j : same) {
    if (j != i) d.push_back(chebyshev(x, i, j));
  }
  std::nth_element(d.begin(), d.begin() + (kk - 1), d.end());
  const double radius = d[static_cast<std::size_t>(kk - 1)];
  int count = 0;
  for (Eigen::Index j = 0; j < x.rows(); ++j) {
    if (chebyshev(x, i, static_cast<int>(j)) < radius) ++count;
  }
  out.k_used[ui] = kk;
  out.within[ui] = count;
}

NeighbourCounts make_counts(std::size_t n) {
  NeighbourCounts c;
  c.k_used.assign(n, 0);
  c.label_n.assign(n, 0);
  c.within.assign(n, 0);
  return c;
}

void check_inputs(Eigen::Index rows, std::size_t labels, int k) {
  if (static_cast<std::size_t>(rows) != labels) throw std::invalid_argument("feature/label count mismatch");
  if (k < 1) throw std::invalid_argument("neighbour count k must be >= 1");
}

}  // namespace

NeighbourCounts knn_counts_serial(const SampleMatrix& x, std::span<const int> labels, int k) {
  check_inputs(x.rows(), labels.size(), k);
  const LabelGroups g = group_labels(labels);
  NeighbourCounts out = make_counts(labels.size());
  for (int i = 0; i < static_cast<int>(x.rows()); ++i) fill_sample(x, g, k, i, out);
  return out;
}

NeighbourCounts knn_counts_omp(const SampleMatrix& x, std::span<const int> labels, int k) {
  check_inputs(x.rows(), labels.size(), k);
  const LabelGroups g = group_labels(labels);
  NeighbourCounts out = make_counts(labels.size());
  const int n = static_cast<int>(x.rows());
#pragma omp parallel for schedule(dynamic, 64)
  for (int i = 0; i < n; ++i) fill_sample(x, g, k, i, out);
  return out;
}

NeighbourCounts knn_counts_1d(std::span<const double> x, std::span<const int> labels, int k) {
  check_inputs(static_cast<Eigen::Index>(x.size()), labels.size(), k);
  const std::size_t n = x.size();
  NeighbourCounts out = make_counts(n);
  std::vector<double> all(x.begin(), x.end());
  std::sort(all.begin(), all.end());

  const LabelGroups g = group_labels(labels);
  for (const auto& members : g.members) {
    const int n_label = static_cast<int>(members.size());
    std::vector<double> vals;
    vals.reserve(members.size());
    for (int i : members) vals.push_back(x[static_cast<std::size_t>(i)]);
    std::vector<double> sorted = vals;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t m = 0; m < members.size(); ++m) {
      const auto ui = static_cast<std::size_t>(members[m]);
      out.label_n[ui] = n_label;
      if (n_label <= 1) continue;
      const int kk = std::min(k, n_label - 1);
      // k-th nearest among the other same-label points: merge outward from
      // the point's own position in the sorted group.
      const double v = vals[m];
      auto pos = std::lower_bound(sorted.begin(), sorted.end(), v) - sorted.begin();
      std::ptrdiff_t lo = pos - 1;
      std::ptrdiff_t hi = pos + 1;  // skip one copy of v itself
      double radius = 0.0;
      for (int taken = 0; taken < kk; ++taken) {
        const double dl = lo >= 0 ? v - sorted[static_cast<std::size_t>(lo)] : std::numeric_limits<double>::infinity();
        const double dh = hi < static_cast<std::ptrdiff_t>(sorted.size())
                              ? sorted[static_cast<std::size_t>(hi)] - v
                              : std::numeric_limits<double>::infinity();
        if (dl <= dh) {
          radius = dl;
          --lo;
        } else {
          radius = dh;
          ++hi;
        }
      }
      // Points with |x_j - v| < radius.
      const auto first = std::upper_bound(all.begin(), all.end(), v - radius);
      const auto last = std::lower_bound(all.begin(), all.end(), v + radius);
      int count = static_cast<int>(last - first);
      if (radius == 0.0) count = 0;
      out.k_used[ui] = kk;
      out.within[ui] = count;
    }
  }
  return out;
}

double ksg_from_counts(const NeighbourCounts& c) {
  double sum_k = 0.0;
  double sum_label = 0.0;
  double sum_within = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < c.k_used.size(); ++i) {
    if (c.label_n[i] <= 1) continue;
    ++used;
    sum_k += digamma(c.k_used[i]);
    sum_label += digamma(c.label_n[i]);
    // A zero radius (exact duplicates) contributes the point itself.
    sum_within += digamma(std::max(c.within[i], 1));
  }
  if (used < 2) return 0.0;
  const double n = static_cast<double>(used);
  const double mi = digamma(n) + (sum_k - sum_label - sum_within) / n;
  return std::max(0.0, mi);
}

std::vector<double> per_feature_mi_serial(const SampleMatrix& x, std::span<const int> labels, int k) {
  std::vector<double> out(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const Eigen::VectorXd col = x.col(c);
    out[static_cast<std::size_t>(c)] = ksg_from_counts(knn_counts_1d(std::span<const double>(col.data(), col.size()), labels, k));
  }
  return out;
}

std::vector<double> per_feature_mi_omp(const SampleMatrix& x, std::span<const int> labels, int k) {
  std::vector<double> out(static_cast<std::size_t>(x.cols()));
  const int cols = static_cast<int>(x.cols());
#pragma omp parallel for schedule(dynamic, 1)
  for (int c = 0; c < cols; ++c) {
    const Eigen::VectorXd col = x.col(c);
    out[static_cast<std::size_t>(c)] = ksg_from_counts(knn_counts_1d(std::span<const double>(col.data(), col.size()), labels, k));
  }
  return out;
}

}  // namespace emgrl::kernels
