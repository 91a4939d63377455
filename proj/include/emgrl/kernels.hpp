#pragma once

// Data-parallel kernels behind the metrics estimators. Each kernel has a
// serial reference and an OpenMP variant; tests require them to agree
// exactly and bench/ compares their throughput.

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace emgrl::kernels {

// Row-major view: one sample per row.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Kraskov-style neighbour statistics for a continuous sample / discrete label
// pair under the max-norm. For sample i with a label shared by N_i samples:
//   k_used[i]   = min(k, N_i - 1)            (0 when the label is unique)
//   label_n[i]  = N_i
//   within[i]   = #{j : d(i, j) < r_i} over all samples, including i,
// where r_i is the distance to the k_used-th nearest same-label neighbour.
struct NeighbourCounts {
  std::vector<int> k_used;
  std::vector<int> label_n;
  std::vector<int> within;
};

NeighbourCounts knn_counts_serial(const SampleMatrix& x, std::span<const int> labels, int k);
NeighbourCounts knn_counts_omp(const SampleMatrix& x, std::span<const int> labels, int k);

// The same statistics for one feature column; O(n log n) by sorting.
NeighbourCounts knn_counts_1d(std::span<const double> x, std::span<const int> labels, int k);

// MI estimate (nats, clamped at 0) from neighbour statistics.
double ksg_from_counts(const NeighbourCounts& c);

// Mean over columns of the 1-D estimate; serial and OpenMP over columns.
std::vector<double> per_feature_mi_serial(const SampleMatrix& x, std::span<const int> labels, int k);
std::vector<double> per_feature_mi_omp(const SampleMatrix& x, std::span<const int> labels, int k);

}  // namespace emgrl::kernels
