#pragma once

// Minimal dense ReLU network with explicit backpropagation. Batches are
// column-major: one sample per column.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

#include "emgrl/rng.hpp"

namespace emgrl::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
class Mlp {
 public:
  struct Tape {
    std::vector<Matrix<T>> inputs;  // input to each layer
    std::vector<Matrix<T>> pre;     // pre-activation of each layer
  };

  Mlp() = default;

  // `sizes` = {in, hidden..., out}. Parameters start at zero.
  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("mlp needs at least input and output sizes");
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      offsets_.push_back(n);
      n += static_cast<std::size_t>(sizes_[l + 1]) * static_cast<std::size_t>(sizes_[l] + 1);
    }
    params_ = Vector<T>::Zero(static_cast<Eigen::Index>(n));
  }

  // He-style uniform fan-in initialization; biases zero.
  void init_he_uniform(Rng& rng) {
    params_.setZero();
    for (int l = 0; l < num_layers(); ++l) {
      const double limit = std::sqrt(6.0 / static_cast<double>(sizes_[static_cast<std::size_t>(l)]));
      std::uniform_real_distribution<double> dist(-limit, limit);
      auto w = weight(l);
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<T>(dist(rng));
      }
    }
  }

  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  const std::vector<int>& sizes() const { return sizes_; }
  std::size_t num_params() const { return static_cast<std::size_t>(params_.size()); }

  Vector<T>& params() { return params_; }
  const Vector<T>& params() const { return params_; }

  Eigen::Map<Matrix<T>> weight(int l) {
    return {params_.data() + offsets_[static_cast<std::size_t>(l)], rows(l), cols(l)};
  }
  Eigen::Map<const Matrix<T>> weight(int l) const {
    return {params_.data() + offsets_[static_cast<std::size_t>(l)], rows(l), cols(l)};
  }
  Eigen::Map<Vector<T>> bias(int l) {
    return {params_.data() + offsets_[static_cast<std::size_t>(l)] + rows(l) * cols(l), rows(l)};
  }
  Eigen::Map<const Vector<T>> bias(int l) const {
    return {params_.data() + offsets_[static_cast<std::size_t>(l)] + rows(l) * cols(l), rows(l)};
  }

  // Linear output of the last layer (no output activation).
  Matrix<T> forward(const Matrix<T>& x, Tape* tape = nullptr) const {
    if (x.rows() != input_dim()) throw std::invalid_argument("mlp input dimension mismatch");
    if (tape) {
      tape->inputs.clear();
      tape->pre.clear();
    }
    Matrix<T> h = x;
    for (int l = 0; l < num_layers(); ++l) {
      Matrix<T> z = weight(l) * h;
      z.colwise() += bias(l);
      if (tape) {
        tape->inputs.push_back(std::move(h));
        tape->pre.push_back(z);
      }
      if (l + 1 < num_layers()) {
        h = z.cwiseMax(T(0));
      } else {
        h = std::move(z);
      }
    }
    return h;
  }

  // Accumulates dL/dparams into `grad` given dL/doutput. Optionally returns
  // dL/dinput.
  void backward(const Tape& tape, const Matrix<T>& grad_out, Vector<T>& grad,
                Matrix<T>* grad_input = nullptr) const {
    if (grad.size() != params_.size()) grad = Vector<T>::Zero(params_.size());
    Matrix<T> g = grad_out;
    for (int l = num_layers() - 1; l >= 0; --l) {
      const auto li = static_cast<std::size_t>(l);
      if (l + 1 < num_layers()) {
        g = (tape.pre[li].array() > T(0)).select(g, T(0));
      }
      Eigen::Map<Matrix<T>> gw(grad.data() + offsets_[li], rows(l), cols(l));
      Eigen::Map<Vector<T>> gb(grad.data() + offsets_[li] + rows(l) * cols(l), rows(l));
      gw.noalias() += g * tape.inputs[li].transpose();
      gb.noalias() += g.rowwise().sum();
      if (l > 0 || grad_input) {
        Matrix<T> next = weight(l).transpose() * g;
        g = std::move(next);
      }
    }
    if (grad_input) *grad_input = std::move(g);
  }

  template <typename U>
  Mlp<U> cast() const {
    Mlp<U> out(sizes_);
    out.params() = params_.template cast<U>();
    return out;
  }

 private:
  Eigen::Index rows(int l) const { return sizes_[static_cast<std::size_t>(l) + 1]; }
  Eigen::Index cols(int l) const { return sizes_[static_cast<std::size_t>(l)]; }

  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;
  Vector<T> params_;
};

// Adam with L2 weight decay folded into the gradient.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(double lr, double weight_decay, std::size_t n)
      : lr_(lr), weight_decay_(weight_decay), m_(Vector<T>::Zero(static_cast<Eigen::Index>(n))),
        v_(Vector<T>::Zero(static_cast<Eigen::Index>(n))) {}

  void step(Vector<T>& params, const Vector<T>& grad) {
    ++t_;
    Vector<T> g = grad;
    if (weight_decay_ != 0.0) g += static_cast<T>(weight_decay_) * params;
    m_ = static_cast<T>(kBeta1) * m_ + static_cast<T>(1.0 - kBeta1) * g;
    v_ = static_cast<T>(kBeta2) * v_ + static_cast<T>(1.0 - kBeta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    const T step = static_cast<T>(lr_ / c1);
    const T root_c2 = static_cast<T>(std::sqrt(c2));
    params.array() -= step * m_.array() / (v_.array().sqrt() / root_c2 + static_cast<T>(kEps));
  }

  long steps() const { return t_; }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  double lr_ = 1e-3;
  double weight_decay_ = 0.0;
  Vector<T> m_;
  Vector<T> v_;
  long t_ = 0;
};

template <typename T>
void polyak_update(Mlp<T>& target, const Mlp<T>& online, double tau) {
  const T t = static_cast<T>(tau);
  target.params() = t * online.params() + (T(1) - t) * target.params();
}

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& z) {
  using T = typename Derived::Scalar;
  return (T(1) + (-z).exp()).inverse();
}

}  // namespace emgrl::nn
