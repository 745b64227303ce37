#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "overtake/rng.hpp"

namespace overtake {

// Dense multilayer perceptron: ReLU on hidden layers, linear output. All
// parameters live in one flat buffer (per layer: weight matrix column-major,
// then bias) so optimizers and target updates work on plain spans.
// Batches are column-major: one sample per column.
template <typename T>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  struct Cache {
    std::vector<Matrix> inputs;          // input to each layer
    std::vector<Matrix> pre_activations;  // affine output of each layer
  };

  Mlp() = default;
  explicit Mlp(std::vector<int> layer_sizes);

  // Glorot-uniform weights, zero biases.
  void initialize(Rng& rng);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::size_t layer_count() const { return sizes_.size() - 1; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<T> parameters() { return params_; }
  std::span<const T> parameters() const { return params_; }

  Eigen::Map<Matrix> weight(std::size_t layer);
  Eigen::Map<const Matrix> weight(std::size_t layer) const;
  Eigen::Map<Vector> bias(std::size_t layer);
  Eigen::Map<const Vector> bias(std::size_t layer) const;

  // Flat offsets of a layer's weight and bias blocks.
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const;

  Matrix forward(const Matrix& input, Cache* cache = nullptr) const;

  // Reverse pass. Writes dLoss/dParams into param_grad (resized to
  // parameter_count) and, when requested, dLoss/dInput.
  void backward(const Cache& cache, const Matrix& output_grad, std::vector<T>& param_grad,
                Matrix* input_grad = nullptr, bool need_param_grad = true) const;

  // Zeroes the given output rows' weights and sets their biases.
  void reset_output_rows(int first_row, int row_count, T bias_value);

  void write(std::ostream& out) const;
  static Mlp read(std::istream& in);

  bool operator==(const Mlp& other) const {
    return sizes_ == other.sizes_ && params_ == other.params_;
  }

 private:
  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<T> params_;
};

// Bias-corrected Adam over a flat parameter span.
template <typename T>
class Adam {
 public:
  struct Options {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Adam() = default;
  explicit Adam(std::size_t parameter_count, Options options = {});

  void step(std::span<T> params, std::span<const T> grads);

  std::uint64_t step_count() const { return steps_; }
  const Options& options() const { return options_; }
  std::span<const T> first_moment() const { return m_; }
  std::span<const T> second_moment() const { return v_; }

  void write(std::ostream& out) const;
  static Adam read(std::istream& in, Options options = {});
  static Adam restore(Options options, std::uint64_t steps, std::vector<T> first_moment,
                      std::vector<T> second_moment);

  bool operator==(const Adam&) const = default;

 private:
  Options options_{};
  std::vector<T> m_;
  std::vector<T> v_;
  std::uint64_t steps_ = 0;

  friend bool operator==(const Options& a, const Options& b) {
    return a.learning_rate == b.learning_rate && a.beta1 == b.beta1 && a.beta2 == b.beta2 &&
           a.epsilon == b.epsilon;
  }
};

// target <- (1 - tau) * target + tau * online.
template <typename T>
void soft_update(Mlp<T>& target, const Mlp<T>& online, double tau);

extern template class Mlp<float>;
extern template class Mlp<double>;
extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace overtake
