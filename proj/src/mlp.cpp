#include "overtake/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "overtake/binary_io.hpp"
#include "overtake/errors.hpp"

namespace overtake {

template <typename T>
Mlp<T>::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  require(sizes_.size() >= 2, "Mlp: needs at least an input and an output size");
  for (int s : sizes_) require(s > 0, "Mlp: layer sizes must be positive");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(total);
    total += static_cast<std::size_t>(sizes_[l]) * static_cast<std::size_t>(sizes_[l + 1]) +
             static_cast<std::size_t>(sizes_[l + 1]);
  }
  params_.assign(total, T(0));
}

template <typename T>
void Mlp<T>::initialize(Rng& rng) {
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const double limit = std::sqrt(6.0 / (sizes_[l] + sizes_[l + 1]));
    auto w = weight(l);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = static_cast<T>(rng.uniform(-limit, limit));
    }
    bias(l).setZero();
  }
}

template <typename T>
std::size_t Mlp<T>::bias_offset(std::size_t layer) const {
  return offsets_[layer] + static_cast<std::size_t>(sizes_[layer]) * static_cast<std::size_t>(sizes_[layer + 1]);
}

template <typename T>
Eigen::Map<typename Mlp<T>::Matrix> Mlp<T>::weight(std::size_t layer) {
  return Eigen::Map<Matrix>(params_.data() + offsets_[layer], sizes_[layer + 1], sizes_[layer]);
}

template <typename T>
Eigen::Map<const typename Mlp<T>::Matrix> Mlp<T>::weight(std::size_t layer) const {
  return Eigen::Map<const Matrix>(params_.data() + offsets_[layer], sizes_[layer + 1], sizes_[layer]);
}

template <typename T>
Eigen::Map<typename Mlp<T>::Vector> Mlp<T>::bias(std::size_t layer) {
  return Eigen::Map<Vector>(params_.data() + bias_offset(layer), sizes_[layer + 1]);
}

template <typename T>
Eigen::Map<const typename Mlp<T>::Vector> Mlp<T>::bias(std::size_t layer) const {
  return Eigen::Map<const Vector>(params_.data() + bias_offset(layer), sizes_[layer + 1]);
}

template <typename T>
typename Mlp<T>::Matrix Mlp<T>::forward(const Matrix& input, Cache* cache) const {
  require(input.rows() == sizes_.front(), "Mlp::forward: input width mismatch");
  require(input.cols() >= 1, "Mlp::forward: empty batch");
  if (cache != nullptr) {
    cache->inputs.resize(layer_count());
    cache->pre_activations.resize(layer_count());
  }
  Matrix activation = input;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    Matrix z = weight(l) * activation;
    z.colwise() += bias(l);
    if (cache != nullptr) {
      cache->inputs[l] = std::move(activation);
      cache->pre_activations[l] = z;
    }
    if (l + 1 < layer_count()) {
      activation = z.cwiseMax(T(0));
    } else {
      activation = std::move(z);
    }
  }
  return activation;
}

template <typename T>
void Mlp<T>::backward(const Cache& cache, const Matrix& output_grad, std::vector<T>& param_grad,
                      Matrix* input_grad, bool need_param_grad) const {
  require(cache.inputs.size() == layer_count(), "Mlp::backward: cache does not match network");
  require(output_grad.rows() == sizes_.back() && output_grad.cols() == cache.inputs.front().cols(),
          "Mlp::backward: output gradient shape mismatch");
  if (need_param_grad) param_grad.assign(params_.size(), T(0));

  Matrix delta = output_grad;
  for (std::size_t l = layer_count(); l-- > 0;) {
    if (l + 1 < layer_count()) {
      delta = delta.cwiseProduct((cache.pre_activations[l].array() > T(0)).template cast<T>().matrix());
    }
    if (need_param_grad) {
      Eigen::Map<Matrix> dw(param_grad.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
      dw.noalias() = delta * cache.inputs[l].transpose();
      Eigen::Map<Vector> db(param_grad.data() + bias_offset(l), sizes_[l + 1]);
      db = delta.template cast<double>().rowwise().sum().template cast<T>();
    }
    if (l > 0 || input_grad != nullptr) {
      Matrix upstream = weight(l).transpose() * delta;
      if (l == 0) {
        *input_grad = std::move(upstream);
      } else {
        delta = std::move(upstream);
      }
    }
  }
}

template <typename T>
void Mlp<T>::reset_output_rows(int first_row, int row_count, T bias_value) {
  const std::size_t last = layer_count() - 1;
  require(first_row >= 0 && first_row + row_count <= sizes_.back(), "Mlp::reset_output_rows: bad range");
  weight(last).middleRows(first_row, row_count).setZero();
  bias(last).segment(first_row, row_count).setConstant(bias_value);
}

template <typename T>
void Mlp<T>::write(std::ostream& out) const {
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(sizes_.size()));
  for (int s : sizes_) io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s));
  std::vector<float> buffer(params_.begin(), params_.end());
  io::write_floats(out, buffer);
}

template <typename T>
Mlp<T> Mlp<T>::read(std::istream& in) {
  const auto count = io::read_pod<std::uint32_t>(in);
  if (count < 2 || count > 64) throw ConfigError("checkpoint: implausible layer count");
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto s = io::read_pod<std::uint32_t>(in);
    if (s == 0 || s > (1u << 20)) throw ConfigError("checkpoint: implausible layer size");
    sizes.push_back(static_cast<int>(s));
  }
  Mlp net(sizes);
  std::vector<float> buffer(net.parameter_count());
  io::read_floats(in, buffer);
  std::copy(buffer.begin(), buffer.end(), net.params_.begin());
  return net;
}

template <typename T>
Adam<T>::Adam(std::size_t parameter_count, Options options)
    : options_(options), m_(parameter_count, T(0)), v_(parameter_count, T(0)) {}

template <typename T>
void Adam<T>::step(std::span<T> params, std::span<const T> grads) {
  require(params.size() == m_.size() && grads.size() == m_.size(), "Adam::step: shape mismatch");
  ++steps_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = options_.learning_rate;
  const double eps = options_.epsilon;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = b1 * m_[i] + (1.0 - b1) * g;
    const double v = b2 * v_[i] + (1.0 - b2) * g * g;
    m_[i] = static_cast<T>(m);
    v_[i] = static_cast<T>(v);
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] = static_cast<T>(params[i] - lr * m_hat / (std::sqrt(v_hat) + eps));
  }
}

template <typename T>
void Adam<T>::write(std::ostream& out) const {
  io::write_pod<std::uint64_t>(out, steps_);
  io::write_pod<std::uint64_t>(out, m_.size());
  std::vector<float> buffer(m_.begin(), m_.end());
  io::write_floats(out, buffer);
  buffer.assign(v_.begin(), v_.end());
  io::write_floats(out, buffer);
}

template <typename T>
Adam<T> Adam<T>::read(std::istream& in, Options options) {
  const auto steps = io::read_pod<std::uint64_t>(in);
  const auto count = io::read_pod<std::uint64_t>(in);
  if (count > (1ull << 32)) throw ConfigError("checkpoint: implausible optimizer size");
  Adam adam(count, options);
  adam.steps_ = steps;
  std::vector<float> buffer(count);
  io::read_floats(in, buffer);
  std::copy(buffer.begin(), buffer.end(), adam.m_.begin());
  io::read_floats(in, buffer);
  std::copy(buffer.begin(), buffer.end(), adam.v_.begin());
  return adam;
}

template <typename T>
Adam<T> Adam<T>::restore(Options options, std::uint64_t steps, std::vector<T> first_moment,
                         std::vector<T> second_moment) {
  require(first_moment.size() == second_moment.size(), "Adam::restore: moment size mismatch");
  Adam adam;
  adam.options_ = options;
  adam.steps_ = steps;
  adam.m_ = std::move(first_moment);
  adam.v_ = std::move(second_moment);
  return adam;
}

template <typename T>
void soft_update(Mlp<T>& target, const Mlp<T>& online, double tau) {
  require(target.layer_sizes() == online.layer_sizes(), "soft_update: shape mismatch");
  auto dst = target.parameters();
  auto src = online.parameters();
  if (tau == 1.0) {
    std::copy(src.begin(), src.end(), dst.begin());
    return;
  }
  if (tau == 0.0) return;
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = static_cast<T>((1.0 - tau) * dst[i] + tau * src[i]);
  }
}

template class Mlp<float>;
template class Mlp<double>;
template class Adam<float>;
template class Adam<double>;
template void soft_update<float>(Mlp<float>&, const Mlp<float>&, double);
template void soft_update<double>(Mlp<double>&, const Mlp<double>&, double);

}  // namespace overtake
