// Parameter storage and the layer vocabulary shared by all networks.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "srcyc/ops.hpp"
#include "srcyc/random.hpp"

namespace srcyc {

/// Ordered registry of a network's trainable parameters and persistent
/// buffers (batch-norm running statistics), addressed by dotted path.
template <class T>
class ParameterStore {
 public:
  struct Buffer {
    std::string name;
    std::shared_ptr<Tensor<T>> tensor;
  };

  Var<T> add_parameter(std::string name, Tensor<T> init) {
    Var<T> v = Var<T>::parameter(std::move(init));
    params_.emplace_back(std::move(name), v);
    return v;
  }

  std::shared_ptr<Tensor<T>> add_buffer(std::string name, Tensor<T> init) {
    auto t = std::make_shared<Tensor<T>>(std::move(init));
    buffers_.push_back({std::move(name), t});
    return t;
  }

  const std::vector<std::pair<std::string, Var<T>>>& parameters() const noexcept { return params_; }
  const std::vector<Buffer>& buffers() const noexcept { return buffers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : params_) n += v.value().size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, v] : params_) v.zero_grad();
  }

  /// Frozen parameters stop accumulating gradients; inputs still receive them.
  void set_trainable(bool on) {
    for (auto& [_, v] : params_) v.set_requires_grad(on);
  }

  /// Hash of every parameter's raw bytes, for detecting whether an update
  /// touched this network.
  std::size_t hash() const {
    std::size_t h = 0;
    for (const auto& [name, v] : params_) {
      const auto& t = v.value();
      std::string_view bytes(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(T));
      h ^= std::hash<std::string_view>{}(bytes) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
  }

 private:
  std::vector<std::pair<std::string, Var<T>>> params_;
  std::vector<Buffer> buffers_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization, drawn in storage
/// order from `rng`.
template <class T>
Tensor<T> uniform_fan_in(Shape shape, int fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

enum class Padding { zero, reflect };

template <class T>
struct Conv2d {
  Var<T> weight;
  Var<T> bias;
  int kernel = 3;
  int stride = 1;
  int pad = 0;
  Padding padding = Padding::zero;

  Conv2d() = default;
  Conv2d(ParameterStore<T>& store, const std::string& name, int in_ch, int out_ch, int k, int stride_, int pad_,
         Padding mode, Rng& rng, bool with_bias = true)
      : kernel(k), stride(stride_), pad(pad_), padding(mode) {
    const int fan_in = in_ch * k * k;
    weight = store.add_parameter(name + ".weight", uniform_fan_in<T>({out_ch, in_ch, k, k}, fan_in, rng));
    if (with_bias) bias = store.add_parameter(name + ".bias", uniform_fan_in<T>({out_ch}, fan_in, rng));
  }

  Var<T> operator()(const Var<T>& x) const {
    if (padding == Padding::reflect) return conv2d(reflect_pad(x, pad), weight, bias, stride, 0);
    return conv2d(x, weight, bias, stride, pad);
  }
};

template <class T>
struct PReLU {
  Var<T> slope;

  PReLU() = default;
  PReLU(ParameterStore<T>& store, const std::string& name, int channels, T init = T(0.25))
      : slope(store.add_parameter(name + ".slope", Tensor<T>({channels}, init))) {}

  Var<T> operator()(const Var<T>& x) const { return prelu(x, slope); }
};

template <class T>
struct BatchNorm2d {
  Var<T> gamma;
  Var<T> beta;
  std::shared_ptr<Tensor<T>> running_mean;
  std::shared_ptr<Tensor<T>> running_var;

  BatchNorm2d() = default;
  BatchNorm2d(ParameterStore<T>& store, const std::string& name, int channels)
      : gamma(store.add_parameter(name + ".weight", Tensor<T>({channels}, T(1)))),
        beta(store.add_parameter(name + ".bias", Tensor<T>({channels}, T(0)))),
        running_mean(store.add_buffer(name + ".running_mean", Tensor<T>({channels}, T(0)))),
        running_var(store.add_buffer(name + ".running_var", Tensor<T>({channels}, T(1)))) {}

  Var<T> operator()(const Var<T>& x, bool training) const {
    return batch_norm(x, gamma, beta, *running_mean, *running_var, training);
  }
};

template <class T>
struct Linear {
  Var<T> weight;
  Var<T> bias;

  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, int in_features, int out_features, Rng& rng)
      : weight(store.add_parameter(name + ".weight", uniform_fan_in<T>({out_features, in_features}, in_features, rng))),
        bias(store.add_parameter(name + ".bias", uniform_fan_in<T>({out_features}, in_features, rng))) {}

  Var<T> operator()(const Var<T>& x) const { return linear(x, weight, bias); }
};

/// Common surface of the four networks.
template <class T>
class Network {
 public:
  virtual ~Network() = default;
  Network() = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  ParameterStore<T>& store() noexcept { return store_; }
  const ParameterStore<T>& store() const noexcept { return store_; }

  void set_training(bool on) noexcept { training_ = on; }
  bool training() const noexcept { return training_; }

 protected:
  ParameterStore<T> store_;
  bool training_ = true;
};

template <class T>
std::size_t count_parameters(const Network<T>& net) {
  return net.store().parameter_count();
}

}  // namespace srcyc
