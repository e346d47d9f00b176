// Adam and the step learning-rate schedule.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "srcyc/checkpoint.hpp"
#include "srcyc/layers.hpp"

namespace srcyc {

/// base * factor^k where k counts the milestones already reached
/// (milestone m takes effect at iteration m).
inline double learning_rate_at(long long iter, double base, const std::vector<long long>& milestones,
                               double factor = 0.5) {
  double lr = base;
  for (long long m : milestones)
    if (iter >= m) lr *= factor;
  return lr;
}

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam without weight decay over one ParameterStore. Moments are kept in
/// double regardless of T so float training stays reproducible across resumes.
template <class T>
class Adam {
 public:
  Adam() = default;
  Adam(ParameterStore<T>& store, AdamOptions opt = {}) : store_(&store), opt_(opt) {
    for (const auto& [_, v] : store.parameters()) {
      m_.emplace_back(v.shape(), 0.0);
      v_.emplace_back(v.shape(), 0.0);
    }
  }

  long long steps() const noexcept { return t_; }

  /// Applies one update using the gradients currently held by the store.
  void step(double lr) {
    if (!store_) throw std::logic_error("Adam: not attached to a parameter store");
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    std::size_t i = 0;
    for (auto [_, p] : store_->parameters()) {
      auto& m = m_[i];
      auto& v = v_[i];
      ++i;
      // A trainable parameter that received no gradient this step still
      // decays its moments, whether or not its grad buffer exists yet.
      if (!p.requires_grad()) continue;
      const auto& g = p.grad();
      auto& w = p.mutable_value();
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double gk = g.empty() ? 0.0 : static_cast<double>(g[k]);
        m[k] = opt_.beta1 * m[k] + (1.0 - opt_.beta1) * gk;
        v[k] = opt_.beta2 * v[k] + (1.0 - opt_.beta2) * gk * gk;
        const double update = lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + opt_.eps);
        w[k] = static_cast<T>(static_cast<double>(w[k]) - update);
      }
    }
  }

  void save(Checkpoint& ck, const std::string& prefix) const {
    ck.header[prefix + "steps"] = std::to_string(t_);
    std::size_t i = 0;
    for (const auto& [name, _] : store_->parameters()) {
      ck.add(prefix + "m." + name, m_[i]);
      ck.add(prefix + "v." + name, v_[i]);
      ++i;
    }
  }

  void load(const Checkpoint& ck, const std::string& prefix) {
    t_ = std::stoll(ck.header_value(prefix + "steps"));
    std::size_t i = 0;
    for (const auto& [name, _] : store_->parameters()) {
      m_[i] = ck.get(prefix + "m." + name).template as<double>();
      v_[i] = ck.get(prefix + "v." + name).template as<double>();
      if (m_[i].shape() != store_->parameters()[i].second.shape())
        throw CheckpointError("optimizer state shape mismatch for '" + name + "'");
      ++i;
    }
  }

 private:
  ParameterStore<T>* store_ = nullptr;
  AdamOptions opt_;
  std::vector<Tensor<double>> m_, v_;
  long long t_ = 0;
};

}  // namespace srcyc
