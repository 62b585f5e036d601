#pragma once

#include <cmath>
#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "cadseq/numcore/array.hpp"
#include "cadseq/rng.hpp"

namespace cadseq::nc {

template <typename T>
struct Parameter {
  std::string name;
  Array<T> value;
  std::size_t index = 0;
};

// Gradient buffers aligned with a ParamStore by parameter index.
template <typename T>
using GradientSet = std::vector<Array<T>>;

// Owns every learnable tensor of a model; references stay valid as parameters are added.
template <typename T>
class ParamStore {
 public:
  Parameter<T>& add(const std::string& name, Array<T> value) {
    if (by_name_.count(name)) throw Error(ErrorCode::ConfigError, "duplicate parameter " + name);
    params_.push_back({name, std::move(value), params_.size()});
    by_name_[name] = params_.size() - 1;
    return params_.back();
  }

  Parameter<T>& zeros(const std::string& name, Shape shape) { return add(name, Array<T>(std::move(shape))); }
  Parameter<T>& constant(const std::string& name, Shape shape, T v) { return add(name, Array<T>(std::move(shape), v)); }

  // Uniform in [-bound, bound].
  Parameter<T>& uniform(const std::string& name, Shape shape, double bound, Rng& rng) {
    Array<T> a(std::move(shape));
    for (auto& v : a.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    return add(name, std::move(a));
  }

  // Weight of a fan_in -> fan_out linear map, stored [fan_in x fan_out].
  Parameter<T>& linear_weight(const std::string& name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    return uniform(name, {fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
  }

  Parameter<T>& normal(const std::string& name, Shape shape, double stddev, Rng& rng) {
    Array<T> a(std::move(shape));
    for (auto& v : a.values()) v = static_cast<T>(stddev * rng.normal());
    return add(name, std::move(a));
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }

  Parameter<T>* find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : &params_[it->second];
  }

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  GradientSet<T> zero_gradients() const {
    GradientSet<T> g;
    g.reserve(params_.size());
    for (const auto& p : params_) g.emplace_back(p.value.shape());
    return g;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

template <typename T>
void add_into(GradientSet<T>& acc, const GradientSet<T>& g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i].mat() += g[i].mat();
}

template <typename T>
void scale_into(GradientSet<T>& g, T factor) {
  for (auto& a : g) a.mat() *= factor;
}

}  // namespace cadseq::nc
