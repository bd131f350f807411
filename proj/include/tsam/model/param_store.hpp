#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tsam/ad/tensor.hpp"
#include "tsam/error.hpp"

namespace tsam::model {

/// Ordered collection of named trainable tensors. Handles are shared, so a
/// copy of the store aliases the same parameters; use clone() for a deep copy.
template <typename T>
class ParamStore {
 public:
  ad::Tensor<T> add(const std::string& name, ad::Tensor<T> tensor) {
    if (index_.contains(name)) throw ContractError("duplicate parameter '" + name + "'");
    tensor.set_requires_grad(true);
    index_.emplace(name, tensors_.size());
    names_.push_back(name);
    tensors_.push_back(tensor);
    return tensor;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  const ad::Tensor<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
    return tensors_[it->second];
  }

  std::size_t size() const { return tensors_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<ad::Tensor<T>>& tensors() { return tensors_; }
  const std::vector<ad::Tensor<T>>& tensors() const { return tensors_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (std::size_t i = 0; i < tensors_.size(); ++i) out.add(names_[i], tensors_[i].template cast<U>(true));
    return out;
  }

  ParamStore clone() const { return cast<T>(); }

  void zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
  }

 private:
  std::vector<std::string> names_;
  std::vector<ad::Tensor<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Initializers used when a store is built from scratch.
namespace init {

template <typename T>
ad::Tensor<T> xavier_uniform(ad::Shape shape, std::mt19937_64& rng) {
  const std::size_t fan_out = shape.back();
  const std::size_t fan_in = ad::element_count(shape) / fan_out;
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<T> data(ad::element_count(shape));
  for (auto& x : data) x = static_cast<T>(u(rng));
  return ad::Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
ad::Tensor<T> normal(ad::Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  std::vector<T> data(ad::element_count(shape));
  for (auto& x : data) x = static_cast<T>(n(rng));
  return ad::Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
ad::Tensor<T> uniform(ad::Shape shape, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> data(ad::element_count(shape));
  for (auto& x : data) x = static_cast<T>(u(rng));
  return ad::Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace init

}  // namespace tsam::model
