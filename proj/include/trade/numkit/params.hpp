#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trade/numkit/tensor.hpp"

namespace trade::numkit {

/// Ordered collection of named trainable tensors. Insertion order is the
/// canonical order for flattening and serialization.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& value(std::size_t i) { return values_[i]; }
  const Tensor& value(std::size_t i) const { return values_[i]; }
  Tensor& value(const std::string& name) { return values_[index(name)]; }
  const Tensor& value(const std::string& name) const { return values_[index(name)]; }

  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t index(const std::string& name) const;

  std::size_t total_elements() const;
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);
  bool all_finite() const;

  bool operator==(const ParamStore& other) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

/// One gradient tensor per parameter, shaped like the store it came from.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamStore& params);

  std::size_t size() const { return grads_.size(); }
  Tensor& operator[](std::size_t i) { return grads_[i]; }
  const Tensor& operator[](std::size_t i) const { return grads_[i]; }

  void zero();
  void add(const Gradients& other);
  void scale(double factor);
  bool all_finite() const;
  std::size_t total_elements() const;
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);

 private:
  std::vector<Tensor> grads_;
};

}  // namespace trade::numkit
