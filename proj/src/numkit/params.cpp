#include "trade/numkit/params.hpp"

#include <algorithm>

#include "trade/errors.hpp"
#include "trade/numkit/kernels.hpp"

namespace trade::numkit {

std::size_t ParamStore::add(std::string name, Tensor value) {
  if (find(name)) throw ConfigError("duplicate parameter name: " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

std::optional<std::size_t> ParamStore::find(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t ParamStore::index(const std::string& name) const {
  auto i = find(name);
  if (!i) throw IndexError("unknown parameter: " + name);
  return *i;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

std::vector<double> ParamStore::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_elements());
  for (const auto& v : values_) flat.insert(flat.end(), v.storage().begin(), v.storage().end());
  return flat;
}

void ParamStore::assign_flat(std::span<const double> flat) {
  if (flat.size() != total_elements()) throw ShapeError("flat parameter vector has wrong length");
  std::size_t off = 0;
  for (auto& v : values_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), v.size(), v.storage().begin());
    off += v.size();
  }
}

bool ParamStore::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](const Tensor& t) { return t.all_finite(); });
}

Gradients::Gradients(const ParamStore& params) {
  grads_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) grads_.push_back(Tensor::zeros_like(params.value(i)));
}

void Gradients::zero() {
  for (auto& g : grads_) g.fill(0.0);
}

void Gradients::add(const Gradients& other) {
  if (other.size() != size()) throw ShapeError("gradient sets differ in parameter count");
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    require_same_shape(grads_[i], other.grads_[i], "Gradients::add");
    kernels::axpy(1.0, other.grads_[i].data(), grads_[i].data());
  }
}

void Gradients::scale(double factor) {
  for (auto& g : grads_)
    for (double& x : g.storage()) x *= factor;
}

bool Gradients::all_finite() const {
  return std::all_of(grads_.begin(), grads_.end(), [](const Tensor& t) { return t.all_finite(); });
}

std::size_t Gradients::total_elements() const {
  std::size_t n = 0;
  for (const auto& g : grads_) n += g.size();
  return n;
}

std::vector<double> Gradients::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_elements());
  for (const auto& g : grads_) flat.insert(flat.end(), g.storage().begin(), g.storage().end());
  return flat;
}

void Gradients::assign_flat(std::span<const double> flat) {
  if (flat.size() != total_elements()) throw ShapeError("flat gradient vector has wrong length");
  std::size_t off = 0;
  for (auto& g : grads_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), g.size(), g.storage().begin());
    off += g.size();
  }
}

}  // namespace trade::numkit
