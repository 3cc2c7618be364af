#pragma once

#include <map>
#include <string>

#include "fd/prng.hpp"
#include "fd/tape.hpp"
#include "fd/tensor.hpp"

namespace fd {

// Named parameter tensors. std::map keeps iteration order deterministic,
// which checkpoint serialization and Adam both rely on.
template <typename T>
class ParameterStore {
 public:
  Tensor<T>& emplace(const std::string& name, Tensor<T> t) {
    auto [it, fresh] = tensors_.emplace(name, std::move(t));
    if (!fresh) throw ConfigError("duplicate parameter name: " + name);
    return it->second;
  }

  Tensor<T>& at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return tensors_.count(name) > 0; }
  std::size_t size() const { return tensors_.size(); }

  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }
  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& [name, t] : tensors_) out.emplace(name, t.template cast<U>());
    return out;
  }

 private:
  std::map<std::string, Tensor<T>> tensors_;
};

// Uniform init in [-s, s] with s = 1/sqrt(fan_in), one named substream per
// parameter so init order can never matter. fan_in is the last extent.
template <typename T>
Tensor<T> init_uniform_fanin(const Shape& shape, std::uint64_t seed,
                             const std::string& name) {
  Prng rng = substream(seed, "init/" + name);
  const double s = 1.0 / std::sqrt(static_cast<double>(shape.back()));
  Tensor<T> t = Tensor<T>::zeros(shape);
  for (T& v : t.values) v = static_cast<T>(rng.uniform_sym(s));
  return t;
}

}  // namespace fd
