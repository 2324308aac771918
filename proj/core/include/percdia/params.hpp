#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "percdia/tensor.hpp"

namespace percdia {

// Ordered name -> Tensor map for every learnable parameter. Iteration order is
// insertion order, which makes checkpoint layout, counting and optimizer state
// deterministic.
class ParamStore {
 public:
  void add(const std::string& name, Tensor t);
  bool has(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  const std::vector<std::string>& names() const { return names_; }
  size_t size() const { return names_.size(); }
  int64_t total_scalars() const;

  template <typename Fn>
  void for_each(Fn&& fn) {
    for (const std::string& n : names_) fn(n, tensors_.at(n));
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const std::string& n : names_) fn(n, tensors_.at(n));
  }

  void zero_grads();

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Tensor> tensors_;
};

}  // namespace percdia
