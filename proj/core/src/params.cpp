#include "percdia/params.hpp"

#include <stdexcept>

namespace percdia {

void ParamStore::add(const std::string& name, Tensor t) {
  if (has(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  names_.push_back(name);
  tensors_.emplace(name, std::move(t));
}

bool ParamStore::has(const std::string& name) const { return tensors_.count(name) > 0; }

Tensor& ParamStore::get(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

int64_t ParamStore::total_scalars() const {
  int64_t n = 0;
  for (const auto& name : names_) n += tensors_.at(name).size();
  return n;
}

void ParamStore::zero_grads() {
  for (const auto& name : names_) {
    auto it = tensors_.find(name);
    it->second.zero_grad();
  }
}

}  // namespace percdia
