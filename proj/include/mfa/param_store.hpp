#pragma once

#include <map>
#include <string>
#include <vector>

#include "mfa/tensor.hpp"

namespace mfa {

/// Named parameters with a gradient buffer per entry, kept in insertion order.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
  };

  void add(const std::string& name, Tensor<T> value) {
    if (index_.count(name) != 0) {
      throw ValidationError("duplicate parameter name '" + name + "'");
    }
    index_.emplace(name, entries_.size());
    Tensor<T> grad(value.shape());
    entries_.push_back(Entry{name, std::move(value), std::move(grad)});
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Entry& entry(const std::string& name) { return entries_[find(name)]; }
  const Entry& entry(const std::string& name) const { return entries_[find(name)]; }
  Tensor<T>& value(const std::string& name) { return entry(name).value; }
  const Tensor<T>& value(const std::string& name) const { return entry(name).value; }
  Tensor<T>& grad(const std::string& name) { return entry(name).grad; }
  const Tensor<T>& grad(const std::string& name) const { return entry(name).grad; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void zero_grad() {
    for (auto& e : entries_) e.grad.fill(T(0));
  }

  std::size_t num_scalars() const {
    std::size_t total = 0;
    for (const auto& e : entries_) total += e.value.size();
    return total;
  }

 private:
  std::size_t find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace mfa
