#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "cadseq/numcore/array.hpp"
#include "cadseq/numcore/params.hpp"
#include "cadseq/rng.hpp"

namespace cadseq::nc {

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::uint32_t id = 0;

  const Array<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t size() const { return value().size(); }
};

// Reverse-mode recording of one forward evaluation.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t)>;

  explicit Tape(bool record = true, bool training = true, std::uint64_t seed = 0)
      : record_(record), training_(training), rng_(seed) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  bool training() const { return training_; }
  Rng& rng() { return rng_; }

  Var<T> constant(Array<T> value) { return make(std::move(value), false, -1); }
  // A leaf whose gradient is kept, for checking derivatives of free inputs.
  Var<T> variable(Array<T> value) { return make(std::move(value), record_, -1); }
  // A reference to a model parameter; its gradient is routed to the matching GradientSet slot.
  Var<T> param(const Parameter<T>& p) {
    Node n;
    n.external = &p.value;
    n.needs_grad = record_;
    n.param_index = static_cast<std::int64_t>(p.index);
    nodes_.push_back(std::move(n));
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  Var<T> push(Array<T> value, std::initializer_list<std::uint32_t> parents, Backward fn) {
    bool ng = false;
    if (record_) {
      for (auto p : parents) ng = ng || nodes_[p].needs_grad;
    }
    Node n;
    n.owned = std::move(value);
    n.needs_grad = ng;
    if (ng) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  Var<T> push_many(Array<T> value, const std::vector<std::uint32_t>& parents, Backward fn) {
    bool ng = false;
    if (record_) {
      for (auto p : parents) ng = ng || nodes_[p].needs_grad;
    }
    Node n;
    n.owned = std::move(value);
    n.needs_grad = ng;
    if (ng) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  const Array<T>& value(std::uint32_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.owned;
  }
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }

  // Gradient buffer of a node, allocated as zeros on first use.
  Array<T>& grad(std::uint32_t id) {
    Node& n = nodes_[id];
    if (!n.grad) n.grad.emplace(value(id).shape());
    return *n.grad;
  }
  bool has_grad(std::uint32_t id) const { return nodes_[id].grad.has_value(); }

  // Runs the reverse sweep from a single-element loss and adds parameter gradients into `out`.
  void backward(Var<T> loss, GradientSet<T>* out = nullptr, T seed = T(1)) {
    if (value(loss.id).size() != 1) throw Error(ErrorCode::ShapeMismatch, "backward needs a scalar loss");
    if (!nodes_[loss.id].needs_grad) return;
    grad(loss.id)[0] += seed;
    for (std::int64_t i = loss.id; i >= 0; --i) {
      auto id = static_cast<std::uint32_t>(i);
      Node& n = nodes_[id];
      if (!n.grad) continue;
      if (n.backward) n.backward(*this, id);
      if (n.param_index >= 0 && out) {
        (*out)[static_cast<std::size_t>(n.param_index)].mat() += n.grad->mat();
      }
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Array<T> owned;
    const Array<T>* external = nullptr;
    std::optional<Array<T>> grad;
    Backward backward;
    bool needs_grad = false;
    std::int64_t param_index = -1;
  };

  Var<T> make(Array<T> value, bool ng, std::int64_t pidx) {
    Node n;
    n.owned = std::move(value);
    n.needs_grad = ng;
    n.param_index = pidx;
    nodes_.push_back(std::move(n));
    return {this, static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  bool record_;
  bool training_;
  Rng rng_;
  std::deque<Node> nodes_;
};

template <typename T>
const Array<T>& Var<T>::value() const {
  return tape->value(id);
}

}  // namespace cadseq::nc
