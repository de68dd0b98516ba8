#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lhz/diffcore/tensor.hpp"

namespace lhz::diff {

class Graph;
struct Parameter;

// Handle to a node owned by a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }
  bool requires_grad() const;
};

// Receives the gradient flowing into the node and scatters it to the parents.
using BackwardFn = std::function<void(Graph&, const Tensor& out_grad)>;

struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::uint32_t> parents;
  BackwardFn backward;
  bool requires_grad = false;
  bool has_grad = false;
  const Parameter* param = nullptr;
};

// Define-by-run tape. Nodes are appended in creation order, which is a
// topological order, so the reverse sweep needs no sorting.
//
// A graph built with `record == false` keeps values only: no node requires
// gradients and no backward closures are stored. Used for rollouts and scoring.
class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  Var scalar(double v) { return constant(Tensor::scalar(v)); }

  // Leaf bound to a stored parameter. Repeated calls return the same node, so
  // gradients from every use accumulate into one buffer.
  Var param(const Parameter& p);

  // Registers the result of an operation. The node requires gradients iff
  // the graph records and any parent requires gradients; otherwise `fn` is dropped.
  Var make(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Var make(Tensor value, const std::vector<Var>& parents, BackwardFn fn);

  const Node& node(Var v) const { return nodes_[v.id]; }
  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  // Gradient buffer of a node that requires gradients (zeroed on first touch
  // in the current sweep), or nullptr when the node does not take gradients.
  Tensor* grad_target(std::uint32_t id);

  // Reverse sweep from a scalar loss. Previous gradients are discarded first.
  void backward(Var loss);

  // Gradient of `v` from the last sweep; zeros if nothing reached it.
  Tensor grad(Var v) const;

  // (parameter, gradient) for every parameter leaf reached by the last sweep.
  std::vector<std::pair<const Parameter*, const Tensor*>> param_grads() const;

 private:
  Var push(Node node);

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::uint32_t> param_nodes_;
};

}  // namespace lhz::diff
