#include "lhz/diffcore/graph.hpp"

#include "lhz/diffcore/errors.hpp"
#include "lhz/diffcore/params.hpp"

namespace lhz::diff {

const Tensor& Var::value() const { return graph->node(*this).value; }

bool Var::requires_grad() const { return graph->node(*this).requires_grad; }

Var Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad && record_;
  return push(std::move(n));
}

Var Graph::param(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Var{this, it->second};
  }
  Node n;
  n.value = p.value;
  n.requires_grad = record_;
  n.param = &p;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id);
  return v;
}

Var Graph::make(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const Var& p : parents) {
      n.parents.push_back(p.id);
      n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return push(std::move(n));
}

Var Graph::make(Tensor value, const std::vector<Var>& parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (record_) {
    for (const Var& p : parents) {
      n.parents.push_back(p.id);
      n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(fn);
  }
  return push(std::move(n));
}

Tensor* Graph::grad_target(std::uint32_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    if (n.grad.shape() != n.value.shape()) {
      n.grad = Tensor(n.value.shape());
    } else {
      n.grad.fill(0.0);
    }
    n.has_grad = true;
  }
  return &n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw ContractError("backward: loss belongs to another graph");
  if (!nodes_[loss.id].value.is_scalar()) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_string(nodes_[loss.id].value.shape()));
  }
  for (Node& n : nodes_) n.has_grad = false;
  Tensor* seed = grad_target(loss.id);
  if (seed == nullptr) return;
  (*seed)[0] = 1.0;
  for (std::int64_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.has_grad) return n.grad;
  return Tensor(n.value.shape());
}

std::vector<std::pair<const Parameter*, const Tensor*>> Graph::param_grads() const {
  std::vector<std::pair<const Parameter*, const Tensor*>> out;
  for (const auto& [param, id] : param_nodes_) {
    const Node& n = nodes_[id];
    if (n.has_grad) out.emplace_back(param, &n.grad);
  }
  return out;
}

}  // namespace lhz::diff
