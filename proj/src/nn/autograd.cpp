#include "itowave/nn/autograd.hpp"

#include "itowave/errors.hpp"

namespace itowave::nn {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)),
      value(std::move(v)),
      grad(value.shape()),
      adam_m(value.shape()),
      adam_v(value.shape()) {}

const Tensor& Var::value() const {
  if (!tape_) throw UsageError("use of an unbound Var");
  return tape_->value(id_);
}

const Tensor& Var::grad() const {
  if (!tape_) throw UsageError("use of an unbound Var");
  return tape_->grad(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::input(Tensor value) {
  const bool req = mode_ == GradMode::kEnabled;
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, req});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& param) {
  if (mode_ == GradMode::kDisabled) return constant(param.value);
  nodes_.push_back(Node{param.value, {}, {}, {}, &param, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> parents, BackwardFn fn) {
  bool req = false;
  if (mode_ == GradMode::kEnabled) {
    for (std::size_t p : parents) req = req || nodes_.at(p).requires_grad;
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = req;
  if (req) {
    node.parents = std::move(parents);
    node.backward = std::move(fn);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (consumed_) throw UsageError("backward() called twice on the same tape");
  if (nodes_.empty() || loss.tape() != this) {
    throw UsageError("backward() called before any forward pass was recorded on this tape");
  }
  if (mode_ == GradMode::kDisabled) throw UsageError("backward() on a gradient-disabled tape");
  const Tensor& lv = value(loss.id());
  if (lv.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(lv.shape()));
  }
  if (!lv.all_finite()) throw NumericalError("backward() on a non-finite loss");
  if (!nodes_[loss.id()].requires_grad) {
    throw UsageError("loss does not depend on any parameter or input");
  }

  grad_slot(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
  }
  for (Node& n : nodes_) {
    if (!n.param || n.grad.empty()) continue;
    if (!n.grad.all_finite()) {
      throw NumericalError("non-finite gradient for parameter '" + n.param->name + "'");
    }
    if (n.param->grad.shape() != n.value.shape()) n.param->grad = Tensor(n.value.shape());
    auto dst = n.param->grad.data();
    auto src = n.grad.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
  // Values and grads of non-parameter nodes stay readable until clear();
  // closures are released now.
  for (Node& n : nodes_) n.backward = nullptr;
  consumed_ = true;
}

void Tape::clear() {
  nodes_.clear();
  consumed_ = false;
}

}  // namespace itowave::nn
