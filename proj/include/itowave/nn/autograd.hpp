#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "itowave/nn/tensor.hpp"

namespace itowave::nn {

/// A trainable tensor with its gradient accumulator and Adam moments.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid until the tape is
/// cleared or destroyed.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  /// Gradient after Tape::backward(); an empty tensor if the node was unreachable.
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class GradMode { kEnabled, kDisabled };

/// Define-by-run record of a forward computation. Ops append nodes; backward()
/// walks them in reverse, pushes gradients into Parameters, then frees the graph.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(GradMode mode = GradMode::kEnabled) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  GradMode mode() const { return mode_; }

  Var constant(Tensor value);
  /// Leaf whose gradient is kept on the tape (inspect with Var::grad()).
  Var input(Tensor value);
  /// Leaf bound to a Parameter; backward() accumulates into param.grad.
  Var parameter(Parameter& param);

  /// Records an op output. `fn` is dropped when no parent requires a gradient
  /// or the tape is in kDisabled mode.
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn fn);

  /// Reverse sweep from a finite scalar. Throws UsageError when nothing was
  /// recorded or the tape was already consumed, NumericalError on a non-finite
  /// loss or gradient.
  void backward(Var loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& grad(std::size_t id) const { return nodes_.at(id).grad; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_.at(id).parents; }
  /// Gradient slot of a node, zero-initialized on first access.
  Tensor& grad_slot(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  GradMode mode_;
  bool consumed_ = false;
};

}  // namespace itowave::nn
