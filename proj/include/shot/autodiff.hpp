#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "shot/tensor.hpp"

namespace shot {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using GradMap = std::map<std::string, Tensor>;

// Inputs handed to an adjoint rule. `in_grad[i]` is null when input i does not
// require a gradient; otherwise the rule accumulates into it.
struct AdjointContext {
  const Tensor& out;
  const Tensor& grad;
  std::vector<const Tensor*> in;
  std::vector<Tensor*> in_grad;
};

using AdjointRule = std::function<void(AdjointContext&)>;

// Append-only record of a computation. Nodes are stored in creation order, which
// is a topological order, so the reverse sweep visits each node exactly once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Registers a named leaf. Non-trainable parameters still report a (zero)
  // gradient from backward() but never propagate adjoints.
  Var parameter(const std::string& name, Tensor value, bool trainable = true);

  Var record(std::string op, Tensor value, std::vector<Var> inputs, AdjointRule rule);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss. Returns one gradient per registered
  // parameter; parameters the loss does not reach get zeros.
  GradMap backward(Var loss) const;

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    AdjointRule rule;
    bool needs_grad = false;
    std::string param_name;
  };

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> params_;
};

GradMap backward(const Tape& tape, Var loss);

// Elementwise binary ops with 2-D broadcasting: each dimension must match or be 1.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);

Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var neg(Var a);

Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var square(Var a);
// x log x with the convention 0 log 0 = 0.
Var xlogx(Var a);

Var matmul(Var a, Var b);
Var transpose(Var a);

// Full reductions return a shape-(1) scalar.
Var sum(Var a);
Var mean(Var a);
// axis 0 collapses rows (result 1 x cols); axis 1 collapses columns (rows x 1).
Var sum_axis(Var a, int axis);
Var mean_axis(Var a, int axis);

// Row-wise, max-subtracted.
Var softmax(Var a);
Var log_softmax(Var a);

// Forward-only helpers on plain tensors.
Tensor softmax_rows(const Tensor& logits);
Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace shot
