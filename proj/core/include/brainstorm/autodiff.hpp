#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace brainstorm::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);

// Dense 64-bit float tensor. grad, when present, has the same length as data.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;

  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor vector(std::vector<double> v, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v,
                       bool requires_grad = false);
  double item() const;
};

// Handle to a tensor recorded on a Tape.
struct Var {
  std::size_t idx = static_cast<std::size_t>(-1);
};

// Reverse-mode tape. Operations append nodes whose inputs always precede
// them, so backward() is a single reverse sweep. Single-threaded.
class Tape {
 public:
  Var leaf(Tensor t);
  Var scalar(double v);
  Var constant_vector(std::vector<double> v);

  const Tensor& value(Var v) const;
  // Gradient of the most recent backward() target w.r.t. v; zero for
  // non-participating nodes.
  const std::vector<double>& grad(Var v) const;

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var smul(Var scalar, Var x);
  Var scale(Var x, double c);
  Var add_const(Var x, double c);
  Var matmul(Var a, Var b);
  Var tanh(Var x);
  Var hinge(Var x);
  Var embedding(Var table, std::span<const int> ids);
  Var row(Var mat, std::size_t r);
  Var stack_rows(std::span<const Var> rows);
  Var concat(std::span<const Var> parts);
  Var pick(Var vec, std::size_t i);
  Var sum(Var x);
  Var mean(Var x);
  Var softmax(Var x, int axis);
  Var log_softmax(Var x, int axis);
  Var cosine_similarity(Var a, Var b);
  Var cross_entropy(Var log_probs, std::span<const int> targets, int pad_id);

  // loss must be scalar. Zeroes all gradients, then accumulates in reverse
  // recording order; replaying is bit-deterministic.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor t;
    std::vector<std::size_t> parents;
    std::function<void(Tape&, std::size_t)> backprop;  // null for leaves
    bool needs_grad = false;
  };

  Var push(Tensor t, std::vector<std::size_t> parents,
           std::function<void(Tape&, std::size_t)> backprop);
  Node& node(Var v);
  const Node& node(Var v) const;
  std::vector<double>& grad_buf(std::size_t idx);

  std::vector<Node> nodes_;
};

// Builds a scalar loss on the tape from parameter leaves (in the order the
// params were given).
using TapeFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Central finite differences against backward(); returns
// max over parameters of |analytic - numeric| / max(1e-8, |numeric|).
double finite_difference_check(const TapeFn& f, std::vector<Tensor> params, double step);

}  // namespace brainstorm::ad
