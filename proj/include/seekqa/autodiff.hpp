// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace seekqa::ad {

/// Trainable tensor with its gradient accumulator. Vectors are rows x 1.
struct Parameter {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;

  Parameter() = default;
  Parameter(std::string n, std::size_t r, std::size_t c)
      : name(std::move(n)), rows(r), cols(c), value(r * c, 0.0), grad(r * c, 0.0) {}

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

/// Handle to a node on a Tape.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

/// Records operations for one forward pass and replays them backwards.
/// Values are dense row-major doubles. Nodes that do not depend on a
/// parameter carry no backward closure.
class Tape {
 public:
  Var constant(std::vector<double> value, std::size_t rows, std::size_t cols = 1);
  Var constant(std::vector<double> value) {
    const auto n = value.size();
    return constant(std::move(value), n, 1);
  }
  Var zeros(std::size_t n) { return constant(std::vector<double>(n, 0.0)); }
  /// Leaf bound to a parameter; gradients flow into p.grad on backward().
  Var param(Parameter& p);

  Var matvec(Var m, Var x);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double s);
  /// s (1x1) times vector v.
  Var scalar_mul(Var s, Var v);
  Var one_minus(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var concat(std::span<const Var> parts);
  Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }
  Var dot(Var a, Var b);
  /// Max-shifted softmax over all entries.
  Var softmax(Var a);
  /// Sum_i w[i] * vs[i]; w has one entry per vector.
  Var weighted_sum(Var w, std::span<const Var> vs);
  Var mean(std::span<const Var> vs);
  /// Row i of matrix m as a column vector.
  Var row(Var m, std::size_t i);
  /// -log softmax(scores)[gold], computed with log-sum-exp.
  Var nll(Var scores, std::size_t gold);

  const std::vector<double>& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const { return nodes_[v.id].value.at(0); }
  std::size_t size(Var v) const { return nodes_[v.id].value.size(); }
  std::size_t node_count() const { return nodes_.size(); }

  /// Seeds d(out)/d(out) = 1 (out must be a scalar) and accumulates into
  /// every bound parameter's grad.
  void backward(Var out);

 private:
  struct Node {
    std::vector<double> value;
    std::vector<double> grad;
    std::size_t rows = 0;
    std::size_t cols = 1;
    bool needs_grad = false;
    std::function<void(Tape&, const Node&)> back;
  };

  Var push(std::vector<double> value, std::size_t rows, std::size_t cols, bool needs_grad,
           std::function<void(Tape&, const Node&)> back);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  std::vector<double>& grad(Var v);
  void check_same(Var a, Var b, const char* op) const;

  std::vector<Node> nodes_;
  std::vector<std::pair<std::uint32_t, Parameter*>> bound_;
};

}  // namespace seekqa::ad
