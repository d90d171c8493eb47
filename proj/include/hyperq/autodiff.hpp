#pragma once

// Minimal reverse-mode differentiation over dense double vectors. Each op records its
// output value and a closure that pushes the output gradient to its inputs; parameter
// gradients accumulate directly into caller-owned tensors.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace hyperq::ad {

using Vec = std::vector<double>;

/// Row-major matrix (a vector is a 1 x n tensor).
struct Tensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  Tensor() = default;
  Tensor(std::string n, std::size_t r, std::size_t c) : name(std::move(n)), rows(r), cols(c), data(r * c, 0.0) {}

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  std::size_t size() const { return data.size(); }
};

class Tape {
 public:
  struct Var {
    std::size_t id;
  };

  Tape() { nodes_.reserve(256); }

  /// Constant input; its gradient is computed but not propagated anywhere.
  Var constant(Vec value);
  /// Row `r` of `t`; the gradient is added into `grad` (same shape as `t`) unless null.
  Var row(const Tensor& t, std::size_t r, Tensor* grad);

  Var hadamard(Var a, Var b);
  Var sum(std::span<const Var> xs);
  Var add(Var a, Var b);
  Var scale(Var a, double c);
  /// w (rows x cols) times x (cols); output has `rows` entries.
  Var matvec(const Tensor& w, Tensor* grad, Var x);
  /// a + b where b is a 1 x n tensor.
  Var add_tensor(Var a, const Tensor& b, Tensor* grad);
  Var relu(Var a);
  Var leaky_relu(Var a, double slope);
  /// Leaky ReLU with the slope taken from the 1 x 1 tensor `slope`.
  Var prelu(Var a, const Tensor& slope, Tensor* grad);
  /// Elementwise product with a fixed mask (dropout).
  Var mask(Var a, Vec mask);
  /// GAT-style attention: logit_j = LeakyReLU(att[:d] . context + att[d:] . c_j, slope),
  /// softmax over j, output sum_j alpha_j c_j. `att` is 1 x 2d.
  Var attention(const Tensor& att, Tensor* grad, Var context, std::span<const Var> candidates, double slope);

  const Vec& value(Var v) const { return nodes_[v.id].value; }
  Vec& grad(Var v);
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(out) and runs every recorded backward closure in reverse order.
  void backward(Var out, const Vec& seed);

 private:
  struct Node {
    Vec value;
    Vec grad;
    std::function<void()> backward;
  };

  Var push(Vec value, std::function<void()> backward = {});

  std::vector<Node> nodes_;
};

}  // namespace hyperq::ad
