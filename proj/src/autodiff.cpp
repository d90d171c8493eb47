#include "hyperq/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hyperq::ad {

namespace {

void check_same(const Vec& a, const Vec& b, const char* op) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(op) + ": size mismatch");
}

}  // namespace

Tape::Var Tape::push(Vec value, std::function<void()> backward) {
  nodes_.push_back({std::move(value), {}, std::move(backward)});
  return {nodes_.size() - 1};
}

Vec& Tape::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Tape::Var Tape::constant(Vec value) { return push(std::move(value)); }

Tape::Var Tape::row(const Tensor& t, std::size_t r, Tensor* g) {
  if (r >= t.rows) throw std::out_of_range("row " + std::to_string(r) + " outside tensor " + t.name);
  Vec v(t.row(r), t.row(r) + t.cols);
  if (!g) return push(std::move(v));
  const std::size_t self = nodes_.size();
  return push(std::move(v), [this, self, g, r]() {
    const Vec& gr = grad({self});
    double* out = g->row(r);
    for (std::size_t i = 0; i < gr.size(); ++i) out[i] += gr[i];
  });
}

Tape::Var Tape::hadamard(Var a, Var b) {
  check_same(value(a), value(b), "hadamard");
  const Vec& x = value(a);
  const Vec& y = value(b);
  Vec v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] * y[i];
  const std::size_t self = nodes_.size();
  return push(std::move(v), [this, self, a, b]() {
    const Vec& g = grad({self});
    Vec& ga = grad(a);
    Vec& gb = grad(b);
    const Vec& x = value(a);
    const Vec& y = value(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * y[i];
      gb[i] += g[i] * x[i];
    }
  });
}

Tape::Var Tape::sum(std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("sum of nothing");
  Vec v = value(xs[0]);
  for (std::size_t k = 1; k < xs.size(); ++k) {
    check_same(v, value(xs[k]), "sum");
    const Vec& x = value(xs[k]);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += x[i];
  }
  const std::size_t self = nodes_.size();
  std::vector<Var> inputs(xs.begin(), xs.end());
  return push(std::move(v), [this, self, inputs]() {
    const Vec g = grad({self});
    for (Var x : inputs) {
      Vec& gx = grad(x);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
  });
}

Tape::Var Tape::add(Var a, Var b) {
  const Var xs[] = {a, b};
  return sum(xs);
}

Tape::Var Tape::scale(Var a, double c) {
  Vec v = value(a);
  for (double& x : v) x *= c;
  const std::size_t self = nodes_.size();
  return push(std::move(v), [this, self, a, c]() {
    const Vec& g = grad({self});
    Vec& ga = grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
  });
}

Tape::Var Tape::matvec(const Tensor& w, Tensor* gw, Var x) {
  const Vec& in = value(x);
  if (in.size() != w.cols) throw std::invalid_argument("matvec: size mismatch for " + w.name);
  Vec v(w.rows, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* row = w.row(r);
    double acc = 0;
    for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * in[c];
    v[r] = acc;
  }
  const std::size_t self = nodes_.size();
  return push(std::move(v), [this, self, &w, gw, x]() {
    const Vec& g = grad({self});
    Vec& gx = grad(x);
    const Vec& in = value(x);
    for (std::size_t r = 0; r < w.rows; ++r) {
      const double* row = w.row(r);
      const double gr = g[r];
      if (gr == 0) continue;
      for (std::size_t c = 0; c < w.cols; ++c) gx[c] += row[c] * gr;
      if (gw) {
        double* grow = gw->row(r);
        for (std::size_t c = 0; c < w.cols; ++c) grow[c] += gr * in[c];
      }
    }
  });
}

Tape::Var Tape::add_tensor(Var a, const Tensor& b, Tensor* gb) {
  Vec v = value(a);
  if (v.size() != b.size()) throw std::invalid_argument("add_tensor: size mismatch for " + b.name);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += b.data[i];
  const std::size_t self = nodes_.size();
  return push(std::move(v), [this, self, a, gb]() {
    const Vec& g = grad({self});
    Vec& ga = grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      if (gb) gb->data[i] += g[i];
    }
  });
}

Tape::Var Tape::relu(Var a) { return leaky_relu(a, 0.0); }

Tape::Var Tape::leaky_relu(Var a, double slope) {
  Vec v = value(a);
  for (double& x : v)
    if (x <= 0) x *= slope;
  const std::size_t self = nodes_.size();
  return push(std::move(v), [this, self, a, slope]() {
    const Vec& g = grad({self});
    Vec& ga = grad(a);
    const Vec& x = value(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0 ? g[i] : slope * g[i];
  });
}

Tape::Var Tape::prelu(Var a, const Tensor& slope, Tensor* gs) {
  const double s = slope.data.at(0);
  Vec v = value(a);
  for (double& x : v)
    if (x <= 0) x *= s;
  const std::size_t self = nodes_.size();
  return push(std::move(v), [this, self, a, s, gs]() {
    const Vec& g = grad({self});
    Vec& ga = grad(a);
    const Vec& x = value(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0) {
        ga[i] += g[i];
      } else {
        ga[i] += s * g[i];
        if (gs) gs->data[0] += g[i] * x[i];
      }
    }
  });
}

Tape::Var Tape::mask(Var a, Vec m) {
  check_same(value(a), m, "mask");
  Vec v = value(a);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= m[i];
  const std::size_t self = nodes_.size();
  return push(std::move(v), [this, self, a, m = std::move(m)]() {
    const Vec& g = grad({self});
    Vec& ga = grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * m[i];
  });
}

Tape::Var Tape::attention(const Tensor& att, Tensor* gatt, Var context, std::span<const Var> candidates, double slope) {
  if (candidates.empty()) throw std::invalid_argument("attention over no candidates");
  const std::size_t d = value(context).size();
  if (att.size() != 2 * d) throw std::invalid_argument("attention: vector size mismatch for " + att.name);
  const double* a1 = att.data.data();
  const double* a2 = att.data.data() + d;
  const Vec& c = value(context);
  double base = 0;
  for (std::size_t i = 0; i < d; ++i) base += a1[i] * c[i];
  const std::size_t n = candidates.size();
  Vec z(n), alpha(n);
  for (std::size_t j = 0; j < n; ++j) {
    const Vec& x = value(candidates[j]);
    check_same(c, x, "attention");
    double s = base;
    for (std::size_t i = 0; i < d; ++i) s += a2[i] * x[i];
    z[j] = s;
    alpha[j] = s > 0 ? s : slope * s;
  }
  const double top = *std::max_element(alpha.begin(), alpha.end());
  double norm = 0;
  for (double& u : alpha) norm += (u = std::exp(u - top));
  for (double& u : alpha) u /= norm;
  Vec v(d, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const Vec& x = value(candidates[j]);
    for (std::size_t i = 0; i < d; ++i) v[i] += alpha[j] * x[i];
  }
  const std::size_t self = nodes_.size();
  std::vector<Var> inputs(candidates.begin(), candidates.end());
  return push(std::move(v), [this, self, &att, gatt, context, inputs, z, alpha, slope, d]() {
    const Vec g = grad({self});
    const std::size_t n = inputs.size();
    Vec dalpha(n, 0.0);
    double mean = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const Vec& x = value(inputs[j]);
      double s = 0;
      for (std::size_t i = 0; i < d; ++i) s += g[i] * x[i];
      dalpha[j] = s;
      mean += alpha[j] * s;
    }
    const double* a1 = att.data.data();
    const double* a2 = att.data.data() + d;
    Vec dz(n);
    for (std::size_t j = 0; j < n; ++j) dz[j] = alpha[j] * (dalpha[j] - mean) * (z[j] > 0 ? 1.0 : slope);
    double dz_total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      dz_total += dz[j];
      Vec& gx = grad(inputs[j]);
      const Vec& x = value(inputs[j]);
      for (std::size_t i = 0; i < d; ++i) gx[i] += alpha[j] * g[i] + dz[j] * a2[i];
      if (gatt)
        for (std::size_t i = 0; i < d; ++i) gatt->data[d + i] += dz[j] * x[i];
    }
    Vec& gc = grad(context);
    const Vec& c = value(context);
    for (std::size_t i = 0; i < d; ++i) {
      gc[i] += dz_total * a1[i];
      if (gatt) gatt->data[i] += dz_total * c[i];
    }
  });
}

void Tape::backward(Var out, const Vec& seed) {
  check_same(value(out), seed, "backward seed");
  Vec& g = grad(out);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (std::size_t k = out.id + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.backward || n.grad.empty()) continue;
    n.backward();
  }
}

}  // namespace hyperq::ad
