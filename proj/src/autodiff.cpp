#include "shot/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "shot/error.hpp"

namespace shot {

const Tensor& Var::value() const {
  if (!tape_) throw Error("Var::value: unbound variable");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  require_finite(value, "constant");
  nodes_.push_back(Node{"constant", std::move(value), {}, nullptr, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const std::string& name, Tensor value, bool trainable) {
  if (params_.contains(name)) throw ConfigError("Tape::parameter: duplicate parameter name '" + name + "'");
  require_finite(value, "parameter '" + name + "'");
  nodes_.push_back(Node{"parameter", std::move(value), {}, nullptr, trainable, name});
  params_[name] = nodes_.size() - 1;
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string op, Tensor value, std::vector<Var> inputs, AdjointRule rule) {
  if (!value.all_finite()) throw NumericError("op '" + op + "': non-finite forward value");
  Node node{std::move(op), std::move(value), {}, std::move(rule), false, {}};
  node.inputs.reserve(inputs.size());
  for (const auto& v : inputs) {
    if (&v.tape() != this) throw Error("op '" + node.op + "': input recorded on a different tape");
    node.inputs.push_back(v.id());
    node.needs_grad = node.needs_grad || nodes_[v.id()].needs_grad;
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

GradMap Tape::backward(Var loss) const {
  if (&loss.tape() != this) throw Error("backward: loss belongs to a different tape");
  const Tensor& lv = value(loss.id());
  if (!lv.is_scalar()) throw ShapeError("backward: loss must be scalar, got shape " + shape_string(lv.shape()));

  std::vector<Tensor> grads(loss.id() + 1);
  std::vector<bool> has_grad(loss.id() + 1, false);
  grads[loss.id()] = Tensor(lv.shape(), {1.0});
  has_grad[loss.id()] = true;

  for (std::size_t k = loss.id() + 1; k-- > 0;) {
    const Node& node = nodes_[k];
    if (!has_grad[k] || !node.needs_grad || !node.rule) continue;
    AdjointContext ctx{node.value, grads[k], {}, {}};
    for (auto in : node.inputs) {
      ctx.in.push_back(&nodes_[in].value);
      if (nodes_[in].needs_grad) {
        if (!has_grad[in]) {
          grads[in] = Tensor::zeros_like(nodes_[in].value);
          has_grad[in] = true;
        }
        ctx.in_grad.push_back(&grads[in]);
      } else {
        ctx.in_grad.push_back(nullptr);
      }
    }
    node.rule(ctx);
    for (auto* g : ctx.in_grad) {
      if (g && !g->all_finite()) {
        throw NumericError("backward: non-finite adjoint from op '" + node.op + "' (node " + std::to_string(k) + ")");
      }
    }
  }

  GradMap out;
  for (const auto& [name, id] : params_) {
    if (id <= loss.id() && has_grad[id] && nodes_[id].needs_grad) {
      out[name] = grads[id];
    } else {
      out[name] = Tensor::zeros_like(nodes_[id].value);
    }
  }
  return out;
}

GradMap backward(const Tape& tape, Var loss) { return tape.backward(loss); }

namespace {

struct Dims {
  std::size_t r, c;
};

Dims dims(const Tensor& t) { return {t.rows(), t.cols()}; }

std::vector<std::size_t> broadcast_shape(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  auto [ar, ac] = dims(a);
  auto [br, bc] = dims(b);
  auto pick = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw ShapeError("op '" + op + "': cannot broadcast shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  };
  return {pick(ar, br), pick(ac, bc)};
}

// Flat index into `t` for output element (i, j) under broadcasting.
inline std::size_t bidx(const Dims& d, std::size_t i, std::size_t j) {
  return (d.r == 1 ? 0 : i) * d.c + (d.c == 1 ? 0 : j);
}

template <typename Fwd, typename Da, typename Db>
Var binary(const std::string& op, Var a, Var b, Fwd fwd, Da da, Db db) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  auto shape = broadcast_shape(op, av, bv);
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  Tensor out(shape, std::vector<double>(n));
  const Dims od = dims(out), ad = dims(av), bd = dims(bv);
  for (std::size_t i = 0; i < od.r; ++i) {
    for (std::size_t j = 0; j < od.c; ++j) {
      out[i * od.c + j] = fwd(av[bidx(ad, i, j)], bv[bidx(bd, i, j)]);
    }
  }
  return a.tape().record(op, std::move(out), {a, b}, [da, db](AdjointContext& ctx) {
    const Tensor& x = *ctx.in[0];
    const Tensor& y = *ctx.in[1];
    const Dims od = dims(ctx.out), xd = dims(x), yd = dims(y);
    for (std::size_t i = 0; i < od.r; ++i) {
      for (std::size_t j = 0; j < od.c; ++j) {
        const double g = ctx.grad[i * od.c + j];
        const double xv = x[bidx(xd, i, j)];
        const double yv = y[bidx(yd, i, j)];
        if (ctx.in_grad[0]) (*ctx.in_grad[0])[bidx(xd, i, j)] += g * da(xv, yv);
        if (ctx.in_grad[1]) (*ctx.in_grad[1])[bidx(yd, i, j)] += g * db(xv, yv);
      }
    }
  });
}

// Elementwise unary op; `deriv(x, y)` receives input and output values.
template <typename Fwd, typename Deriv>
Var unary(const std::string& op, Var a, Fwd fwd, Deriv deriv) {
  const Tensor& av = a.value();
  Tensor out = Tensor::zeros_like(av);
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return a.tape().record(op, std::move(out), {a}, [deriv](AdjointContext& ctx) {
    if (!ctx.in_grad[0]) return;
    const Tensor& x = *ctx.in[0];
    Tensor& gx = *ctx.in_grad[0];
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += ctx.grad[i] * deriv(x[i], ctx.out[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator*(Var a, Var b) { return mul(a, b); }
Var operator/(Var a, Var b) { return div(a, b); }

Var scale(Var a, double c) {
  return unary(
      "scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(
      "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  return unary(
      "sqrt", a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var square(Var a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var xlogx(Var a) {
  for (double v : a.value().data()) {
    if (v < 0.0) throw NumericError("op 'xlogx': negative input");
  }
  return unary(
      "xlogx", a, [](double x) { return x == 0.0 ? 0.0 : x * std::log(x); },
      [](double x, double) { return x == 0.0 ? 0.0 : std::log(x) + 1.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto [n, k] = dims(a);
  const auto [k2, m] = dims(b);
  if (k != k2) {
    throw ShapeError("op 'matmul': inner dimensions differ, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  Tensor out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += av * b[p * m + j];
    }
  }
  return out;
}

Var matmul(Var a, Var b) {
  Tensor out = matmul(a.value(), b.value());
  return a.tape().record("matmul", std::move(out), {a, b}, [](AdjointContext& ctx) {
    const Tensor& x = *ctx.in[0];
    const Tensor& y = *ctx.in[1];
    const auto [n, k] = dims(x);
    const std::size_t m = y.cols();
    const Tensor& g = ctx.grad;
    if (ctx.in_grad[0]) {
      Tensor& gx = *ctx.in_grad[0];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * y[p * m + j];
          gx[i * k + p] += acc;
        }
    }
    if (ctx.in_grad[1]) {
      Tensor& gy = *ctx.in_grad[1];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = x[i * k + p];
          if (xv == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) gy[p * m + j] += xv * g[i * m + j];
        }
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  const auto [r, c] = dims(av);
  Tensor out(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return a.tape().record("transpose", std::move(out), {a}, [](AdjointContext& ctx) {
    if (!ctx.in_grad[0]) return;
    const auto [r, c] = dims(*ctx.in[0]);
    Tensor& gx = *ctx.in_grad[0];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += ctx.grad[j * r + i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape().record("sum", Tensor::scalar(s), {a}, [](AdjointContext& ctx) {
    if (!ctx.in_grad[0]) return;
    const double g = ctx.grad[0];
    for (double& v : ctx.in_grad[0]->data()) v += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sum_axis(Var a, int axis) {
  if (axis != 0 && axis != 1) throw ShapeError("op 'sum_axis': axis must be 0 or 1");
  const Tensor& av = a.value();
  const auto [r, c] = dims(av);
  Tensor out = axis == 0 ? Tensor(1, c) : Tensor(r, 1);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += av[i * c + j];
  return a.tape().record("sum_axis", std::move(out), {a}, [axis](AdjointContext& ctx) {
    if (!ctx.in_grad[0]) return;
    const auto [r, c] = dims(*ctx.in[0]);
    Tensor& gx = *ctx.in_grad[0];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += ctx.grad[axis == 0 ? j : i];
  });
}

Var mean_axis(Var a, int axis) {
  const auto [r, c] = dims(a.value());
  return scale(sum_axis(a, axis), 1.0 / static_cast<double>(axis == 0 ? r : c));
}

Tensor softmax_rows(const Tensor& logits) {
  const auto [r, c] = dims(logits);
  Tensor out = Tensor::zeros_like(logits);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = logits.data().data() + i * c;
    double* y = &out[i * c];
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  return out;
}

Var softmax(Var a) {
  return a.tape().record("softmax", softmax_rows(a.value()), {a}, [](AdjointContext& ctx) {
    if (!ctx.in_grad[0]) return;
    const auto [r, c] = dims(ctx.out);
    Tensor& gx = *ctx.in_grad[0];
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += ctx.grad[i * c + j] * ctx.out[i * c + j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += ctx.out[i * c + j] * (ctx.grad[i * c + j] - dot);
    }
  });
}

Var log_softmax(Var a) {
  const Tensor& av = a.value();
  const auto [r, c] = dims(av);
  Tensor out = Tensor::zeros_like(av);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = av.data().data() + i * c;
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[j] - lse;
  }
  return a.tape().record("log_softmax", std::move(out), {a}, [](AdjointContext& ctx) {
    if (!ctx.in_grad[0]) return;
    const auto [r, c] = dims(ctx.out);
    Tensor& gx = *ctx.in_grad[0];
    for (std::size_t i = 0; i < r; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < c; ++j) gsum += ctx.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += ctx.grad[i * c + j] - std::exp(ctx.out[i * c + j]) * gsum;
    }
  });
}

}  // namespace shot
