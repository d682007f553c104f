#include "milkit/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace milkit::ad {

namespace detail {

Tensor& Node::ensure_grad() {
  if (!grad_allocated) {
    grad = Tensor::zeros(value.shape());
    grad_allocated = true;
  }
  return grad;
}

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return from_node(std::move(n));
}

Var Var::from_node(NodePtr n) {
  Var v;
  v.node_ = std::move(n);
  return v;
}

const Tensor& Var::grad() const {
  if (!node_->requires_grad) {
    throw std::logic_error("gradient requested for a variable without requires_grad");
  }
  return node_->ensure_grad();
}

void Var::zero_grad() {
  if (node_ && node_->grad_allocated) node_->grad.fill(0.0);
}

void backward(const Var& root) {
  if (!root) throw std::invalid_argument("backward: empty variable");
  if (root.value().size() != 1) {
    throw std::invalid_argument("backward: root must be scalar, got shape " +
                                root.value().shape_str());
  }
  if (!root.node()->requires_grad) return;

  // Iterative post-order DFS over the requires_grad subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backprop) continue;
    node->ensure_grad();  // zero grad when no child propagated anything
    node->backprop(*node);
  }
}

namespace {

NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                  std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

void check_same_shape(const char* op, const Var& a, const Var& b) {
  if (!a.value().same_shape(b.value())) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.value().shape_str() + " vs " + b.value().shape_str());
  }
}

Var elementwise_binary(const char* op, const Var& a, const Var& b,
                       double (*fwd)(double, double), int mode) {
  // mode 0: add, 1: sub, 2: mul
  check_same_shape(op, a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i]);
  NodePtr pa = a.node(), pb = b.node();
  auto n = make_node(std::move(out), {pa, pb}, [pa, pb, mode](Node& self) {
    const Tensor& g = self.grad;
    if (pa->requires_grad) {
      Tensor& ga = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += (mode == 2) ? g[i] * pb->value[i] : g[i];
      }
    }
    if (pb->requires_grad) {
      Tensor& gb = pb->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (mode == 0) gb[i] += g[i];
        else if (mode == 1) gb[i] -= g[i];
        else gb[i] += g[i] * pa->value[i];
      }
    }
  });
  return Var::from_node(std::move(n));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  return elementwise_binary("add", a, b, [](double x, double y) { return x + y; }, 0);
}

Var sub(const Var& a, const Var& b) {
  return elementwise_binary("sub", a, b, [](double x, double y) { return x - y; }, 1);
}

Var mul(const Var& a, const Var& b) {
  return elementwise_binary("mul", a, b, [](double x, double y) { return x * y; }, 2);
}

Var scale(const Var& a, double c) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
  NodePtr pa = a.node();
  auto n = make_node(std::move(out), {pa}, [pa, c](Node& self) {
    Tensor& ga = pa->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * c;
  });
  return Var::from_node(std::move(n));
}

namespace {

// Elementwise unary where the derivative is a function of (x, y).
Var elementwise_unary(const Var& x, double (*fwd)(double),
                      double (*dydx)(double, double)) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  NodePtr px = x.node();
  auto n = make_node(std::move(out), {px}, [px, dydx](Node& self) {
    Tensor& gx = px->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      gx[i] += self.grad[i] * dydx(px->value[i], self.value[i]);
    }
  });
  return Var::from_node(std::move(n));
}

constexpr double kSeluLambda = 1.0507009873554805;
constexpr double kSeluAlpha = 1.6732632423543772;

}  // namespace

Var tanh_v(const Var& x) {
  return elementwise_unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid_v(const Var& x) {
  return elementwise_unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var selu_v(const Var& x) {
  return elementwise_unary(
      x,
      [](double v) {
        return v > 0.0 ? kSeluLambda * v : kSeluLambda * kSeluAlpha * std::expm1(v);
      },
      [](double v, double y) {
        // for v <= 0: d/dv = lambda*alpha*exp(v) = y + lambda*alpha
        return v > 0.0 ? kSeluLambda : y + kSeluLambda * kSeluAlpha;
      });
}

Var relu_v(const Var& x) {
  return elementwise_unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var matmul_nt(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1)) {
    throw std::invalid_argument("matmul_nt: incompatible shapes " + av.shape_str() +
                                " vs " + bv.shape_str());
  }
  const int n = av.dim(0), m = bv.dim(0), k = av.dim(1);
  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    const double* arow = av.data() + static_cast<std::size_t>(i) * k;
    double* orow = out.data() + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) {
      const double* brow = bv.data() + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += arow[t] * brow[t];
      orow[j] = acc;
    }
  }
  NodePtr pa = a.node(), pb = b.node();
  auto node = make_node(std::move(out), {pa, pb}, [pa, pb, n, m, k](Node& self) {
    const Tensor& g = self.grad;
    if (pa->requires_grad) {
      Tensor& ga = pa->ensure_grad();
      // dA[i,t] += sum_j g[i,j] * B[j,t]
      for (int i = 0; i < n; ++i) {
        const double* grow = g.data() + static_cast<std::size_t>(i) * m;
        double* garow = ga.data() + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < m; ++j) {
          const double gij = grow[j];
          if (gij == 0.0) continue;
          const double* brow = pb->value.data() + static_cast<std::size_t>(j) * k;
          for (int t = 0; t < k; ++t) garow[t] += gij * brow[t];
        }
      }
    }
    if (pb->requires_grad) {
      Tensor& gb = pb->ensure_grad();
      // dB[j,t] += sum_i g[i,j] * A[i,t]
      for (int i = 0; i < n; ++i) {
        const double* grow = g.data() + static_cast<std::size_t>(i) * m;
        const double* arow = pa->value.data() + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < m; ++j) {
          const double gij = grow[j];
          if (gij == 0.0) continue;
          double* gbrow = gb.data() + static_cast<std::size_t>(j) * k;
          for (int t = 0; t < k; ++t) gbrow[t] += gij * arow[t];
        }
      }
    }
  });
  return Var::from_node(std::move(node));
}

Var matvec(const Var& m, const Var& v) {
  const Tensor& mv = m.value();
  const Tensor& vv = v.value();
  if (mv.rank() != 2 || vv.rank() != 1 || mv.dim(1) != vv.dim(0)) {
    throw std::invalid_argument("matvec: incompatible shapes " + mv.shape_str() + " vs " +
                                vv.shape_str());
  }
  const int n = mv.dim(0), k = mv.dim(1);
  Tensor out({n});
  for (int i = 0; i < n; ++i) {
    const double* row = mv.data() + static_cast<std::size_t>(i) * k;
    double acc = 0.0;
    for (int t = 0; t < k; ++t) acc += row[t] * vv[t];
    out[i] = acc;
  }
  NodePtr pm = m.node(), pv = v.node();
  auto node = make_node(std::move(out), {pm, pv}, [pm, pv, n, k](Node& self) {
    const Tensor& g = self.grad;
    if (pm->requires_grad) {
      Tensor& gm = pm->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        double* row = gm.data() + static_cast<std::size_t>(i) * k;
        for (int t = 0; t < k; ++t) row[t] += gi * pv->value[t];
      }
    }
    if (pv->requires_grad) {
      Tensor& gv = pv->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        const double* row = pm->value.data() + static_cast<std::size_t>(i) * k;
        for (int t = 0; t < k; ++t) gv[t] += gi * row[t];
      }
    }
  });
  return Var::from_node(std::move(node));
}

Var dot(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 1 || bv.rank() != 1 || av.dim(0) != bv.dim(0)) {
    throw std::invalid_argument("dot: incompatible shapes " + av.shape_str() + " vs " +
                                bv.shape_str());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  NodePtr pa = a.node(), pb = b.node();
  auto node = make_node(Tensor::scalar(acc), {pa, pb}, [pa, pb](Node& self) {
    const double g = self.grad[0];
    if (pa->requires_grad) {
      Tensor& ga = pa->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * pb->value[i];
    }
    if (pb->requires_grad) {
      Tensor& gb = pb->ensure_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * pa->value[i];
    }
  });
  return Var::from_node(std::move(node));
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || xv.dim(1) != wv.dim(1) ||
      wv.dim(0) != bv.dim(0)) {
    throw std::invalid_argument("linear: incompatible shapes x=" + xv.shape_str() +
                                " w=" + wv.shape_str() + " b=" + bv.shape_str());
  }
  const int n = xv.dim(0), o = wv.dim(0), f = xv.dim(1);
  Tensor out({n, o});
  for (int i = 0; i < n; ++i) {
    const double* xrow = xv.data() + static_cast<std::size_t>(i) * f;
    double* orow = out.data() + static_cast<std::size_t>(i) * o;
    for (int j = 0; j < o; ++j) {
      const double* wrow = wv.data() + static_cast<std::size_t>(j) * f;
      double acc = bv[j];
      for (int t = 0; t < f; ++t) acc += xrow[t] * wrow[t];
      orow[j] = acc;
    }
  }
  NodePtr px = x.node(), pw = w.node(), pb = b.node();
  auto node = make_node(std::move(out), {px, pw, pb}, [px, pw, pb, n, o, f](Node& self) {
    const Tensor& g = self.grad;
    if (px->requires_grad) {
      Tensor& gx = px->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const double* grow = g.data() + static_cast<std::size_t>(i) * o;
        double* gxrow = gx.data() + static_cast<std::size_t>(i) * f;
        for (int j = 0; j < o; ++j) {
          const double gij = grow[j];
          if (gij == 0.0) continue;
          const double* wrow = pw->value.data() + static_cast<std::size_t>(j) * f;
          for (int t = 0; t < f; ++t) gxrow[t] += gij * wrow[t];
        }
      }
    }
    if (pw->requires_grad) {
      Tensor& gw = pw->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const double* grow = g.data() + static_cast<std::size_t>(i) * o;
        const double* xrow = px->value.data() + static_cast<std::size_t>(i) * f;
        for (int j = 0; j < o; ++j) {
          const double gij = grow[j];
          if (gij == 0.0) continue;
          double* gwrow = gw.data() + static_cast<std::size_t>(j) * f;
          for (int t = 0; t < f; ++t) gwrow[t] += gij * xrow[t];
        }
      }
    }
    if (pb->requires_grad) {
      Tensor& gb = pb->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const double* grow = g.data() + static_cast<std::size_t>(i) * o;
        for (int j = 0; j < o; ++j) gb[j] += grow[j];
      }
    }
  });
  return Var::from_node(std::move(node));
}

Var softmax1d(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1 || xv.dim(0) < 1) {
    throw std::invalid_argument("softmax1d: expected non-empty vector, got " + xv.shape_str());
  }
  const int k = xv.dim(0);
  double mx = xv[0];
  for (int i = 1; i < k; ++i) mx = std::max(mx, xv[i]);
  Tensor out({k});
  double denom = 0.0;
  for (int i = 0; i < k; ++i) {
    out[i] = std::exp(xv[i] - mx);
    denom += out[i];
  }
  for (int i = 0; i < k; ++i) out[i] /= denom;
  NodePtr px = x.node();
  auto node = make_node(std::move(out), {px}, [px, k](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& y = self.value;
    double gy = 0.0;
    for (int i = 0; i < k; ++i) gy += g[i] * y[i];
    Tensor& gx = px->ensure_grad();
    for (int i = 0; i < k; ++i) gx[i] += y[i] * (g[i] - gy);
  });
  return Var::from_node(std::move(node));
}

Var mean1d(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1 || xv.dim(0) < 1) {
    throw std::invalid_argument("mean1d: expected non-empty vector, got " + xv.shape_str());
  }
  const int k = xv.dim(0);
  double acc = 0.0;
  for (int i = 0; i < k; ++i) acc += xv[i];
  NodePtr px = x.node();
  auto node = make_node(Tensor::scalar(acc / k), {px}, [px, k](Node& self) {
    Tensor& gx = px->ensure_grad();
    const double g = self.grad[0] / k;
    for (int i = 0; i < k; ++i) gx[i] += g;
  });
  return Var::from_node(std::move(node));
}

Var max1d(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 1 || xv.dim(0) < 1) {
    throw std::invalid_argument("max1d: expected non-empty vector, got " + xv.shape_str());
  }
  int arg = 0;
  for (int i = 1; i < xv.dim(0); ++i) {
    if (xv[i] > xv[arg]) arg = i;
  }
  NodePtr px = x.node();
  auto node = make_node(Tensor::scalar(xv[arg]), {px}, [px, arg](Node& self) {
    px->ensure_grad()[arg] += self.grad[0];
  });
  return Var::from_node(std::move(node));
}

Var weighted_rows(const Var& a, const Var& h) {
  const Tensor& av = a.value();
  const Tensor& hv = h.value();
  if (av.rank() != 1 || hv.rank() != 2 || av.dim(0) != hv.dim(0)) {
    throw std::invalid_argument("weighted_rows: incompatible shapes " + av.shape_str() +
                                " vs " + hv.shape_str());
  }
  const int k = hv.dim(0), m = hv.dim(1);
  Tensor out({m});
  for (int i = 0; i < k; ++i) {
    const double ai = av[i];
    const double* row = hv.data() + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) out[j] += ai * row[j];
  }
  NodePtr pa = a.node(), ph = h.node();
  auto node = make_node(std::move(out), {pa, ph}, [pa, ph, k, m](Node& self) {
    const Tensor& g = self.grad;
    if (pa->requires_grad) {
      Tensor& ga = pa->ensure_grad();
      for (int i = 0; i < k; ++i) {
        const double* row = ph->value.data() + static_cast<std::size_t>(i) * m;
        double acc = 0.0;
        for (int j = 0; j < m; ++j) acc += g[j] * row[j];
        ga[i] += acc;
      }
    }
    if (ph->requires_grad) {
      Tensor& gh = ph->ensure_grad();
      for (int i = 0; i < k; ++i) {
        const double ai = pa->value[i];
        if (ai == 0.0) continue;
        double* row = gh.data() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) row[j] += ai * g[j];
      }
    }
  });
  return Var::from_node(std::move(node));
}

namespace {

inline std::size_t idx4(int n, int c, int y, int x, int C, int H, int W) {
  return ((static_cast<std::size_t>(n) * C + c) * H + y) * W + x;
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (xv.rank() != 4 || wv.rank() != 4 || bv.rank() != 1) {
    throw std::invalid_argument("conv2d: expected x[N,C,H,W], w[O,C,k,k], b[O]");
  }
  if (wv.dim(1) != xv.dim(1) || wv.dim(0) != bv.dim(0) || wv.dim(2) != wv.dim(3) ||
      wv.dim(2) % 2 == 0) {
    throw std::invalid_argument("conv2d: incompatible shapes x=" + xv.shape_str() +
                                " w=" + wv.shape_str() + " (kernel must be odd, square)");
  }
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int O = wv.dim(0), K = wv.dim(2), P = K / 2;
  Tensor out({N, O, H, W});
  for (int n = 0; n < N; ++n) {
    for (int o = 0; o < O; ++o) {
      double* oplane = out.data() + idx4(n, o, 0, 0, O, H, W);
      for (std::size_t i = 0; i < static_cast<std::size_t>(H) * W; ++i) oplane[i] = bv[o];
      for (int c = 0; c < C; ++c) {
        const double* xplane = xv.data() + idx4(n, c, 0, 0, C, H, W);
        const double* wk = wv.data() + ((static_cast<std::size_t>(o) * C + c) * K) * K;
        for (int ky = 0; ky < K; ++ky) {
          for (int kx = 0; kx < K; ++kx) {
            const double wv_ = wk[ky * K + kx];
            if (wv_ == 0.0) continue;
            const int y0 = std::max(0, P - ky), y1 = std::min(H, H + P - ky);
            const int x0 = std::max(0, P - kx), x1 = std::min(W, W + P - kx);
            for (int y = y0; y < y1; ++y) {
              const double* xrow = xplane + static_cast<std::size_t>(y + ky - P) * W + (kx - P);
              double* orow = oplane + static_cast<std::size_t>(y) * W;
              for (int xx = x0; xx < x1; ++xx) orow[xx] += wv_ * xrow[xx];
            }
          }
        }
      }
    }
  }
  NodePtr px = x.node(), pw = w.node(), pb = b.node();
  auto node = make_node(std::move(out), {px, pw, pb},
                        [px, pw, pb, N, C, H, W, O, K, P](Node& self) {
    const Tensor& g = self.grad;
    const bool need_x = px->requires_grad;
    const bool need_w = pw->requires_grad;
    const bool need_b = pb->requires_grad;
    Tensor* gx = need_x ? &px->ensure_grad() : nullptr;
    Tensor* gw = need_w ? &pw->ensure_grad() : nullptr;
    Tensor* gb = need_b ? &pb->ensure_grad() : nullptr;
    for (int n = 0; n < N; ++n) {
      for (int o = 0; o < O; ++o) {
        const double* gplane = g.data() + idx4(n, o, 0, 0, O, H, W);
        if (need_b) {
          double acc = 0.0;
          for (std::size_t i = 0; i < static_cast<std::size_t>(H) * W; ++i) acc += gplane[i];
          (*gb)[o] += acc;
        }
        for (int c = 0; c < C; ++c) {
          const double* xplane = px->value.data() + idx4(n, c, 0, 0, C, H, W);
          const std::size_t wbase = ((static_cast<std::size_t>(o) * C + c) * K) * K;
          for (int ky = 0; ky < K; ++ky) {
            for (int kx = 0; kx < K; ++kx) {
              const int y0 = std::max(0, P - ky), y1 = std::min(H, H + P - ky);
              const int x0 = std::max(0, P - kx), x1 = std::min(W, W + P - kx);
              if (need_w) {
                double acc = 0.0;
                for (int y = y0; y < y1; ++y) {
                  const double* xrow =
                      xplane + static_cast<std::size_t>(y + ky - P) * W + (kx - P);
                  const double* grow = gplane + static_cast<std::size_t>(y) * W;
                  for (int xx = x0; xx < x1; ++xx) acc += grow[xx] * xrow[xx];
                }
                (*gw)[wbase + ky * K + kx] += acc;
              }
              if (need_x) {
                const double wv_ = pw->value[wbase + ky * K + kx];
                if (wv_ == 0.0) continue;
                double* gxplane = gx->data() + idx4(n, c, 0, 0, C, H, W);
                for (int y = y0; y < y1; ++y) {
                  double* gxrow =
                      gxplane + static_cast<std::size_t>(y + ky - P) * W + (kx - P);
                  const double* grow = gplane + static_cast<std::size_t>(y) * W;
                  for (int xx = x0; xx < x1; ++xx) gxrow[xx] += wv_ * grow[xx];
                }
              }
            }
          }
        }
      }
    }
  });
  return Var::from_node(std::move(node));
}

Var maxpool2x2(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 4) throw std::invalid_argument("maxpool2x2: expected x[N,C,H,W]");
  const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int OH = (H + 1) / 2, OW = (W + 1) / 2;
  Tensor out({N, C, OH, OW});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  std::size_t oi = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      for (int oy = 0; oy < OH; ++oy) {
        for (int ox = 0; ox < OW; ++ox, ++oi) {
          const int y0 = oy * 2, x0 = ox * 2;
          const int y1 = std::min(H, y0 + 2), x1 = std::min(W, x0 + 2);
          std::size_t best = idx4(n, c, y0, x0, C, H, W);
          double bv = xv[best];
          for (int y = y0; y < y1; ++y) {
            for (int xx = x0; xx < x1; ++xx) {
              const std::size_t ii = idx4(n, c, y, xx, C, H, W);
              if (xv[ii] > bv) {
                bv = xv[ii];
                best = ii;
              }
            }
          }
          out[oi] = bv;
          (*argmax)[oi] = best;
        }
      }
    }
  }
  NodePtr px = x.node();
  auto node = make_node(std::move(out), {px}, [px, argmax](Node& self) {
    Tensor& gx = px->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[(*argmax)[i]] += self.grad[i];
  });
  return Var::from_node(std::move(node));
}

Var flatten2(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() < 2) throw std::invalid_argument("flatten2: rank must be >= 2");
  const int n = xv.dim(0);
  const int rest = static_cast<int>(xv.size()) / n;
  Tensor out({n, rest}, std::vector<double>(xv.data(), xv.data() + xv.size()));
  NodePtr px = x.node();
  auto node = make_node(std::move(out), {px}, [px](Node& self) {
    Tensor& gx = px->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
  return Var::from_node(std::move(node));
}

Var bce(const Var& p, double label) {
  const Tensor& pv = p.value();
  if (pv.size() != 1) {
    throw std::invalid_argument("bce: probability must be scalar, got " + pv.shape_str());
  }
  const double y = label;
  const double raw = pv[0];
  const double ph = std::clamp(raw, kBceEps, 1.0 - kBceEps);
  const double loss = -(y * std::log(ph) + (1.0 - y) * std::log(1.0 - ph));
  NodePtr pp = p.node();
  auto node = make_node(Tensor::scalar(loss), {pp}, [pp, y, raw, ph](Node& self) {
    // clamped region is flat
    if (raw <= kBceEps || raw >= 1.0 - kBceEps) return;
    pp->ensure_grad()[0] += self.grad[0] * (ph - y) / (ph * (1.0 - ph));
  });
  return Var::from_node(std::move(node));
}

}  // namespace milkit::ad
