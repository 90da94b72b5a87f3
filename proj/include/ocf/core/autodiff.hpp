#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ocf/core/tensor.hpp"

namespace ocf {

// Reverse-mode autodiff over Tensor values. A fresh graph is built per
// forward pass; parameters are long-lived leaf nodes whose .grad
// accumulates across backward() calls until the optimizer clears it.
struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_op;

  Tensor& ensure_grad() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
  }
  void accumulate(const Tensor& g) {
    Tensor& dst = ensure_grad();
    const double* src = g.data();
    double* d = dst.data();
    for (int64_t i = 0; i < dst.size(); ++i) d[i] += src[i];
  }
};

inline NodePtr constant(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return n;
}

inline NodePtr parameter(Tensor v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->requires_grad = true;
  return n;
}

inline NodePtr make_op(Tensor value, std::vector<NodePtr> parents,
                       std::function<void(Node&)> backward_op) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  if (n->requires_grad) n->backward_op = std::move(backward_op);
  return n;
}

// Topological order via iterative DFS; graphs can be a few thousand nodes
// deep once the cycle-consistency branch re-runs the segmenter.
inline void topo_order(const NodePtr& root, std::vector<Node*>& out) {
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      out.push_back(node);
      stack.pop_back();
    }
  }
}

// Backpropagates seed (default 1) from a scalar root. Leaf grads accumulate;
// interior grads live only as long as the graph does.
inline void backward(const NodePtr& root, double seed = 1.0) {
  if (root->value.size() != 1)
    throw std::invalid_argument("backward: root must be a scalar node");
  if (!root->requires_grad) return;
  std::vector<Node*> order;
  topo_order(root, order);
  root->ensure_grad()[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_op && !n->grad.empty()) n->backward_op(*n);
  }
}

// ---------------------------------------------------------------------------
// Broadcasting helpers (numpy-style on equal-rank shapes; a dim may be 1).

inline bool broadcast_shapes(const Shape& a, const Shape& b, Shape& out) {
  if (a.size() != b.size()) return false;
  out.resize(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) out[i] = a[i];
    else if (a[i] == 1) out[i] = b[i];
    else if (b[i] == 1) out[i] = a[i];
    else return false;
  }
  return true;
}

namespace detail {

inline std::vector<int64_t> strides_for(const Shape& s, const Shape& bcast) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[i] = (s[i] == 1 && bcast[i] != 1) ? 0 : acc;
    acc *= s[i];
  }
  return st;
}

// Applies fn(out_index, a_index, b_index) over the broadcast iteration space.
template <typename F>
void broadcast_iter(const Shape& out, const Shape& sa, const Shape& sb, F&& fn) {
  auto sta = strides_for(sa, out);
  auto stb = strides_for(sb, out);
  int rank = static_cast<int>(out.size());
  std::vector<int> idx(rank, 0);
  int64_t n = shape_numel(out);
  int64_t ia = 0, ib = 0;
  for (int64_t flat = 0; flat < n; ++flat) {
    fn(flat, ia, ib);
    for (int d = rank - 1; d >= 0; --d) {
      ++idx[d];
      ia += sta[d];
      ib += stb[d];
      if (idx[d] < out[d]) break;
      ia -= static_cast<int64_t>(out[d]) * sta[d];
      ib -= static_cast<int64_t>(out[d]) * stb[d];
      idx[d] = 0;
    }
  }
}

// Reduces grad g (shape out) onto a tensor of shape s.
inline void reduce_to(const Tensor& g, const Shape& s, Tensor& dst) {
  if (g.shape() == s) {
    const double* src = g.data();
    double* d = dst.data();
    for (int64_t i = 0; i < dst.size(); ++i) d[i] += src[i];
    return;
  }
  auto st = strides_for(s, g.shape());
  int rank = static_cast<int>(g.shape().size());
  std::vector<int> idx(rank, 0);
  int64_t is = 0;
  const Shape& out = g.shape();
  int64_t n = g.size();
  for (int64_t flat = 0; flat < n; ++flat) {
    dst[is] += g[flat];
    for (int d = rank - 1; d >= 0; --d) {
      ++idx[d];
      is += st[d];
      if (idx[d] < out[d]) break;
      is -= static_cast<int64_t>(out[d]) * st[d];
      idx[d] = 0;
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops with broadcasting.

inline NodePtr add(NodePtr a, NodePtr b) {
  Shape os;
  if (!broadcast_shapes(a->value.shape(), b->value.shape(), os))
    throw std::invalid_argument("add: incompatible shapes " + shape_str(a->value.shape()) +
                                " vs " + shape_str(b->value.shape()));
  Tensor out(os);
  detail::broadcast_iter(os, a->value.shape(), b->value.shape(),
                         [&](int64_t o, int64_t ia, int64_t ib) { out[o] = a->value[ia] + b->value[ib]; });
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) detail::reduce_to(n.grad, a->value.shape(), a->ensure_grad());
    if (b->requires_grad) detail::reduce_to(n.grad, b->value.shape(), b->ensure_grad());
  });
}

inline NodePtr sub(NodePtr a, NodePtr b) {
  Shape os;
  if (!broadcast_shapes(a->value.shape(), b->value.shape(), os))
    throw std::invalid_argument("sub: incompatible shapes");
  Tensor out(os);
  detail::broadcast_iter(os, a->value.shape(), b->value.shape(),
                         [&](int64_t o, int64_t ia, int64_t ib) { out[o] = a->value[ia] - b->value[ib]; });
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) detail::reduce_to(n.grad, a->value.shape(), a->ensure_grad());
    if (b->requires_grad) {
      Tensor neg(n.grad.shape());
      for (int64_t i = 0; i < neg.size(); ++i) neg[i] = -n.grad[i];
      detail::reduce_to(neg, b->value.shape(), b->ensure_grad());
    }
  });
}

inline NodePtr mul(NodePtr a, NodePtr b) {
  Shape os;
  if (!broadcast_shapes(a->value.shape(), b->value.shape(), os))
    throw std::invalid_argument("mul: incompatible shapes " + shape_str(a->value.shape()) +
                                " vs " + shape_str(b->value.shape()));
  Tensor out(os);
  detail::broadcast_iter(os, a->value.shape(), b->value.shape(),
                         [&](int64_t o, int64_t ia, int64_t ib) { out[o] = a->value[ia] * b->value[ib]; });
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor ga(n.grad.shape());
      detail::broadcast_iter(n.grad.shape(), a->value.shape(), b->value.shape(),
                             [&](int64_t o, int64_t, int64_t ib) { ga[o] = n.grad[o] * b->value[ib]; });
      detail::reduce_to(ga, a->value.shape(), a->ensure_grad());
    }
    if (b->requires_grad) {
      Tensor gb(n.grad.shape());
      detail::broadcast_iter(n.grad.shape(), a->value.shape(), b->value.shape(),
                             [&](int64_t o, int64_t ia, int64_t) { gb[o] = n.grad[o] * a->value[ia]; });
      detail::reduce_to(gb, b->value.shape(), b->ensure_grad());
    }
  });
}

inline NodePtr div(NodePtr a, NodePtr b) {
  Shape os;
  if (!broadcast_shapes(a->value.shape(), b->value.shape(), os))
    throw std::invalid_argument("div: incompatible shapes");
  Tensor out(os);
  detail::broadcast_iter(os, a->value.shape(), b->value.shape(),
                         [&](int64_t o, int64_t ia, int64_t ib) { out[o] = a->value[ia] / b->value[ib]; });
  return make_op(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      Tensor ga(n.grad.shape());
      detail::broadcast_iter(n.grad.shape(), a->value.shape(), b->value.shape(),
                             [&](int64_t o, int64_t, int64_t ib) { ga[o] = n.grad[o] / b->value[ib]; });
      detail::reduce_to(ga, a->value.shape(), a->ensure_grad());
    }
    if (b->requires_grad) {
      Tensor gb(n.grad.shape());
      detail::broadcast_iter(n.grad.shape(), a->value.shape(), b->value.shape(),
                             [&](int64_t o, int64_t ia, int64_t ib) {
                               gb[o] = -n.grad[o] * a->value[ia] / (b->value[ib] * b->value[ib]);
                             });
      detail::reduce_to(gb, b->value.shape(), b->ensure_grad());
    }
  });
}

// ---------------------------------------------------------------------------
// Scalar-constant and unary ops.

inline NodePtr muls(NodePtr a, double s) {
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * s;
  return make_op(std::move(out), {a}, [a, s](Node& n) {
    Tensor& g = a->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * s;
  });
}

inline NodePtr adds(NodePtr a, double s) {
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + s;
  return make_op(std::move(out), {a}, [a](Node& n) { a->accumulate(n.grad); });
}

inline NodePtr neg(NodePtr a) { return muls(a, -1.0); }

inline NodePtr relu(NodePtr a) {
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] > 0.0 ? a->value[i] : 0.0;
  return make_op(std::move(out), {a}, [a](Node& n) {
    Tensor& g = a->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i)
      if (a->value[i] > 0.0) g[i] += n.grad[i];
  });
}

inline NodePtr sigmoid(NodePtr a) {
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.size(); ++i) {
    double x = a->value[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return make_op(std::move(out), {a}, [a](Node& n) {
    Tensor& g = a->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) {
      double y = n.value[i];
      g[i] += n.grad[i] * y * (1.0 - y);
    }
  });
}

inline NodePtr exp_(NodePtr a) {
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(a->value[i]);
  return make_op(std::move(out), {a}, [a](Node& n) {
    Tensor& g = a->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.value[i];
  });
}

inline NodePtr log_(NodePtr a) {
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::log(a->value[i]);
  return make_op(std::move(out), {a}, [a](Node& n) {
    Tensor& g = a->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / a->value[i];
  });
}

// |x| with subgradient 0 at the kink.
inline NodePtr abs_(NodePtr a) {
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a->value[i]);
  return make_op(std::move(out), {a}, [a](Node& n) {
    Tensor& g = a->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) {
      double x = a->value[i];
      g[i] += n.grad[i] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
    }
  });
}

inline NodePtr clamp(NodePtr a, double lo, double hi) {
  Tensor out(a->value.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, a->value[i]));
  return make_op(std::move(out), {a}, [a, lo, hi](Node& n) {
    Tensor& g = a->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i)
      if (a->value[i] > lo && a->value[i] < hi) g[i] += n.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and structure ops.

inline NodePtr sum_all(NodePtr a) {
  Tensor out = Tensor::scalar(a->value.sum());
  return make_op(std::move(out), {a}, [a](Node& n) {
    Tensor& g = a->ensure_grad();
    double s = n.grad[0];
    for (int64_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

inline NodePtr mean_all(NodePtr a) { return muls(sum_all(a), 1.0 / static_cast<double>(a->value.size())); }

// Concatenate along dim 0 (channels for CHW, coordinates for vectors).
inline NodePtr concat0(const std::vector<NodePtr>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat0: empty input");
  Shape s = parts[0]->value.shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p->value.rank() != static_cast<int>(s.size()))
      throw std::invalid_argument("concat0: rank mismatch");
    for (size_t d = 1; d < s.size(); ++d)
      if (p->value.shape()[d] != s[d]) throw std::invalid_argument("concat0: trailing dims differ");
    total += p->value.shape()[0];
  }
  Shape os = s;
  os[0] = total;
  Tensor out(os);
  int64_t off = 0;
  for (const auto& p : parts) {
    int64_t len = p->value.size();
    std::copy(p->value.data(), p->value.data() + len, out.data() + off);
    off += len;
  }
  return make_op(std::move(out), parts, [parts](Node& n) {
    int64_t off = 0;
    for (const auto& p : parts) {
      int64_t len = p->value.size();
      if (p->requires_grad) {
        Tensor& g = p->ensure_grad();
        for (int64_t i = 0; i < len; ++i) g[i] += n.grad[off + i];
      }
      off += len;
    }
  });
}

// View of [begin, begin+count) along dim 0.
inline NodePtr slice0(NodePtr a, int begin, int count) {
  const Shape& s = a->value.shape();
  if (begin < 0 || count <= 0 || begin + count > s[0])
    throw std::invalid_argument("slice0: range out of bounds");
  Shape os = s;
  os[0] = count;
  int64_t inner = shape_numel(s) / s[0];
  Tensor out(os);
  std::copy(a->value.data() + begin * inner, a->value.data() + (begin + count) * inner, out.data());
  return make_op(std::move(out), {a}, [a, begin, inner](Node& n) {
    Tensor& g = a->ensure_grad();
    for (int64_t i = 0; i < n.grad.size(); ++i) g[begin * inner + i] += n.grad[i];
  });
}

inline NodePtr reshape(NodePtr a, Shape s) {
  if (shape_numel(s) != a->value.size()) throw std::invalid_argument("reshape: size mismatch");
  Tensor reshaped = Tensor::from(
      std::move(s), std::vector<double>(a->value.data(), a->value.data() + a->value.size()));
  return make_op(std::move(reshaped), {a}, [a](Node& n) {
    Tensor& g = a->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

// Per-pixel softmax across dim 0 of a (K,H,W) tensor.
inline NodePtr softmax0(NodePtr a) {
  const Shape& s = a->value.shape();
  if (s.size() != 3) throw std::invalid_argument("softmax0: expected rank-3 (K,H,W)");
  int K = s[0];
  int64_t hw = static_cast<int64_t>(s[1]) * s[2];
  Tensor out(s);
  for (int64_t p = 0; p < hw; ++p) {
    double mx = -1e300;
    for (int k = 0; k < K; ++k) mx = std::max(mx, a->value[k * hw + p]);
    double z = 0.0;
    for (int k = 0; k < K; ++k) z += std::exp(a->value[k * hw + p] - mx);
    for (int k = 0; k < K; ++k) out[k * hw + p] = std::exp(a->value[k * hw + p] - mx) / z;
  }
  return make_op(std::move(out), {a}, [a, K, hw](Node& n) {
    Tensor& g = a->ensure_grad();
    for (int64_t p = 0; p < hw; ++p) {
      double dot = 0.0;
      for (int k = 0; k < K; ++k) dot += n.grad[k * hw + p] * n.value[k * hw + p];
      for (int k = 0; k < K; ++k)
        g[k * hw + p] += n.value[k * hw + p] * (n.grad[k * hw + p] - dot);
    }
  });
}

// Numerically stable binary cross-entropy taking logits; both the logits and
// the target may carry gradient. d/dz = sigmoid(z)-t, d/dt = -z.
inline NodePtr bce_with_logits_sum(NodePtr logits, NodePtr target) {
  if (logits->value.shape() != target->value.shape())
    throw std::invalid_argument("bce_with_logits_sum: shape mismatch");
  double acc = 0.0;
  for (int64_t i = 0; i < logits->value.size(); ++i) {
    double z = logits->value[i], t = target->value[i];
    acc += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::fabs(z)));
  }
  return make_op(Tensor::scalar(acc), {logits, target}, [logits, target](Node& n) {
    double s = n.grad[0];
    if (logits->requires_grad) {
      Tensor& g = logits->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) {
        double z = logits->value[i];
        double sz = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        g[i] += s * (sz - target->value[i]);
      }
    }
    if (target->requires_grad) {
      Tensor& g = target->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += s * (-logits->value[i]);
    }
  });
}

// Nearest-neighbour 2x upsampling of a (C,H,W) map.
inline NodePtr upsample2(NodePtr a) {
  const Shape& s = a->value.shape();
  if (s.size() != 3) throw std::invalid_argument("upsample2: expected rank-3");
  int C = s[0], H = s[1], W = s[2];
  Tensor out(Shape{C, 2 * H, 2 * W});
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double v = a->value.at(c, i, j);
        out.at(c, 2 * i, 2 * j) = v;
        out.at(c, 2 * i, 2 * j + 1) = v;
        out.at(c, 2 * i + 1, 2 * j) = v;
        out.at(c, 2 * i + 1, 2 * j + 1) = v;
      }
  return make_op(std::move(out), {a}, [a, C, H, W](Node& n) {
    Tensor& g = a->ensure_grad();
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
          g.at(c, i, j) += n.grad.at(c, 2 * i, 2 * j) + n.grad.at(c, 2 * i, 2 * j + 1) +
                           n.grad.at(c, 2 * i + 1, 2 * j) + n.grad.at(c, 2 * i + 1, 2 * j + 1);
  });
}

// ---------------------------------------------------------------------------
// conv2d on (Cin,H,W) with weight (Cout,Cin,kh,kw): im2col + GEMM. The column
// matrix is rebuilt in the backward pass instead of being cached.

namespace detail {

inline void im2col(const Tensor& x, int kh, int kw, int stride, int pad, int dil, int Ho, int Wo,
                   std::vector<double>& cols) {
  int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  int64_t ncols = static_cast<int64_t>(Ho) * Wo;
  cols.assign(static_cast<size_t>(Cin) * kh * kw * ncols, 0.0);
  for (int c = 0; c < Cin; ++c)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        double* row = cols.data() + ((static_cast<int64_t>(c) * kh + ki) * kw + kj) * ncols;
        for (int oi = 0; oi < Ho; ++oi) {
          int ii = oi * stride - pad + ki * dil;
          if (ii < 0 || ii >= H) continue;
          const double* src = x.data() + (static_cast<int64_t>(c) * H + ii) * W;
          double* dst = row + static_cast<int64_t>(oi) * Wo;
          for (int oj = 0; oj < Wo; ++oj) {
            int jj = oj * stride - pad + kj * dil;
            if (jj >= 0 && jj < W) dst[oj] = src[jj];
          }
        }
      }
}

inline void col2im_add(const std::vector<double>& cols, int Cin, int H, int W, int kh, int kw,
                       int stride, int pad, int dil, int Ho, int Wo, Tensor& dx) {
  int64_t ncols = static_cast<int64_t>(Ho) * Wo;
  for (int c = 0; c < Cin; ++c)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        const double* row = cols.data() + ((static_cast<int64_t>(c) * kh + ki) * kw + kj) * ncols;
        for (int oi = 0; oi < Ho; ++oi) {
          int ii = oi * stride - pad + ki * dil;
          if (ii < 0 || ii >= H) continue;
          double* dst = dx.data() + (static_cast<int64_t>(c) * H + ii) * W;
          const double* src = row + static_cast<int64_t>(oi) * Wo;
          for (int oj = 0; oj < Wo; ++oj) {
            int jj = oj * stride - pad + kj * dil;
            if (jj >= 0 && jj < W) dst[jj] += src[oj];
          }
        }
      }
}

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

}  // namespace detail

inline NodePtr conv2d(NodePtr x, NodePtr w, NodePtr b, int stride = 1, int pad = 1, int dil = 1) {
  const Shape& xs = x->value.shape();
  const Shape& ws = w->value.shape();
  if (xs.size() != 3 || ws.size() != 4) throw std::invalid_argument("conv2d: bad ranks");
  int Cin = xs[0], H = xs[1], W = xs[2];
  int Cout = ws[0], kh = ws[2], kw = ws[3];
  if (ws[1] != Cin)
    throw std::invalid_argument("conv2d: channel mismatch, input " + shape_str(xs) + " weight " +
                                shape_str(ws));
  int Ho = (H + 2 * pad - dil * (kh - 1) - 1) / stride + 1;
  int Wo = (W + 2 * pad - dil * (kw - 1) - 1) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: empty output");
  int64_t ncols = static_cast<int64_t>(Ho) * Wo;
  int64_t krows = static_cast<int64_t>(Cin) * kh * kw;

  std::vector<double> cols;
  detail::im2col(x->value, kh, kw, stride, pad, dil, Ho, Wo, cols);
  Tensor out(Shape{Cout, Ho, Wo});
  {
    detail::ECMap Wm(w->value.data(), Cout, krows);
    detail::ECMap Cm(cols.data(), krows, ncols);
    detail::EMap Ym(out.data(), Cout, ncols);
    Ym.noalias() = Wm * Cm;
    for (int c = 0; c < Cout; ++c) Ym.row(c).array() += b->value[c];
  }
  return make_op(std::move(out), {x, w, b},
                 [x, w, b, stride, pad, dil, Cin, H, W, Cout, kh, kw, Ho, Wo, krows, ncols](Node& n) {
                   detail::ECMap dY(n.grad.data(), Cout, ncols);
                   std::vector<double> cols;
                   if (w->requires_grad || x->requires_grad)
                     detail::im2col(x->value, kh, kw, stride, pad, dil, Ho, Wo, cols);
                   if (w->requires_grad) {
                     detail::ECMap Cm(cols.data(), krows, ncols);
                     detail::EMap dW(w->ensure_grad().data(), Cout, krows);
                     dW.noalias() += dY * Cm.transpose();
                   }
                   if (b->requires_grad) {
                     Tensor& db = b->ensure_grad();
                     for (int c = 0; c < Cout; ++c) db[c] += dY.row(c).sum();
                   }
                   if (x->requires_grad) {
                     std::vector<double> dcols(static_cast<size_t>(krows) * ncols);
                     detail::ECMap Wm(w->value.data(), Cout, krows);
                     detail::EMap dC(dcols.data(), krows, ncols);
                     dC.noalias() = Wm.transpose() * dY;
                     detail::col2im_add(dcols, Cin, H, W, kh, kw, stride, pad, dil, Ho, Wo,
                                        x->ensure_grad());
                   }
                 });
}

// Dense layer on a rank-1 input: y = W x + b, W is (Dout,Din).
inline NodePtr dense(NodePtr x, NodePtr w, NodePtr b) {
  const Shape& xs = x->value.shape();
  const Shape& ws = w->value.shape();
  if (xs.size() != 1 || ws.size() != 2 || ws[1] != xs[0])
    throw std::invalid_argument("dense: shape mismatch " + shape_str(xs) + " vs " + shape_str(ws));
  int Dout = ws[0], Din = ws[1];
  Tensor out(Shape{Dout});
  {
    detail::ECMap Wm(w->value.data(), Dout, Din);
    Eigen::Map<const Eigen::VectorXd> xv(x->value.data(), Din);
    Eigen::Map<Eigen::VectorXd> yv(out.data(), Dout);
    yv.noalias() = Wm * xv;
    for (int i = 0; i < Dout; ++i) yv[i] += b->value[i];
  }
  return make_op(std::move(out), {x, w, b}, [x, w, b, Dout, Din](Node& n) {
    Eigen::Map<const Eigen::VectorXd> dy(n.grad.data(), Dout);
    if (w->requires_grad) {
      detail::EMap dW(w->ensure_grad().data(), Dout, Din);
      Eigen::Map<const Eigen::VectorXd> xv(x->value.data(), Din);
      dW.noalias() += dy * xv.transpose();
    }
    if (b->requires_grad) {
      Tensor& db = b->ensure_grad();
      for (int i = 0; i < Dout; ++i) db[i] += dy[i];
    }
    if (x->requires_grad) {
      detail::ECMap Wm(w->value.data(), Dout, Din);
      Eigen::Map<Eigen::VectorXd> dx(x->ensure_grad().data(), Din);
      dx.noalias() += Wm.transpose() * dy;
    }
  });
}

}  // namespace ocf
