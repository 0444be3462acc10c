// Copyright 2026 The DiffuPT Workbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "diffupt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gemm.hpp"

namespace diffupt::num {

namespace {

thread_local std::vector<std::shared_ptr<Node>> g_tape;
thread_local bool g_grad_enabled = true;

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op) + ": produced a non-finite value");
    }
  }
}

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && !t->empty() && t->requires_grad()) return true;
  }
  return false;
}

// Builds the output node. When `track` is set the node joins the tape and the
// caller installs its backward_fn.
std::shared_ptr<Node> make_node(Shape shape, std::vector<double> data, bool track,
                                const char* op) {
  check_finite(data, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (track) {
    node->requires_grad = true;
    node->is_leaf = false;
    g_tape.push_back(node);
  }
  return node;
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " +
                   to_string(b));
}

enum class Broadcast { kNone, kLeading };

Broadcast binary_mode(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (b.rank() + 1 == a.rank() &&
      std::equal(b.shape().begin(), b.shape().end(), a.shape().begin() + 1)) {
    return Broadcast::kLeading;
  }
  shape_error(op, a.shape(), b.shape());
}

// Reduces a gradient laid out like `a` down to `b`'s footprint.
void accumulate_broadcast(Node& target, std::span<const double> g, Broadcast mode) {
  if (mode == Broadcast::kNone) {
    target.accumulate(g);
    return;
  }
  auto& tg = target.grad_buffer();
  const std::size_t inner = tg.size();
  for (std::size_t i = 0; i < g.size(); ++i) tg[i % inner] += g[i];
}

template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, BwdA da,
                 BwdB db) {
  const Broadcast mode = binary_mode(op, a, b);
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t inner = bv.size();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i % inner]);
  const bool track = any_requires_grad({&a, &b});
  auto node = make_node(a.shape(), std::move(out), track, op);
  if (track) {
    auto pa = a.node();
    auto pb = b.node();
    node->backward_fn = [pa, pb, mode, da, db](Node& self) {
      const auto& g = self.grad;
      const std::size_t inner = pb->data.size();
      if (pa->requires_grad) {
        std::vector<double> ga(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] = da(g[i], pa->data[i], pb->data[i % inner]);
        }
        pa->accumulate(ga);
      }
      if (pb->requires_grad) {
        std::vector<double> gb(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          gb[i] = db(g[i], pa->data[i], pb->data[i % inner]);
        }
        accumulate_broadcast(*pb, gb, mode);
      }
    };
  }
  return Tensor(node);
}

template <typename Fwd, typename Deriv>
Tensor unary_op(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  const bool track = any_requires_grad({&a});
  auto node = make_node(a.shape(), std::move(out), track, op);
  if (track) {
    auto pa = a.node();
    node->backward_fn = [pa, deriv](Node& self) {
      std::vector<double> ga(self.grad.size());
      for (std::size_t i = 0; i < ga.size(); ++i) {
        ga[i] = self.grad[i] * deriv(pa->data[i], self.data[i]);
      }
      pa->accumulate(ga);
    };
  }
  return Tensor(node);
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + to_string(t.shape()));
  }
}

}  // namespace

// ---- Shape / Node / Tensor --------------------------------------------------

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::vector<double>& Node::grad_buffer() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

void Node::accumulate(std::span<const double> g) {
  auto& buf = grad_buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

Tensor::Tensor() : node_(std::make_shared<Node>()) { node_->shape = {0}; }

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<Node>()) {
  node_->data.assign(numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : node_(std::make_shared<Node>()) {
  if (numel(shape) != data.size()) {
    throw ShapeError("Tensor: shape " + to_string(shape) + " holds " +
                     std::to_string(numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  check_finite(data, "Tensor");
  node_->shape = std::move(shape);
  node_->data = std::move(data);
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= rank()) {
    throw ShapeError("Tensor::dim: axis " + std::to_string(i) + " out of range for " +
                     to_string(shape()));
  }
  return node_->shape[i];
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("Tensor::item: not a scalar " + to_string(shape()));
  return node_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->data = node_->data;
  node->requires_grad = node_->requires_grad;
  return Tensor(node);
}

// ---- tape -------------------------------------------------------------------

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }
std::size_t tape_size() { return g_tape.size(); }

void clear_tape() {
  for (auto& node : g_tape) node->backward_fn = nullptr;
  g_tape.clear();
}

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw NumericError("backward: loss must be a scalar, got shape " +
                       to_string(loss.shape()));
  }
  if (!loss.requires_grad() || g_tape.empty()) {
    throw NumericError("backward: loss does not depend on any tracked tensor");
  }
  auto root = loss.node();
  root->grad_buffer()[0] += 1.0;
  for (auto it = g_tape.rbegin(); it != g_tape.rend(); ++it) {
    Node& node = **it;
    if (!node.grad.empty() && node.backward_fn) node.backward_fn(node);
  }
  clear_tape();
}

// ---- elementwise --------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; },
      [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor scale(const Tensor& a, double s) {
  return unary_op(
      "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
  return unary_op(
      "square", a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& a) {
  const auto av = a.data();
  const bool track = any_requires_grad({&a});
  std::vector<double> out(av.size());
  std::vector<double> sig(track ? av.size() : 0);
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double s = stable_sigmoid(av[i]);
    out[i] = av[i] * s;
    if (track) sig[i] = s;
  }
  auto node = make_node(a.shape(), std::move(out), track, "silu");
  if (track) {
    auto pa = a.node();
    node->backward_fn = [pa, sig = std::move(sig)](Node& self) {
      auto& g = pa->grad_buffer();
      for (std::size_t i = 0; i < sig.size(); ++i) {
        const double s = sig[i];
        g[i] += self.grad[i] * (s + pa->data[i] * s * (1.0 - s));
      }
    };
  }
  return Tensor(node);
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      "sigmoid", a, [](double x) { return stable_sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

// ---- reductions / views -------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.data()) s += x;
  const bool track = any_requires_grad({&a});
  auto node = make_node(Shape{}, {s}, track, "sum");
  if (track) {
    auto pa = a.node();
    node->backward_fn = [pa](Node& self) {
      auto& g = pa->grad_buffer();
      for (double& x : g) x += self.grad[0];
    };
  }
  return Tensor(node);
}

Tensor mean(const Tensor& a) {
  if (a.empty()) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor mean_spatial(const Tensor& a) {
  require_rank("mean_spatial", a, 4);
  const std::size_t nc = a.dim(0) * a.dim(1);
  const std::size_t hw = a.dim(2) * a.dim(3);
  std::vector<double> out(nc, 0.0);
  const auto av = a.data();
  for (std::size_t i = 0; i < nc; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < hw; ++j) s += av[i * hw + j];
    out[i] = s / static_cast<double>(hw);
  }
  const bool track = any_requires_grad({&a});
  auto node = make_node(Shape{a.dim(0), a.dim(1)}, std::move(out), track, "mean_spatial");
  if (track) {
    auto pa = a.node();
    node->backward_fn = [pa, nc, hw](Node& self) {
      auto& g = pa->grad_buffer();
      const double inv = 1.0 / static_cast<double>(hw);
      for (std::size_t i = 0; i < nc; ++i) {
        for (std::size_t j = 0; j < hw; ++j) g[i * hw + j] += self.grad[i] * inv;
      }
    };
  }
  return Tensor(node);
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size()) shape_error("reshape", a.shape(), shape);
  std::vector<double> out(a.data().begin(), a.data().end());
  const bool track = any_requires_grad({&a});
  auto node = make_node(std::move(shape), std::move(out), track, "reshape");
  if (track) {
    auto pa = a.node();
    node->backward_fn = [pa](Node& self) { pa->accumulate(self.grad); };
  }
  return Tensor(node);
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) shape_error("concat", first, p.shape());
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && p.shape()[d] != first[d]) shape_error("concat", first, p.shape());
    }
    out_shape[axis] += p.shape()[axis];
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

  std::vector<std::size_t> chunk(parts.size());
  std::size_t row = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    chunk[k] = parts[k].shape()[axis] * inner;
    row += chunk[k];
  }
  std::vector<double> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + o * chunk[k], chunk[k], out.begin() + o * row + offset);
    }
    offset += chunk[k];
  }

  bool track = false;
  if (g_grad_enabled) {
    for (const auto& p : parts) track = track || p.requires_grad();
  }
  auto node = make_node(std::move(out_shape), std::move(out), track, "concat");
  if (track) {
    std::vector<std::shared_ptr<Node>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    node->backward_fn = [nodes, chunk, outer, row](Node& self) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (nodes[k]->requires_grad) {
          auto& g = nodes[k]->grad_buffer();
          for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < chunk[k]; ++i) {
              g[o * chunk[k] + i] += self.grad[o * row + off + i];
            }
          }
        }
        off += chunk[k];
      }
    };
  }
  return Tensor(node);
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> indices) {
  require_rank("embedding", table, 2);
  const std::size_t vocab = table.dim(0);
  const std::size_t width = table.dim(1);
  std::vector<double> out(indices.size() * width);
  const auto tv = table.data();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= vocab) {
      throw ShapeError("embedding: index " + std::to_string(indices[i]) +
                       " out of range for table " + to_string(table.shape()));
    }
    std::copy_n(tv.begin() + indices[i] * width, width, out.begin() + i * width);
  }
  const bool track = any_requires_grad({&table});
  auto node = make_node(Shape{indices.size(), width}, std::move(out), track, "embedding");
  if (track) {
    auto pt = table.node();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    node->backward_fn = [pt, idx, width](Node& self) {
      auto& g = pt->grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < width; ++j) g[idx[i] * width + j] += self.grad[i * width + j];
      }
    };
  }
  return Tensor(node);
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  if (a.rank() == 0) throw ShapeError("gather_rows: scalar input");
  const std::size_t n = a.dim(0);
  const std::size_t stride = n == 0 ? 0 : a.size() / n;
  Shape shape = a.shape();
  shape[0] = rows.size();
  std::vector<double> out(rows.size() * stride);
  const auto av = a.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(av.begin() + rows[i] * stride, stride, out.begin() + i * stride);
  }
  const bool track = any_requires_grad({&a});
  auto node = make_node(std::move(shape), std::move(out), track, "gather_rows");
  if (track) {
    auto pa = a.node();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    node->backward_fn = [pa, idx, stride](Node& self) {
      auto& g = pa->grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < stride; ++j) g[idx[i] * stride + j] += self.grad[i * stride + j];
      }
    };
  }
  return Tensor(node);
}

// ---- dense algebra ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) shape_error("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
  const bool track = any_requires_grad({&a, &b});
  auto node = make_node(Shape{m, n}, std::move(out), track, "matmul");
  if (track) {
    auto pa = a.node();
    auto pb = b.node();
    node->backward_fn = [pa, pb, m, k, n](Node& self) {
      if (pa->requires_grad) {
        gemm_nt(m, k, n, self.grad.data(), pb->data.data(), pa->grad_buffer().data());
      }
      if (pb->requires_grad) {
        gemm_tn(k, n, m, pa->data.data(), self.grad.data(), pb->grad_buffer().data());
      }
    };
  }
  return Tensor(node);
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("linear", x, 2);
  require_rank("linear", weight, 2);
  if (x.dim(1) != weight.dim(1)) shape_error("linear", x.shape(), weight.shape());
  const std::size_t batch = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  const bool has_bias = !bias.empty();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
    shape_error("linear", weight.shape(), bias.shape());
  }
  std::vector<double> out(batch * out_dim, 0.0);
  gemm_nt(batch, out_dim, in, x.data().data(), weight.data().data(), out.data());
  if (has_bias) {
    const auto bv = bias.data();
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t j = 0; j < out_dim; ++j) out[i * out_dim + j] += bv[j];
    }
  }
  const bool track = any_requires_grad({&x, &weight, &bias});
  auto node = make_node(Shape{batch, out_dim}, std::move(out), track, "linear");
  if (track) {
    auto px = x.node();
    auto pw = weight.node();
    auto pb = has_bias ? bias.node() : nullptr;
    node->backward_fn = [px, pw, pb, batch, in, out_dim](Node& self) {
      if (px->requires_grad) {
        gemm_nn(batch, in, out_dim, self.grad.data(), pw->data.data(),
                px->grad_buffer().data());
      }
      if (pw->requires_grad) {
        gemm_tn(out_dim, in, batch, self.grad.data(), px->data.data(),
                pw->grad_buffer().data());
      }
      if (pb && pb->requires_grad) {
        auto& g = pb->grad_buffer();
        for (std::size_t i = 0; i < batch; ++i) {
          for (std::size_t j = 0; j < out_dim; ++j) g[j] += self.grad[i * out_dim + j];
        }
      }
    };
  }
  return Tensor(node);
}

// ---- convolution and spatial ops ----------------------------------------------

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w, o, kh, kw, stride, pad, ho, wo;
  std::size_t ck() const { return c * kh * kw; }
  std::size_t cols() const { return n * ho * wo; }
};

// Output columns [lo, hi) of one kernel tap read in-bounds input pixels.
void valid_range(const ConvGeometry& g, std::size_t kj, std::size_t& lo, std::size_t& hi) {
  const long pad = static_cast<long>(g.pad);
  const long s = static_cast<long>(g.stride);
  const long k = static_cast<long>(kj);
  const long w = static_cast<long>(g.w);
  long l = 0;
  while (l < static_cast<long>(g.wo) && l * s + k - pad < 0) ++l;
  long h = static_cast<long>(g.wo);
  while (h > l && (h - 1) * s + k - pad >= w) --h;
  lo = static_cast<std::size_t>(l);
  hi = static_cast<std::size_t>(h);
}

// col is (C*kh*kw, N*Ho*Wo)
void im2col(const ConvGeometry& g, const double* x, double* col) {
  const std::size_t l = g.ho * g.wo;
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        std::size_t lo = 0, hi = 0;
        valid_range(g, kj, lo, hi);
        double* dst = col + ((c * g.kh + ki) * g.kw + kj) * ncols;
        for (std::size_t n = 0; n < g.n; ++n) {
          const double* src = x + (n * g.c + c) * g.h * g.w;
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
            double* row = dst + n * l + oy * g.wo;
            if (iy < 0 || iy >= static_cast<long>(g.h)) {
              std::fill_n(row, g.wo, 0.0);
              continue;
            }
            std::fill(row, row + lo, 0.0);
            std::fill(row + hi, row + g.wo, 0.0);
            const long base = iy * static_cast<long>(g.w) + static_cast<long>(kj) -
                              static_cast<long>(g.pad);
            for (std::size_t ox = lo; ox < hi; ++ox) {
              row[ox] = src[base + static_cast<long>(ox * g.stride)];
            }
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* col, double* dx) {
  const std::size_t l = g.ho * g.wo;
  const std::size_t ncols = g.cols();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        std::size_t lo = 0, hi = 0;
        valid_range(g, kj, lo, hi);
        const double* srcrow = col + ((c * g.kh + ki) * g.kw + kj) * ncols;
        for (std::size_t n = 0; n < g.n; ++n) {
          double* dst = dx + (n * g.c + c) * g.h * g.w;
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            const double* row = srcrow + n * l + oy * g.wo;
            const long base = iy * static_cast<long>(g.w) + static_cast<long>(kj) -
                              static_cast<long>(g.pad);
            for (std::size_t ox = lo; ox < hi; ++ox) {
              dst[base + static_cast<long>(ox * g.stride)] += row[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions opts) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", weight, 4);
  if (x.dim(1) != weight.dim(1)) shape_error("conv2d", x.shape(), weight.shape());
  if (opts.stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2),
                 weight.dim(3), opts.stride, opts.padding, 0, 0};
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    shape_error("conv2d", x.shape(), weight.shape());
  }
  g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  const bool has_bias = !bias.empty();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != g.o)) {
    shape_error("conv2d", weight.shape(), bias.shape());
  }

  const std::size_t l = g.ho * g.wo;
  // Scratch buffers are fully overwritten, so they skip zero-initialization.
  std::shared_ptr<double[]> col(new double[g.ck() * g.cols()]);
  im2col(g, x.data().data(), col.get());
  std::unique_ptr<double[]> tmp(new double[g.o * g.cols()]);
  gemm_nn(g.o, g.cols(), g.ck(), weight.data().data(), col.get(), tmp.get(), true);

  std::vector<double> out(g.n * g.o * l);
  for (std::size_t o = 0; o < g.o; ++o) {
    const double b = has_bias ? bias.data()[o] : 0.0;
    for (std::size_t n = 0; n < g.n; ++n) {
      const double* src = tmp.get() + o * g.cols() + n * l;
      double* dst = out.data() + (n * g.o + o) * l;
      for (std::size_t i = 0; i < l; ++i) dst[i] = src[i] + b;
    }
  }

  const bool track = any_requires_grad({&x, &weight, &bias});
  auto node = make_node(Shape{g.n, g.o, g.ho, g.wo}, std::move(out), track, "conv2d");
  if (track) {
    auto px = x.node();
    auto pw = weight.node();
    auto pb = has_bias ? bias.node() : nullptr;
    node->backward_fn = [px, pw, pb, g, col](Node& self) {
      const std::size_t l = g.ho * g.wo;
      std::unique_ptr<double[]> gt(new double[g.o * g.cols()]);
      for (std::size_t o = 0; o < g.o; ++o) {
        for (std::size_t n = 0; n < g.n; ++n) {
          std::copy_n(self.grad.data() + (n * g.o + o) * l, l, gt.get() + o * g.cols() + n * l);
        }
      }
      if (pw->requires_grad) {
        gemm_nt(g.o, g.ck(), g.cols(), gt.get(), col.get(), pw->grad_buffer().data());
      }
      if (pb && pb->requires_grad) {
        auto& gb = pb->grad_buffer();
        for (std::size_t o = 0; o < g.o; ++o) {
          double s = 0.0;
          for (std::size_t i = 0; i < g.cols(); ++i) s += gt[o * g.cols() + i];
          gb[o] += s;
        }
      }
      if (px->requires_grad) {
        std::unique_ptr<double[]> dcol(new double[g.ck() * g.cols()]);
        gemm_tn(g.ck(), g.cols(), g.o, pw->data.data(), gt.get(), dcol.get(), true);
        col2im(g, dcol.get(), px->grad_buffer().data());
      }
    };
  }
  return Tensor(node);
}

Tensor avg_pool2d(const Tensor& x, std::size_t window) {
  require_rank("avg_pool2d", x, 4);
  if (window == 0 || x.dim(2) % window != 0 || x.dim(3) % window != 0) {
    throw ShapeError("avg_pool2d: window " + std::to_string(window) +
                     " does not tile " + to_string(x.shape()));
  }
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = h / window, wo = w / window;
  const double inv = 1.0 / static_cast<double>(window * window);
  std::vector<double> out(nc * ho * wo, 0.0);
  const auto xv = x.data();
  for (std::size_t p = 0; p < nc; ++p) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        out[(p * ho + y / window) * wo + xx / window] += xv[(p * h + y) * w + xx] * inv;
      }
    }
  }
  const bool track = any_requires_grad({&x});
  auto node = make_node(Shape{x.dim(0), x.dim(1), ho, wo}, std::move(out), track, "avg_pool2d");
  if (track) {
    auto px = x.node();
    node->backward_fn = [px, nc, h, w, ho, wo, window, inv](Node& self) {
      auto& g = px->grad_buffer();
      for (std::size_t p = 0; p < nc; ++p) {
        for (std::size_t y = 0; y < h; ++y) {
          for (std::size_t xx = 0; xx < w; ++xx) {
            g[(p * h + y) * w + xx] += self.grad[(p * ho + y / window) * wo + xx / window] * inv;
          }
        }
      }
    };
  }
  return Tensor(node);
}

Tensor upsample_nearest2d(const Tensor& x, std::size_t factor) {
  require_rank("upsample_nearest2d", x, 4);
  if (factor == 0) throw ShapeError("upsample_nearest2d: factor must be positive");
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = h * factor, wo = w * factor;
  std::vector<double> out(nc * ho * wo);
  const auto xv = x.data();
  for (std::size_t p = 0; p < nc; ++p) {
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t xx = 0; xx < wo; ++xx) {
        out[(p * ho + y) * wo + xx] = xv[(p * h + y / factor) * w + xx / factor];
      }
    }
  }
  const bool track = any_requires_grad({&x});
  auto node =
      make_node(Shape{x.dim(0), x.dim(1), ho, wo}, std::move(out), track, "upsample_nearest2d");
  if (track) {
    auto px = x.node();
    node->backward_fn = [px, nc, h, w, ho, wo, factor](Node& self) {
      auto& g = px->grad_buffer();
      for (std::size_t p = 0; p < nc; ++p) {
        for (std::size_t y = 0; y < ho; ++y) {
          for (std::size_t xx = 0; xx < wo; ++xx) {
            g[(p * h + y / factor) * w + xx / factor] += self.grad[(p * ho + y) * wo + xx];
          }
        }
      }
    };
  }
  return Tensor(node);
}

Tensor add_channel(const Tensor& x, const Tensor& v) {
  require_rank("add_channel", x, 4);
  require_rank("add_channel", v, 2);
  if (v.dim(0) != x.dim(0) || v.dim(1) != x.dim(1)) shape_error("add_channel", x.shape(), v.shape());
  const std::size_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<double> out(x.data().begin(), x.data().end());
  const auto vv = v.data();
  for (std::size_t p = 0; p < nc; ++p) {
    for (std::size_t i = 0; i < hw; ++i) out[p * hw + i] += vv[p];
  }
  const bool track = any_requires_grad({&x, &v});
  auto node = make_node(x.shape(), std::move(out), track, "add_channel");
  if (track) {
    auto px = x.node();
    auto pv = v.node();
    node->backward_fn = [px, pv, nc, hw](Node& self) {
      if (px->requires_grad) px->accumulate(self.grad);
      if (pv->requires_grad) {
        auto& g = pv->grad_buffer();
        for (std::size_t p = 0; p < nc; ++p) {
          double s = 0.0;
          for (std::size_t i = 0; i < hw; ++i) s += self.grad[p * hw + i];
          g[p] += s;
        }
      }
    };
  }
  return Tensor(node);
}

// ---- losses ---------------------------------------------------------------------

Tensor bce_with_logits(const Tensor& logits, std::span<const double> labels,
                       std::span<const double> weights) {
  const std::size_t n = logits.size();
  if (n == 0) throw ShapeError("bce_with_logits: empty batch");
  if (labels.size() != n) {
    throw ShapeError("bce_with_logits: " + std::to_string(n) + " logits vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (!weights.empty() && weights.size() != n) {
    throw ShapeError("bce_with_logits: weight count does not match batch");
  }
  const auto z = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    const double l = std::max(z[i], 0.0) - z[i] * labels[i] + std::log1p(std::exp(-std::abs(z[i])));
    total += w * l;
  }
  const bool track = any_requires_grad({&logits});
  auto node = make_node(Shape{}, {total / static_cast<double>(n)}, track, "bce_with_logits");
  if (track) {
    auto pz = logits.node();
    std::vector<double> y(labels.begin(), labels.end());
    std::vector<double> w(weights.begin(), weights.end());
    node->backward_fn = [pz, y, w, n](Node& self) {
      auto& g = pz->grad_buffer();
      const double scale = self.grad[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double wi = w.empty() ? 1.0 : w[i];
        g[i] += scale * wi * (stable_sigmoid(pz->data[i]) - y[i]);
      }
    };
  }
  return Tensor(node);
}

}  // namespace diffupt::num
