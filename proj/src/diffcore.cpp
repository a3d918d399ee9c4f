#include "tsclab/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "tsclab/errors.hpp"

#include <json.hpp>

namespace tsclab {

namespace detail {

struct TensorNode {
  int rows = 0;
  int cols = 0;
  std::vector<double> val;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;
};

}  // namespace detail

using detail::TensorNode;

namespace {

thread_local int g_no_grad_depth = 0;

void ensure_grad(TensorNode& n) {
  if (n.grad.empty()) n.grad.assign(n.val.size(), 0.0);
}

// Accumulate into a parent, skipping constants.
inline void acc(TensorNode* p, int idx, double v) {
  if (!p->requires_grad) return;
  ensure_grad(*p);
  p->grad[idx] += v;
}

inline std::vector<double>* grad_buffer(TensorNode* p) {
  if (!p->requires_grad) return nullptr;
  ensure_grad(*p);
  return &p->grad;
}

}  // namespace

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

bool grad_enabled() { return g_no_grad_depth == 0; }

Tensor::Tensor() = default;
Tensor::Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

class OpBuilder {
 public:
  static Tensor leaf(int rows, int cols, std::vector<double> val, bool requires_grad) {
    auto node = std::make_shared<TensorNode>();
    node->rows = rows;
    node->cols = cols;
    node->val = std::move(val);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor make(int rows, int cols, std::vector<double> val,
                     std::initializer_list<Tensor> parents,
                     std::function<void(TensorNode&)> backprop) {
    return make(rows, cols, std::move(val),
                std::vector<Tensor>(parents.begin(), parents.end()),
                std::move(backprop));
  }

  static Tensor make(int rows, int cols, std::vector<double> val,
                     const std::vector<Tensor>& parents,
                     std::function<void(TensorNode&)> backprop) {
    auto node = std::make_shared<TensorNode>();
    node->rows = rows;
    node->cols = cols;
    node->val = std::move(val);
    bool any = false;
    for (const Tensor& p : parents) any = any || p.node()->requires_grad;
    if (any && grad_enabled()) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const Tensor& p : parents) node->parents.push_back(p.node_);
      node->backprop = std::move(backprop);
    }
    return Tensor(std::move(node));
  }
};

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  return OpBuilder::leaf(rows, cols, std::vector<double>(rows * cols, 0.0),
                         requires_grad);
}

Tensor Tensor::full(int rows, int cols, double value, bool requires_grad) {
  return OpBuilder::leaf(rows, cols, std::vector<double>(rows * cols, value),
                         requires_grad);
}

Tensor Tensor::from(std::vector<double> data, int rows, int cols, bool requires_grad) {
  if (static_cast<int>(data.size()) != rows * cols) {
    throw ShapeMismatch("tensor data does not match its shape");
  }
  return OpBuilder::leaf(rows, cols, std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return OpBuilder::leaf(1, 1, {value}, requires_grad);
}

Tensor Tensor::uniform(int rows, int cols, double lo, double hi, Rng& rng,
                       bool requires_grad) {
  std::vector<double> data(rows * cols);
  for (double& d : data) d = rng.uniform(lo, hi);
  return OpBuilder::leaf(rows, cols, std::move(data), requires_grad);
}

int Tensor::rows() const { return node_->rows; }
int Tensor::cols() const { return node_->cols; }
int Tensor::size() const { return static_cast<int>(node_->val.size()); }

const std::vector<double>& Tensor::values() const { return node_->val; }
std::vector<double>& Tensor::mutable_values() { return node_->val; }

double Tensor::operator()(int r, int c) const { return node_->val[r * node_->cols + c]; }

double Tensor::item() const {
  if (size() != 1) throw ShapeMismatch("item() requires a 1x1 tensor");
  return node_->val[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
  if (node_->grad.empty()) throw MissingGrad("tensor has no accumulated gradient");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detached() const {
  return OpBuilder::leaf(rows(), cols(), node_->val, false);
}

void Tensor::backward() const {
  if (!node_ || size() != 1) {
    throw NonScalarLoss("backward() requires a scalar loss");
  }
  // post-order over the recorded graph
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* n;
    std::size_t next = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get()});
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      TensorNode* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  // interior grads are per-pass scratch; only leaves accumulate across calls
  for (TensorNode* n : order) {
    if (n->backprop) n->grad.assign(n->val.size(), 0.0);
  }
  ensure_grad(*node_);
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

namespace {

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeMismatch(std::string(op) + ": undefined tensor");
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.cols() != b.rows()) throw ShapeMismatch("matmul: inner dimensions differ");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv + p * n;
      double* orow = out.data() + i * n;
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  TensorNode* an = a.node();
  TensorNode* bn = b.node();
  return OpBuilder::make(m, n, std::move(out), {a, b}, [an, bn, m, k, n](TensorNode& o) {
    const double* g = o.grad.data();
    if (auto* ga = grad_buffer(an)) {
      const double* bv = bn->val.data();
      for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
          double s = 0.0;
          const double* grow = g + i * n;
          const double* brow = bv + p * n;
          for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
          (*ga)[i * k + p] += s;
        }
      }
    }
    if (auto* gb = grad_buffer(bn)) {
      const double* av = an->val.data();
      for (int p = 0; p < k; ++p) {
        for (int i = 0; i < m; ++i) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          const double* grow = g + i * n;
          double* grow_b = gb->data() + p * n;
          for (int j = 0; j < n; ++j) grow_b[j] += aip * grow[j];
        }
      }
    }
  });
}

namespace {

enum class BroadcastKind { Same, Row, Scalar };

BroadcastKind broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return BroadcastKind::Same;
  if (b.rows() == 1 && b.cols() == a.cols()) return BroadcastKind::Row;
  if (b.size() == 1) return BroadcastKind::Scalar;
  throw ShapeMismatch(std::string(op) + ": incompatible shapes");
}

Tensor add_impl(const Tensor& a, const Tensor& b, double sign) {
  BroadcastKind kind = broadcast_kind(a, b, sign > 0 ? "add" : "sub");
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  const int rows = a.rows(), cols = a.cols();
  switch (kind) {
    case BroadcastKind::Same:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += sign * bv[i];
      break;
    case BroadcastKind::Row:
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) out[i * cols + j] += sign * bv[j];
      }
      break;
    case BroadcastKind::Scalar:
      for (double& v : out) v += sign * bv[0];
      break;
  }
  TensorNode* an = a.node();
  TensorNode* bn = b.node();
  return OpBuilder::make(rows, cols, std::move(out), {a, b},
                         [an, bn, kind, sign, rows, cols](TensorNode& o) {
    const double* g = o.grad.data();
    if (auto* ga = grad_buffer(an)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*ga)[i] += g[i];
    }
    if (auto* gb = grad_buffer(bn)) {
      switch (kind) {
        case BroadcastKind::Same:
          for (std::size_t i = 0; i < o.grad.size(); ++i) (*gb)[i] += sign * g[i];
          break;
        case BroadcastKind::Row:
          for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < cols; ++j) (*gb)[j] += sign * g[i * cols + j];
          }
          break;
        case BroadcastKind::Scalar: {
          double s = 0.0;
          for (std::size_t i = 0; i < o.grad.size(); ++i) s += g[i];
          (*gb)[0] += sign * s;
          break;
        }
      }
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_impl(a, b, 1.0); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_impl(a, b, -1.0); }

Tensor scalar_mul(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= c;
  TensorNode* an = a.node();
  return OpBuilder::make(a.rows(), a.cols(), std::move(out), {a}, [an, c](TensorNode& o) {
    if (auto* ga = grad_buffer(an)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*ga)[i] += c * o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.size() == 1 && b.size() != 1) return mul(b, a);
  bool scalar_b = b.size() == 1;
  if (!scalar_b && (a.rows() != b.rows() || a.cols() != b.cols())) {
    throw ShapeMismatch("mul: incompatible shapes");
  }
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  if (scalar_b) {
    for (double& v : out) v *= bv[0];
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  }
  TensorNode* an = a.node();
  TensorNode* bn = b.node();
  return OpBuilder::make(a.rows(), a.cols(), std::move(out), {a, b},
                         [an, bn, scalar_b](TensorNode& o) {
    const double* g = o.grad.data();
    if (auto* ga = grad_buffer(an)) {
      if (scalar_b) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) (*ga)[i] += g[i] * bn->val[0];
      } else {
        for (std::size_t i = 0; i < o.grad.size(); ++i) (*ga)[i] += g[i] * bn->val[i];
      }
    }
    if (auto* gb = grad_buffer(bn)) {
      if (scalar_b) {
        double s = 0.0;
        for (std::size_t i = 0; i < o.grad.size(); ++i) s += g[i] * an->val[i];
        (*gb)[0] += s;
      } else {
        for (std::size_t i = 0; i < o.grad.size(); ++i) (*gb)[i] += g[i] * an->val[i];
      }
    }
  });
}

Tensor div_scalar(const Tensor& a, const Tensor& s) {
  if (s.size() != 1) throw ShapeMismatch("div_scalar: divisor must be 1x1");
  const double sv = s.values()[0];
  std::vector<double> out(a.values());
  for (double& v : out) v /= sv;
  TensorNode* an = a.node();
  TensorNode* sn = s.node();
  return OpBuilder::make(a.rows(), a.cols(), std::move(out), {a, s},
                         [an, sn](TensorNode& o) {
    const double sv = sn->val[0];
    const double* g = o.grad.data();
    if (auto* ga = grad_buffer(an)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*ga)[i] += g[i] / sv;
    }
    if (auto* gs = grad_buffer(sn)) {
      double acc_v = 0.0;
      for (std::size_t i = 0; i < o.grad.size(); ++i) acc_v += g[i] * an->val[i];
      (*gs)[0] -= acc_v / (sv * sv);
    }
  });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ShapeMismatch("concat: no inputs");
  if (axis != 0 && axis != 1) throw ShapeMismatch("concat: axis must be 0 or 1");
  int rows = parts[0].rows(), cols = parts[0].cols();
  int total = 0;
  for (const Tensor& t : parts) {
    check_defined(t, "concat");
    if (axis == 0 && t.cols() != cols) throw ShapeMismatch("concat: column mismatch");
    if (axis == 1 && t.rows() != rows) throw ShapeMismatch("concat: row mismatch");
    total += axis == 0 ? t.rows() : t.cols();
  }
  int out_rows = axis == 0 ? total : rows;
  int out_cols = axis == 0 ? cols : total;
  std::vector<double> out(static_cast<std::size_t>(out_rows) * out_cols);
  int offset = 0;
  for (const Tensor& t : parts) {
    const auto& tv = t.values();
    if (axis == 0) {
      std::copy(tv.begin(), tv.end(), out.begin() + offset * out_cols);
      offset += t.rows();
    } else {
      for (int i = 0; i < rows; ++i) {
        std::copy(tv.begin() + i * t.cols(), tv.begin() + (i + 1) * t.cols(),
                  out.begin() + i * out_cols + offset);
      }
      offset += t.cols();
    }
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  std::vector<TensorNode*> nodes;
  std::vector<int> sizes;
  for (const Tensor& t : parts) {
    nodes.push_back(t.node());
    sizes.push_back(axis == 0 ? t.rows() : t.cols());
  }
  return OpBuilder::make(out_rows, out_cols, std::move(out), parents,
                         [nodes, sizes, axis, out_cols, rows](TensorNode& o) {
    int offset = 0;
    for (std::size_t p = 0; p < nodes.size(); ++p) {
      if (auto* gp = grad_buffer(nodes[p])) {
        if (axis == 0) {
          for (int i = 0; i < sizes[p] * out_cols; ++i) {
            (*gp)[i] += o.grad[offset * out_cols + i];
          }
        } else {
          for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < sizes[p]; ++j) {
              (*gp)[i * sizes[p] + j] += o.grad[i * out_cols + offset + j];
            }
          }
        }
      }
      offset += sizes[p];
    }
  });
}

Tensor transpose(const Tensor& a) {
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
  }
  TensorNode* an = a.node();
  return OpBuilder::make(n, m, std::move(out), {a}, [an, m, n](TensorNode& o) {
    if (auto* ga = grad_buffer(an)) {
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) (*ga)[i * n + j] += o.grad[j * m + i];
      }
    }
  });
}

Tensor row(const Tensor& a, int r) {
  if (r < 0 || r >= a.rows()) throw ShapeMismatch("row: index out of range");
  const int n = a.cols();
  std::vector<double> out(a.values().begin() + r * n, a.values().begin() + (r + 1) * n);
  TensorNode* an = a.node();
  return OpBuilder::make(1, n, std::move(out), {a}, [an, r, n](TensorNode& o) {
    if (auto* ga = grad_buffer(an)) {
      for (int j = 0; j < n; ++j) (*ga)[r * n + j] += o.grad[j];
    }
  });
}

Tensor at(const Tensor& a, int r, int c) {
  if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols()) {
    throw ShapeMismatch("at: index out of range");
  }
  const int idx = r * a.cols() + c;
  TensorNode* an = a.node();
  return OpBuilder::make(1, 1, {a.values()[idx]}, {a}, [an, idx](TensorNode& o) {
    acc(an, idx, o.grad[0]);
  });
}

Tensor take_per_row(const Tensor& a, const std::vector<int>& cols) {
  if (static_cast<int>(cols.size()) != a.rows()) {
    throw ShapeMismatch("take_per_row: one column index per row required");
  }
  const int n = a.cols();
  std::vector<double> out(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] < 0 || cols[i] >= n) throw ShapeMismatch("take_per_row: index out of range");
    out[i] = a.values()[i * n + cols[i]];
  }
  TensorNode* an = a.node();
  return OpBuilder::make(a.rows(), 1, std::move(out), {a}, [an, cols, n](TensorNode& o) {
    if (auto* ga = grad_buffer(an)) {
      for (std::size_t i = 0; i < cols.size(); ++i) {
        (*ga)[i * n + cols[i]] += o.grad[i];
      }
    }
  });
}

namespace {

Tensor elementwise(const Tensor& a, double (*fwd)(double),
                   double (*dval)(double x, double y)) {
  std::vector<double> out(a.values());
  for (double& v : out) v = fwd(v);
  TensorNode* an = a.node();
  auto out_copy = out;  // y values available to the derivative
  return OpBuilder::make(a.rows(), a.cols(), std::move(out), {a},
                         [an, dval, out_copy](TensorNode& o) {
    if (auto* ga = grad_buffer(an)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        (*ga)[i] += o.grad[i] * dval(an->val[i], out_copy[i]);
      }
    }
  });
}

}  // namespace

Tensor relu(const Tensor& a) {
  return elementwise(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });  // subgradient 0 at 0
}

Tensor sigmoid(const Tensor& a) {
  return elementwise(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& a) {
  return elementwise(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
  return elementwise(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor softmax(const Tensor& a, int axis) {
  if (axis != 0 && axis != 1) throw ShapeMismatch("softmax: axis must be 0 or 1");
  const int rows = a.rows(), cols = a.cols();
  std::vector<double> out(a.values());
  const int slices = axis == 1 ? rows : cols;
  const int len = axis == 1 ? cols : rows;
  const int stride = axis == 1 ? 1 : cols;
  auto idx = [&](int s, int k) { return axis == 1 ? s * cols + k : k * cols + s; };
  for (int s = 0; s < slices; ++s) {
    double mx = out[idx(s, 0)];
    for (int k = 1; k < len; ++k) mx = std::max(mx, out[idx(s, k)]);
    double total = 0.0;
    for (int k = 0; k < len; ++k) {
      double e = std::exp(out[idx(s, k)] - mx);
      out[idx(s, k)] = e;
      total += e;
    }
    for (int k = 0; k < len; ++k) out[idx(s, k)] /= total;
  }
  (void)stride;
  TensorNode* an = a.node();
  auto soft = out;
  return OpBuilder::make(rows, cols, std::move(out), {a},
                         [an, soft, slices, len, axis, cols](TensorNode& o) {
    auto idx = [&](int s, int k) { return axis == 1 ? s * cols + k : k * cols + s; };
    if (auto* ga = grad_buffer(an)) {
      for (int s = 0; s < slices; ++s) {
        double dot = 0.0;
        for (int k = 0; k < len; ++k) dot += o.grad[idx(s, k)] * soft[idx(s, k)];
        for (int k = 0; k < len; ++k) {
          (*ga)[idx(s, k)] += soft[idx(s, k)] * (o.grad[idx(s, k)] - dot);
        }
      }
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  TensorNode* an = a.node();
  return OpBuilder::make(1, 1, {total}, {a}, [an](TensorNode& o) {
    if (auto* ga = grad_buffer(an)) {
      for (double& g : *ga) g += o.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeMismatch("mean: empty tensor");
  double total = 0.0;
  for (double v : a.values()) total += v;
  const double inv = 1.0 / a.size();
  TensorNode* an = a.node();
  return OpBuilder::make(1, 1, {total * inv}, {a}, [an, inv](TensorNode& o) {
    if (auto* ga = grad_buffer(an)) {
      for (double& g : *ga) g += o.grad[0] * inv;
    }
  });
}

Tensor mean_rows(const Tensor& a) {
  if (a.rows() == 0) throw ShapeMismatch("mean_rows: empty tensor");
  const int rows = a.rows(), cols = a.cols();
  std::vector<double> out(cols, 0.0);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) out[j] += a.values()[i * cols + j];
  }
  const double inv = 1.0 / rows;
  for (double& v : out) v *= inv;
  TensorNode* an = a.node();
  return OpBuilder::make(1, cols, std::move(out), {a},
                         [an, rows, cols, inv](TensorNode& o) {
    if (auto* ga = grad_buffer(an)) {
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) (*ga)[i * cols + j] += o.grad[j] * inv;
      }
    }
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeMismatch("mse: shapes differ");
  }
  if (a.size() == 0) throw ShapeMismatch("mse: empty tensor");
  double total = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    double d = a.values()[i] - b.values()[i];
    total += d * d;
  }
  const double inv = 1.0 / a.size();
  TensorNode* an = a.node();
  TensorNode* bn = b.node();
  return OpBuilder::make(1, 1, {total * inv}, {a, b}, [an, bn, inv](TensorNode& o) {
    const double scale = 2.0 * inv * o.grad[0];
    auto* ga = grad_buffer(an);
    auto* gb = grad_buffer(bn);
    for (std::size_t i = 0; i < an->val.size(); ++i) {
      double d = scale * (an->val[i] - bn->val[i]);
      if (ga) (*ga)[i] += d;
      if (gb) (*gb)[i] -= d;
    }
  });
}

Tensor l1_norm(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += std::abs(v);
  TensorNode* an = a.node();
  return OpBuilder::make(1, 1, {total}, {a}, [an](TensorNode& o) {
    if (auto* ga = grad_buffer(an)) {
      for (std::size_t i = 0; i < an->val.size(); ++i) {
        double x = an->val[i];
        double s = x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);  // subgradient 0 at 0
        (*ga)[i] += o.grad[0] * s;
      }
    }
  });
}

Tensor l2_norm(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v * v;
  const double norm = std::sqrt(total);
  TensorNode* an = a.node();
  return OpBuilder::make(1, 1, {norm}, {a}, [an, norm](TensorNode& o) {
    if (norm == 0.0) return;  // subgradient 0 at the origin
    if (auto* ga = grad_buffer(an)) {
      for (std::size_t i = 0; i < an->val.size(); ++i) {
        (*ga)[i] += o.grad[0] * an->val[i] / norm;
      }
    }
  });
}

Adam::Adam(std::vector<Tensor> params, double lr) : params_(std::move(params)), lr_(lr) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].size(), 0.0);
    v_[i].assign(params_[i].size(), 0.0);
  }
}

void Adam::step() {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  for (const Tensor& p : params_) {
    if (p.size() > 0 && !p.has_grad()) {
      throw MissingGrad("adam step before backward populated every parameter");
    }
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (p.size() == 0) continue;
    const auto& g = p.grad();
    auto& val = p.mutable_values();
    for (std::size_t j = 0; j < val.size(); ++j) {
      m_[i][j] = kBeta1 * m_[i][j] + (1.0 - kBeta1) * g[j];
      v_[i][j] = kBeta2 * v_[i][j] + (1.0 - kBeta2) * g[j] * g[j];
      double mhat = m_[i][j] / bc1;
      double vhat = v_[i][j] / bc2;
      val[j] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
    }
    p.zero_grad();
  }
}

namespace {

struct Numeric {
  double central;
  double d_plus;
  double d_minus;
};

Numeric numeric_slope(const std::function<double()>& eval, double f0, double* cell,
                      double eps) {
  const double orig = *cell;
  *cell = orig + eps;
  double fp = eval();
  *cell = orig - eps;
  double fm = eval();
  *cell = orig;
  return {(fp - fm) / (2.0 * eps), (fp - f0) / eps, (f0 - fm) / eps};
}

double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

// A point counts as a kink when the analytic value agrees with one of the
// one-sided slopes far better than with the central difference; that is the
// signature of crossing a non-differentiable point, not of a wrong gradient.
void compare_element(GradCheckResult& result, double analytic, const Numeric& numeric,
                     int flat_index) {
  double rel_central = rel_diff(analytic, numeric.central);
  double best_side =
      std::min(rel_diff(analytic, numeric.d_plus), rel_diff(analytic, numeric.d_minus));
  if (best_side < 1e-3 && rel_central > 10.0 * std::max(best_side, 1e-6)) {
    result.excluded.push_back(flat_index);
    return;
  }
  result.max_rel_error = std::max(result.max_rel_error, rel_central);
  ++result.checked;
}

}  // namespace

GradCheckResult gradcheck(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                          double eps) {
  auto wrapped = [&]() { return f(x); };
  return gradcheck_params(wrapped, {x}, eps);
}

GradCheckResult gradcheck_params(const std::function<Tensor()>& f,
                                 std::vector<Tensor> params, double eps) {
  for (Tensor& p : params) {
    p.node()->requires_grad = true;
    p.zero_grad();
  }
  Tensor loss = f();
  if (loss.size() != 1) throw NonScalarLoss("gradcheck requires a scalar function");
  loss.backward();
  const double f0 = loss.item();
  std::vector<std::vector<double>> analytic;
  for (Tensor& p : params) {
    analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.size(), 0.0));
    p.zero_grad();
  }
  auto eval = [&]() {
    NoGradGuard guard;
    return f().item();
  };
  GradCheckResult result;
  int flat_base = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].mutable_values();
    for (std::size_t j = 0; j < vals.size(); ++j) {
      Numeric n = numeric_slope(eval, f0, &vals[j], eps);
      compare_element(result, analytic[pi][j], n, flat_base + static_cast<int>(j));
    }
    flat_base += params[pi].size();
  }
  return result;
}

void save_tensors(const std::filesystem::path& path, const NamedTensors& tensors,
                  const std::map<std::string, std::string>& meta) {
  nlohmann::ordered_json doc;
  doc["format"] = "tsclab-tensors-v1";
  doc["meta"] = meta;
  auto& out = doc["tensors"] = nlohmann::ordered_json::object();
  for (const auto& [name, tensor] : tensors) {
    out[name] = {{"shape", {tensor.rows(), tensor.cols()}}, {"data", tensor.values()}};
  }
  std::ofstream file(path);
  if (!file) throw std::runtime_error("cannot write " + path.string());
  file << doc.dump() << "\n";
}

LoadedTensors load_tensors(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw ParseError("cannot open " + path.string());
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(file);
    LoadedTensors loaded;
    if (doc.value("format", "") != "tsclab-tensors-v1") {
      throw ParseError("unrecognized tensor file format in " + path.string());
    }
    for (const auto& [key, value] : doc["meta"].items()) {
      loaded.meta[key] = value.get<std::string>();
    }
    for (const auto& [name, entry] : doc["tensors"].items()) {
      int rows = entry["shape"][0].get<int>();
      int cols = entry["shape"][1].get<int>();
      loaded.tensors.emplace(
          name, Tensor::from(entry["data"].get<std::vector<double>>(), rows, cols));
    }
    return loaded;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed tensor file " + path.string() + ": " + e.what());
  }
}

}  // namespace tsclab
