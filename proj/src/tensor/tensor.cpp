#include "hekp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "hekp/error.hpp"

namespace hekp::ad {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads self.grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";
};

namespace {

thread_local bool g_grad_enabled = true;

std::vector<double>& grad_of(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.data.size(), 0.0);
  return n.grad;
}

[[noreturn]] void dim_error(std::string_view op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                       shape_str(b));
}

[[noreturn]] void dim_error(std::string_view op, const Shape& a, const std::string& what) {
  throw DimensionError(std::string(op) + ": " + what + " (got " + shape_str(a) + ")");
}

void require_rank(std::string_view op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) dim_error(op, t.shape(), "expected rank " + std::to_string(rank));
}

// C[M x N] += A[M x K] * B[K x N]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[M x N] += A[M x K] * B[N x K]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * n + j] += acc;
    }
  }
}

// C[M x N] += A[K x M]^T * B[K x N]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// Describes the 1-D lines of a rank<=2 tensor along `axis`.
struct Lines {
  std::size_t count;
  std::size_t length;
  std::size_t stride;
  std::size_t base_step;  // offset between successive line starts
};

Lines lines_along(std::string_view op, const Shape& shape, std::size_t axis) {
  if (shape.size() == 1 && axis == 0) return {1, shape[0], 1, 0};
  if (shape.size() == 2 && axis == 1) return {shape[0], shape[1], 1, shape[1]};
  if (shape.size() == 2 && axis == 0) return {shape[1], shape[0], shape[1], 1};
  dim_error(op, shape, "unsupported axis " + std::to_string(axis));
}

Shape reduced_shape(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t d = 0; d < shape.size(); ++d)
    if (d != axis) out.push_back(shape[d]);
  return out;
}

}  // namespace

// Creates result nodes and wires backward closures when recording is active.
struct OpBuilder {
  static Tensor make(Shape shape, std::vector<double> data,
                     std::initializer_list<const Tensor*> inputs, const char* op,
                     std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    bool record = false;
    if (g_grad_enabled) {
      for (const Tensor* t : inputs) record = record || t->requires_grad();
    }
    if (record) {
      node->requires_grad = true;
      for (const Tensor* t : inputs) node->parents.push_back(t->node_);
      node->backward_fn = std::move(fn);
    }
    return Tensor(std::move(node));
  }
  static Tensor make(Shape shape, std::vector<double> data, const std::vector<Tensor>& inputs,
                     const char* op, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    bool record = false;
    if (g_grad_enabled) {
      for (const Tensor& t : inputs) record = record || t.requires_grad();
    }
    if (record) {
      node->requires_grad = true;
      for (const Tensor& t : inputs) node->parents.push_back(t.node_);
      node->backward_fn = std::move(fn);
    }
    return Tensor(std::move(node));
  }
};

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? " x " : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

// ---- Tensor ------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(shape_numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape_numel(shape))
    throw DimensionError("Tensor::from: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

Tensor Tensor::randn(Shape shape, double stddev, std::mt19937_64& rng, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = dist(rng);
  return from(std::move(shape), std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->data.size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2) dim_error("rows", shape(), "expected rank 2");
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) dim_error("cols", shape(), "expected rank 2");
  return shape()[1];
}

std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (numel() != 1) dim_error("item", shape(), "expected a single element");
  return node_->data[0];
}

double Tensor::at(std::size_t i) const { return node_->data.at(i); }
double Tensor::at(std::size_t r, std::size_t c) const { return node_->data.at(r * cols() + c); }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return grad_of(*node_); }

void Tensor::zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }
void Tensor::clear_grad() {
  node_->grad.clear();
  node_->grad.shrink_to_fit();
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }
Tensor Tensor::clone(bool requires_grad) const { return from(shape(), node_->data, requires_grad); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_mode_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw DimensionError("backward: loss must hold a single element, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; reversed it is a valid topological order.
  std::vector<Node*> order;
  std::unordered_set<const Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node_.get(), 0);
  seen.insert(loss.node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  grad_of(*loss.node_)[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

// ---- primitives --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) dim_error("matmul", a.shape(), b.shape());
  std::vector<double> out(m * n, 0.0);
  gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data());
  return OpBuilder::make({m, n}, std::move(out), {&a, &b}, "matmul", [m, n, k](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) gemm_nt(m, k, n, self.grad.data(), pb.data.data(), grad_of(pa).data());
    if (pb.requires_grad) gemm_tn(k, n, m, pa.data.data(), self.grad.data(), grad_of(pb).data());
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.data().begin(), a.data().end());
    auto bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
    return OpBuilder::make(a.shape(), std::move(out), {&a, &b}, "add", [](Node& self) {
      for (auto& p : self.parents) {
        if (!p->requires_grad) continue;
        auto& g = grad_of(*p);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    });
  }
  if (a.rank() == 2 && b.rank() == 1 && b.shape()[0] == a.cols()) {
    const std::size_t n = a.rows(), m = a.cols();
    std::vector<double> out(a.data().begin(), a.data().end());
    auto bd = b.data();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) out[r * m + c] += bd[c];
    return OpBuilder::make(a.shape(), std::move(out), {&a, &b}, "add_bias", [n, m](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) {
        auto& g = grad_of(pa);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
      if (pb.requires_grad) {
        auto& g = grad_of(pb);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < m; ++c) g[c] += self.grad[r * m + c];
      }
    });
  }
  dim_error("add", a.shape(), b.shape());
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) dim_error("sub", a.shape(), b.shape());
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  return OpBuilder::make(a.shape(), std::move(out), {&a, &b}, "sub", [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = grad_of(pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = grad_of(pb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) dim_error("mul", a.shape(), b.shape());
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  return OpBuilder::make(a.shape(), std::move(out), {&a, &b}, "mul", [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = grad_of(pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = grad_of(pb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

Tensor scalar_mul(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= s;
  return OpBuilder::make(a.shape(), std::move(out), {&a}, "scalar_mul", [s](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v += s;
  return OpBuilder::make(a.shape(), std::move(out), {&a}, "add_scalar", [](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts[0].shape();
  const std::size_t rank = first.size();
  if (rank == 0 || rank > 2 || axis >= rank) dim_error("concat", first, "unsupported axis");
  for (const Tensor& p : parts) {
    if (p.rank() != rank) dim_error("concat", first, p.shape());
    for (std::size_t d = 0; d < rank; ++d)
      if (d != axis && p.shape()[d] != first[d]) dim_error("concat", first, p.shape());
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) out_shape[axis] += p.shape()[axis];

  std::vector<double> out(shape_numel(out_shape));
  // Offsets of each part along the concatenation axis.
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    offsets.push_back(off);
    off += p.shape()[axis];
  }
  const std::size_t total = out_shape[axis];
  const std::size_t rows = rank == 2 ? out_shape[0] : 1;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto src = parts[k].data();
    if (axis == 0) {
      std::copy(src.begin(), src.end(), out.begin() + offsets[k] * (rank == 2 ? out_shape[1] : 1));
    } else {
      const std::size_t w = parts[k].shape()[1];
      for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(src.begin() + r * w, w, out.begin() + r * total + offsets[k]);
    }
  }
  return OpBuilder::make(out_shape, std::move(out), parts, "concat",
                         [axis, offsets, total, rows, rank](Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = grad_of(p);
      if (axis == 0) {
        const std::size_t start = offsets[k] * (rank == 2 ? self.shape[1] : 1);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[start + i];
      } else {
        const std::size_t w = p.shape[1];
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < w; ++c) g[r * w + c] += self.grad[r * total + offsets[k] + c];
      }
    }
  });
}

namespace {

// Elementwise unary op; `deriv(x, y)` is dy/dx.
template <typename F, typename D>
Tensor unary(const Tensor& a, const char* name, F forward, D deriv) {
  auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  return OpBuilder::make(a.shape(), std::move(out), {&a}, name, [deriv](Node& self) {
    Node& p = *self.parents[0];
    auto& g = grad_of(p);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(p.data[i], self.data[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor sigmoid(const Tensor& a) {
  return unary(a, "sigmoid", stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor reciprocal(const Tensor& a) {
  return unary(
      a, "reciprocal", [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

Tensor log_sigmoid(const Tensor& a) {
  return unary(
      a, "log_sigmoid",
      [](double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return stable_sigmoid(-x); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor custom_unary(const Tensor& a, const std::function<double(double)>& forward,
                    const std::function<double(double, double)>& derivative,
                    std::string_view) {
  return unary(a, "custom", forward, derivative);
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  const Lines ln = lines_along("softmax", a.shape(), axis);
  auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t l = 0; l < ln.count; ++l) {
    const std::size_t base = l * ln.base_step;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ln.length; ++i) mx = std::max(mx, in[base + i * ln.stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < ln.length; ++i) {
      const double e = std::exp(in[base + i * ln.stride] - mx);
      out[base + i * ln.stride] = e;
      total += e;
    }
    for (std::size_t i = 0; i < ln.length; ++i) out[base + i * ln.stride] /= total;
  }
  return OpBuilder::make(a.shape(), std::move(out), {&a}, "softmax", [ln](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t l = 0; l < ln.count; ++l) {
      const std::size_t base = l * ln.base_step;
      double dot = 0.0;
      for (std::size_t i = 0; i < ln.length; ++i) {
        const std::size_t k = base + i * ln.stride;
        dot += self.grad[k] * self.data[k];
      }
      for (std::size_t i = 0; i < ln.length; ++i) {
        const std::size_t k = base + i * ln.stride;
        g[k] += self.data[k] * (self.grad[k] - dot);
      }
    }
  });
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  const Lines ln = lines_along("log_softmax", a.shape(), axis);
  auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t l = 0; l < ln.count; ++l) {
    const std::size_t base = l * ln.base_step;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ln.length; ++i) mx = std::max(mx, in[base + i * ln.stride]);
    double total = 0.0;
    for (std::size_t i = 0; i < ln.length; ++i) total += std::exp(in[base + i * ln.stride] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t i = 0; i < ln.length; ++i)
      out[base + i * ln.stride] = in[base + i * ln.stride] - lse;
  }
  return OpBuilder::make(a.shape(), std::move(out), {&a}, "log_softmax", [ln](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t l = 0; l < ln.count; ++l) {
      const std::size_t base = l * ln.base_step;
      double total = 0.0;
      for (std::size_t i = 0; i < ln.length; ++i) total += self.grad[base + i * ln.stride];
      for (std::size_t i = 0; i < ln.length; ++i) {
        const std::size_t k = base + i * ln.stride;
        g[k] += self.grad[k] - std::exp(self.data[k]) * total;
      }
    }
  });
}

namespace {

Tensor reduce_axis(const Tensor& a, std::size_t axis, double scale_by_length, const char* name) {
  const Lines ln = lines_along(name, a.shape(), axis);
  const double scale = scale_by_length > 0 ? 1.0 / static_cast<double>(ln.length) : 1.0;
  auto in = a.data();
  std::vector<double> out(ln.count, 0.0);
  for (std::size_t l = 0; l < ln.count; ++l) {
    double acc = 0.0;
    for (std::size_t i = 0; i < ln.length; ++i) acc += in[l * ln.base_step + i * ln.stride];
    out[l] = acc * scale;
  }
  return OpBuilder::make(reduced_shape(a.shape(), axis), std::move(out), {&a}, name,
                         [ln, scale](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t l = 0; l < ln.count; ++l)
      for (std::size_t i = 0; i < ln.length; ++i)
        g[l * ln.base_step + i * ln.stride] += self.grad[l] * scale;
  });
}

}  // namespace

Tensor sum(const Tensor& a, std::size_t axis) { return reduce_axis(a, axis, 0.0, "sum"); }
Tensor mean(const Tensor& a, std::size_t axis) { return reduce_axis(a, axis, 1.0, "mean"); }

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return OpBuilder::make({}, {acc}, {&a}, "sum_all", [](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean_all(const Tensor& a) {
  if (a.numel() == 0) dim_error("mean_all", a.shape(), "empty tensor");
  return scalar_mul(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices) {
  require_rank("embedding_lookup", table, 2);
  const std::size_t n = table.rows(), d = table.cols();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * d);
  auto src = table.data();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= n)
      throw DimensionError("embedding_lookup: index " + std::to_string(idx[k]) +
                           " out of range for " + shape_str(table.shape()));
    std::copy_n(src.begin() + idx[k] * d, d, out.begin() + k * d);
  }
  const std::size_t count = idx.size();
  return OpBuilder::make({count, d}, std::move(out), {&table}, "embedding_lookup",
                         [idx = std::move(idx), d](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t k = 0; k < idx.size(); ++k)
      for (std::size_t c = 0; c < d; ++c) g[idx[k] * d + c] += self.grad[k * d + c];
  });
}

Tensor gather_elements(const Tensor& a, std::span<const std::size_t> rows,
                       std::span<const std::size_t> cols) {
  require_rank("gather_elements", a, 2);
  if (rows.size() != cols.size())
    throw DimensionError("gather_elements: row/col index lists differ in length");
  const std::size_t m = a.cols();
  std::vector<std::size_t> flat(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= a.rows() || cols[k] >= m)
      throw DimensionError("gather_elements: index out of range for " + shape_str(a.shape()));
    flat[k] = rows[k] * m + cols[k];
  }
  std::vector<double> out(flat.size());
  for (std::size_t k = 0; k < flat.size(); ++k) out[k] = a.data()[flat[k]];
  const std::size_t count = flat.size();
  return OpBuilder::make({count}, std::move(out), {&a}, "gather_elements",
                         [flat = std::move(flat)](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t k = 0; k < flat.size(); ++k) g[flat[k]] += self.grad[k];
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank("layer_norm", x, 2);
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.numel() != d || bias.numel() != d) dim_error("layer_norm", x.shape(), gain.shape());
  auto in = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  std::vector<double> out(n * d), xhat(n * d), inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = in.data() + r * d;
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += row[c];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mu) * (row[c] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (row[c] - mu) * inv_std[r];
      out[r * d + c] = xhat[r * d + c] * gv[c] + bv[c];
    }
  }
  return OpBuilder::make(x.shape(), std::move(out), {&x, &gain, &bias}, "layer_norm",
                         [n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
    Node& px = *self.parents[0];
    Node& pg = *self.parents[1];
    Node& pb = *self.parents[2];
    if (pg.requires_grad) {
      auto& g = grad_of(pg);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c] * xhat[r * d + c];
    }
    if (pb.requires_grad) {
      auto& g = grad_of(pb);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) g[c] += self.grad[r * d + c];
    }
    if (px.requires_grad) {
      auto& g = grad_of(px);
      std::vector<double> dxhat(d);
      for (std::size_t r = 0; r < n; ++r) {
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          dxhat[c] = self.grad[r * d + c] * pg.data[c];
          mean_d += dxhat[c];
          mean_dx += dxhat[c] * xhat[r * d + c];
        }
        mean_d /= static_cast<double>(d);
        mean_dx /= static_cast<double>(d);
        for (std::size_t c = 0; c < d; ++c)
          g[r * d + c] += inv_std[r] * (dxhat[c] - mean_d - xhat[r * d + c] * mean_dx);
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t n = a.rows(), m = a.cols();
  auto in = a.data();
  std::vector<double> out(n * m);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[c * n + r] = in[r * m + c];
  return OpBuilder::make({m, n}, std::move(out), {&a}, "transpose", [n, m](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) g[r * m + c] += self.grad[c * n + r];
  });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (a.rank() == 0 || a.rank() > 2 || axis >= a.rank())
    dim_error("slice", a.shape(), "unsupported axis " + std::to_string(axis));
  if (begin > end || end > a.shape()[axis])
    dim_error("slice", a.shape(),
              "range [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of bounds");
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  const std::size_t rows = a.rank() == 2 ? a.shape()[0] : 1;
  const std::size_t cols = a.rank() == 2 ? a.shape()[1] : a.shape()[0];
  // View as rows x cols; slicing axis 0 of a rank-1 tensor is a column range.
  const bool by_col = a.rank() == 1 || axis == 1;
  const std::size_t r0 = by_col ? 0 : begin, r1 = by_col ? rows : end;
  const std::size_t c0 = by_col ? begin : 0, c1 = by_col ? end : cols;
  auto in = a.data();
  std::vector<double> out;
  out.reserve(shape_numel(out_shape));
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = c0; c < c1; ++c) out.push_back(in[r * cols + c]);
  return OpBuilder::make(out_shape, std::move(out), {&a}, "slice",
                         [r0, r1, c0, c1, cols](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    std::size_t k = 0;
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t c = c0; c < c1; ++c) g[r * cols + c] += self.grad[k++];
  });
}

Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, double value) {
  if (mask.size() != a.numel())
    dim_error("masked_fill", a.shape(), "mask has " + std::to_string(mask.size()) + " entries");
  std::vector<double> out(a.data().begin(), a.data().end());
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (keep[i]) out[i] = value;
  return OpBuilder::make(a.shape(), std::move(out), {&a}, "masked_fill",
                         [keep = std::move(keep)](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!keep[i]) g[i] += self.grad[i];
  });
}

Tensor scale_rows(const Tensor& a, const Tensor& v) {
  require_rank("scale_rows", a, 2);
  const std::size_t n = a.rows(), m = a.cols();
  if (v.numel() != n) dim_error("scale_rows", a.shape(), v.shape());
  auto in = a.data();
  auto vv = v.data();
  std::vector<double> out(n * m);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] = in[r * m + c] * vv[r];
  return OpBuilder::make(a.shape(), std::move(out), {&a, &v}, "scale_rows", [n, m](Node& self) {
    Node& pa = *self.parents[0];
    Node& pv = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = grad_of(pa);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < m; ++c) g[r * m + c] += self.grad[r * m + c] * pv.data[r];
    }
    if (pv.requires_grad) {
      auto& g = grad_of(pv);
      for (std::size_t r = 0; r < n; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < m; ++c) acc += self.grad[r * m + c] * pa.data[r * m + c];
        g[r] += acc;
      }
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) dim_error("reshape", a.shape(), shape);
  std::vector<double> out(a.data().begin(), a.data().end());
  return OpBuilder::make(std::move(shape), std::move(out), {&a}, "reshape", [](Node& self) {
    auto& g = grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor dropout(const Tensor& a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> keep(a.numel());
  const double scale = 1.0 / (1.0 - p);
  for (double& k : keep) k = u(rng) < p ? 0.0 : scale;
  return mul(a, Tensor::from(a.shape(), std::move(keep)));
}

}  // namespace hekp::ad
