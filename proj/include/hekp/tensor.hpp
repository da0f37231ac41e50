#pragma once

// Dense tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared node. Operations applied while
// grad mode is enabled and at least one input requires a gradient record a
// backward closure on the result; `backward(loss)` walks the recorded DAG in
// reverse topological order and accumulates into every reachable node.
//
// Only ranks 0, 1 and 2 are used by the model code. Broadcasting is limited
// to scalar-times-tensor and bias-vector addition; every other shape mismatch
// raises DimensionError.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hekp::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct Node;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Samples i.i.d. normal(0, stddev) values.
  static Tensor randn(Shape shape, double stddev, std::mt19937_64& rng,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;  // rank 2 only
  std::size_t cols() const;  // rank 2 only

  std::span<const double> data() const;
  // Writes bypass the graph; use only on leaves (parameter updates, tests).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();  // allocates zeros when absent
  void zero_grad();
  void clear_grad();

  // Same values, no history, no gradient.
  Tensor detach() const;
  // Deep copy of the values as a fresh leaf.
  Tensor clone(bool requires_grad = false) const;

  const Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;

  friend struct OpBuilder;
  friend void backward(const Tensor& loss);
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// Populates gradients of every node reachable from `loss` (which must hold a
// single element). Gradients accumulate, so call zero_grad on leaves first.
void backward(const Tensor& loss);

// ---- primitives ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// a + b for equal shapes, or a[n x m] + b[m] (bias row broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor reciprocal(const Tensor& a);
// log(sigmoid(a)) evaluated without underflow.
Tensor log_sigmoid(const Tensor& a);
// Gradient passes only where lo <= a <= hi.
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);
// Reduces rank by one: [n x m] -> [m] (axis 0) or [n] (axis 1); [n] -> [].
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
// Rows of `table` selected by `indices` -> [indices.size() x cols].
Tensor embedding_lookup(const Tensor& table, std::span<const std::size_t> indices);
// out[k] = a(rows[k], cols[k]).
Tensor gather_elements(const Tensor& a, std::span<const std::size_t> rows,
                       std::span<const std::size_t> cols);
// Row-wise normalisation of a [n x d] tensor with gain and bias of length d.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
Tensor transpose(const Tensor& a);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
// Entries where mask is nonzero are replaced by `value` (zero gradient there).
Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, double value);
// Row i of a [n x m] tensor multiplied by v[i]; v has n elements.
Tensor scale_rows(const Tensor& a, const Tensor& v);
Tensor reshape(const Tensor& a, Shape shape);
// Inverted dropout with keep-mask drawn from `rng`; identity when p == 0.
Tensor dropout(const Tensor& a, double p, std::mt19937_64& rng);

// Elementwise op with caller-provided derivative; `derivative(x, y)` returns
// dy/dx given input x and output y. Used by tests to build bespoke rules.
Tensor custom_unary(const Tensor& a, const std::function<double(double)>& forward,
                    const std::function<double(double, double)>& derivative,
                    std::string_view name = "custom");

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scalar_mul(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scalar_mul(a, s); }

}  // namespace hekp::ad
