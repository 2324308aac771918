#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace percdia {

// Dense row-major tensor shape. Rank 0 is a scalar, rank 1 a vector, rank 2 a matrix.
using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward() deposits into it
  bool requires_grad = false;
  bool on_graph = false;  // reachable from a grad-requiring tensor while a tape records
};

// Value-semantic handle to a shared tensor node. Values are immutable once built
// through ops; raw() exists for initialization and optimizer updates between steps.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t size() const { return static_cast<int64_t>(node_->values.size()); }
  int64_t rows() const;
  int64_t cols() const;
  bool is_scalar() const { return node_->shape.empty(); }

  double item() const;  // scalar tensors only
  double operator()(int64_t r, int64_t c) const;
  double operator[](int64_t i) const { return node_->values[static_cast<size_t>(i)]; }

  std::span<const double> values() const { return node_->values; }
  std::span<double> raw() { return node_->values; }  // bypasses autodiff

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool b = true);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const;
  std::span<double> grad_raw();
  void zero_grad();

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Accumulates d(root)/d(node) per node during one backward sweep. Leaf gradients
// are flushed into TensorNode::grad at the end, in first-touch order, so
// accumulation is deterministic. Entries live in a deque so references handed
// out by find()/ensure() stay valid while new nodes are added.
class Adjoints {
 public:
  std::vector<double>* find(const TensorNode* node);
  std::vector<double>& ensure(const std::shared_ptr<TensorNode>& node);
  void flush_to_grads();

 private:
  struct Entry {
    std::shared_ptr<TensorNode> node;
    std::vector<double> adjoint;
  };
  std::deque<Entry> entries_;
  std::vector<std::pair<const TensorNode*, size_t>> index_;  // sorted by pointer
};

// ComputationRecord: an append-ordered list of recorded primitive ops. Append
// order is a topological order of the dataflow, so a single reverse sweep
// visits every node after all of its consumers.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // RAII guard making `tape` the recording target for the current thread.
  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* active();

  // Runs one reverse sweep from `loss` (must be scalar). Gradients of every
  // requires_grad tensor are accumulated into .grad; repeated calls without
  // zero_grad() keep accumulating.
  void backward(const Tensor& loss);

  void record(std::function<void(Adjoints&)> backward_fn);
  size_t num_ops() const { return ops_.size(); }
  void clear() { ops_.clear(); }

 private:
  std::vector<std::function<void(Adjoints&)>> ops_;
};

// --- primitive ops -----------------------------------------------------------
// Binary elementwise ops accept exactly matching shapes or a scalar on either
// side; no other broadcasting exists.

Tensor matmul(const Tensor& a, const Tensor& b);
// a (m x k) times b^T (k x n) without materializing the transpose; the form
// attention scores take, where b is a long sequence.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// out[t, j] = x[t, j] + bias[j]; the one sanctioned row broadcast (the
// "all-ones outer product" bias pattern).
Tensor add_bias(const Tensor& x, const Tensor& bias);

// Fused x * w + bias (bias broadcast over rows); same result as
// add_bias(matmul(x, w), bias) with one pass fewer over the output.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log(const Tensor& x);  // throws std::domain_error on values <= 0
Tensor clamp(const Tensor& x, double lo, double hi);

// Numerically stabilized softmax along `axis` (max subtraction per slice).
Tensor softmax(const Tensor& x, int axis);

// Per-row normalization of a T x D matrix with epsilon 1e-5 inside the sqrt.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

Tensor sum(const Tensor& x);   // -> scalar
Tensor mean(const Tensor& x);  // -> scalar

Tensor slice_cols(const Tensor& x, int64_t start, int64_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Inverted dropout; identity when p == 0. Mask is drawn from `rng` so training
// runs are reproducible from the run seed.
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

}  // namespace percdia
