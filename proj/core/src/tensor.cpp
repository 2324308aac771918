#include "percdia/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace percdia {
namespace {

thread_local Tape* g_active_tape = nullptr;

bool track(const Tensor& t) { return t.node()->requires_grad || t.node()->on_graph; }

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (track(*t)) return true;
  }
  return false;
}

void mark_output(Tensor& out, bool on_graph) { out.node()->on_graph = on_graph; }

[[noreturn]] void shape_error(const std::string& what, const Shape& a, const Shape& b) {
  throw std::invalid_argument(what + ": " + shape_str(a) + " vs " + shape_str(b));
}

// Cache tile sizes: panels of B (and the matching slice of C) stay resident
// in L2 while every row of A sweeps over them, so B is read from memory once
// instead of m times. Matters for long-sequence attention where n is 10^4+.
constexpr int64_t kTileN = 512;
constexpr int64_t kTileK = 64;

// C(m x n) += A(m x k) * B(k x n)
void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t j0 = 0; j0 < n; j0 += kTileN) {
    const int64_t j1 = std::min(j0 + kTileN, n);
    for (int64_t p0 = 0; p0 < k; p0 += kTileK) {
      const int64_t p1 = std::min(p0 + kTileK, k);
      for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t p = p0; p < p1; ++p) {
          const double av = arow[p];
          if (av == 0.0) continue;
          const double* brow = b + p * n;
          for (int64_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

// C(m x n) += A(m x k) * B(n x k)^T
void gemm_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t j0 = 0; j0 < n; j0 += kTileN) {
    const int64_t j1 = std::min(j0 + kTileN, n);
    for (int64_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      double* crow = c + i * n;
      for (int64_t j = j0; j < j1; ++j) {
        const double* brow = b + j * k;
        double acc = 0.0;
        for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += acc;
      }
    }
  }
}

// C(m x n) += A(k x m)^T * B(k x n); backward-only path, left untiled.
void gemm_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (int64_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

struct Dims2 {
  int64_t rows;
  int64_t cols;
};

Dims2 as_2d(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.size() == 2) return {s[0], s[1]};
  if (s.size() == 1) return {1, s[0]};
  throw std::invalid_argument("expected rank-1 or rank-2 tensor, got shape " + shape_str(s));
}

}  // namespace

int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape) {
  node_ = std::make_shared<TensorNode>();
  node_->values.assign(static_cast<size_t>(shape_size(shape)), 0.0);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  if (shape_size(shape) != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  node_ = std::make_shared<TensorNode>();
  node_->shape = std::move(shape);
  node_->values = std::move(values);
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, {v}); }

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.node_->values.begin(), t.node_->values.end(), v);
  return t;
}

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stddev) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.node_->values) v = dist(rng);
  return t;
}

int64_t Tensor::rows() const { return as_2d(*this).rows; }
int64_t Tensor::cols() const { return as_2d(*this).cols; }

double Tensor::item() const {
  if (!is_scalar()) throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape()));
  return node_->values[0];
}

double Tensor::operator()(int64_t r, int64_t c) const {
  Dims2 d = as_2d(*this);
  return node_->values[static_cast<size_t>(r * d.cols + c)];
}

Tensor& Tensor::set_requires_grad(bool b) {
  node_->requires_grad = b;
  return *this;
}

std::span<const double> Tensor::grad() const {
  if (node_->grad.empty()) {
    throw std::runtime_error("gradient not populated; run Tape::backward first");
  }
  return node_->grad;
}

std::span<double> Tensor::grad_raw() {
  if (node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

// --- Adjoints ----------------------------------------------------------------

std::vector<double>* Adjoints::find(const TensorNode* node) {
  auto it = std::lower_bound(index_.begin(), index_.end(), node,
                             [](const auto& e, const TensorNode* n) { return e.first < n; });
  if (it == index_.end() || it->first != node) return nullptr;
  return &entries_[it->second].adjoint;
}

std::vector<double>& Adjoints::ensure(const std::shared_ptr<TensorNode>& node) {
  auto it = std::lower_bound(index_.begin(), index_.end(), node.get(),
                             [](const auto& e, const TensorNode* n) { return e.first < n; });
  if (it != index_.end() && it->first == node.get()) return entries_[it->second].adjoint;
  index_.insert(it, {node.get(), entries_.size()});
  entries_.push_back({node, std::vector<double>(node->values.size(), 0.0)});
  return entries_.back().adjoint;
}

void Adjoints::flush_to_grads() {
  for (Entry& e : entries_) {
    if (!e.node->requires_grad) continue;
    if (e.node->grad.empty()) e.node->grad.assign(e.node->values.size(), 0.0);
    for (size_t i = 0; i < e.adjoint.size(); ++i) e.node->grad[i] += e.adjoint[i];
  }
}

// --- Tape --------------------------------------------------------------------

Tape::Scope::Scope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void(Adjoints&)> backward_fn) {
  ops_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
  if (!loss.is_scalar()) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  Adjoints adj;
  adj.ensure(loss.node())[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)(adj);
  adj.flush_to_grads();
}

// --- op helpers --------------------------------------------------------------

namespace {

// Record a backward closure if the inputs warrant it; marks the output.
template <typename Fn>
void finish_op(Tensor& out, std::initializer_list<const Tensor*> inputs, Fn&& backward_fn) {
  const bool rec = recording(inputs);
  mark_output(out, rec);
  if (rec) g_active_tape->record(std::forward<Fn>(backward_fn));
}

}  // namespace

// --- ops ---------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Dims2 da = as_2d(a), db = as_2d(b);
  if (da.cols != db.rows) shape_error("matmul inner dimensions differ", a.shape(), b.shape());
  Tensor out(Shape{da.rows, db.cols});
  gemm_nn(a.values().data(), b.values().data(), out.raw().data(), da.rows, da.cols, db.cols);

  auto an = a.node(), bn = b.node(), on = out.node();
  const bool need_a = track(a), need_b = track(b);
  finish_op(out, {&a, &b}, [an, bn, on, da, db, need_a, need_b](Adjoints& adj) {
    std::vector<double>* gy = adj.find(on.get());
    if (gy == nullptr) return;
    if (need_a) {
      // dA = dY * B^T
      gemm_nt(gy->data(), bn->values.data(), adj.ensure(an).data(), da.rows, db.cols, da.cols);
    }
    if (need_b) {
      // dB = A^T * dY
      gemm_tn(an->values.data(), gy->data(), adj.ensure(bn).data(), da.cols, da.rows, db.cols);
    }
  });
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  Dims2 da = as_2d(a), db = as_2d(b);
  if (da.cols != db.cols) shape_error("matmul_nt inner dimensions differ", a.shape(), b.shape());
  Tensor out(Shape{da.rows, db.rows});
  gemm_nt(a.values().data(), b.values().data(), out.raw().data(), da.rows, da.cols, db.rows);

  auto an = a.node(), bn = b.node(), on = out.node();
  const bool need_a = track(a), need_b = track(b);
  finish_op(out, {&a, &b}, [an, bn, on, da, db, need_a, need_b](Adjoints& adj) {
    std::vector<double>* gy = adj.find(on.get());
    if (gy == nullptr) return;
    if (need_a) {
      // dA = dY * B
      gemm_nn(gy->data(), bn->values.data(), adj.ensure(an).data(), da.rows, db.rows, da.cols);
    }
    if (need_b) {
      // dB = dY^T * A
      gemm_tn(gy->data(), an->values.data(), adj.ensure(bn).data(), db.rows, da.rows, db.cols);
    }
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  Dims2 d = as_2d(a);
  Tensor out(Shape{d.cols, d.rows});
  const double* src = a.values().data();
  double* dst = out.raw().data();
  for (int64_t i = 0; i < d.rows; ++i)
    for (int64_t j = 0; j < d.cols; ++j) dst[j * d.rows + i] = src[i * d.cols + j];

  auto an = a.node(), on = out.node();
  finish_op(out, {&a}, [an, on, d](Adjoints& adj) {
    std::vector<double>* gy = adj.find(on.get());
    if (gy == nullptr) return;
    std::vector<double>& ga = adj.ensure(an);
    for (int64_t i = 0; i < d.cols; ++i)
      for (int64_t j = 0; j < d.rows; ++j) ga[j * d.cols + i] += (*gy)[i * d.rows + j];
  });
  return out;
}

namespace {

enum class BinKind { Add, Sub, Mul };

Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind) {
  const bool a_scalar = a.is_scalar(), b_scalar = b.is_scalar();
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
    shape_error("elementwise op on mismatched shapes", a.shape(), b.shape());
  }
  const Shape& out_shape = a_scalar ? b.shape() : a.shape();
  Tensor out(out_shape);
  const int64_t n = out.size();
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out.raw().data();
  auto ai = [&](int64_t i) { return a_scalar ? av[0] : av[i]; };
  auto bi = [&](int64_t i) { return b_scalar ? bv[0] : bv[i]; };
  switch (kind) {
    case BinKind::Add:
      for (int64_t i = 0; i < n; ++i) ov[i] = ai(i) + bi(i);
      break;
    case BinKind::Sub:
      for (int64_t i = 0; i < n; ++i) ov[i] = ai(i) - bi(i);
      break;
    case BinKind::Mul:
      for (int64_t i = 0; i < n; ++i) ov[i] = ai(i) * bi(i);
      break;
  }

  auto an = a.node(), bn = b.node(), on = out.node();
  const bool need_a = track(a), need_b = track(b);
  finish_op(out, {&a, &b}, [an, bn, on, kind, a_scalar, b_scalar, n, need_a, need_b](Adjoints& adj) {
    std::vector<double>* gy = adj.find(on.get());
    if (gy == nullptr) return;
    if (need_a) {
      std::vector<double>& ga = adj.ensure(an);
      for (int64_t i = 0; i < n; ++i) {
        double g = (*gy)[i];
        if (kind == BinKind::Mul) g *= b_scalar ? bn->values[0] : bn->values[i];
        ga[a_scalar ? 0 : i] += g;
      }
    }
    if (need_b) {
      std::vector<double>& gb = adj.ensure(bn);
      for (int64_t i = 0; i < n; ++i) {
        double g = (*gy)[i];
        if (kind == BinKind::Sub) g = -g;
        if (kind == BinKind::Mul) g = (*gy)[i] * (a_scalar ? an->values[0] : an->values[i]);
        gb[b_scalar ? 0 : i] += g;
      }
    }
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Mul); }

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  const int64_t n = a.size();
  const double* av = a.values().data();
  double* ov = out.raw().data();
  for (int64_t i = 0; i < n; ++i) ov[i] = av[i] * c;

  auto an = a.node(), on = out.node();
  finish_op(out, {&a}, [an, on, c, n](Adjoints& adj) {
    std::vector<double>* gy = adj.find(on.get());
    if (gy == nullptr) return;
    std::vector<double>& ga = adj.ensure(an);
    for (int64_t i = 0; i < n; ++i) ga[i] += (*gy)[i] * c;
  });
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  Dims2 d = as_2d(x);
  if (bias.size() != d.cols) shape_error("bias length does not match columns", x.shape(), bias.shape());
  Tensor out(x.shape());
  const double* xv = x.values().data();
  const double* bv = bias.values().data();
  double* ov = out.raw().data();
  for (int64_t i = 0; i < d.rows; ++i)
    for (int64_t j = 0; j < d.cols; ++j) ov[i * d.cols + j] = xv[i * d.cols + j] + bv[j];

  auto xn = x.node(), bn = bias.node(), on = out.node();
  const bool need_x = track(x), need_b = track(bias);
  finish_op(out, {&x, &bias}, [xn, bn, on, d, need_x, need_b](Adjoints& adj) {
    std::vector<double>* gy = adj.find(on.get());
    if (gy == nullptr) return;
    if (need_x) {
      std::vector<double>& gx = adj.ensure(xn);
      for (size_t i = 0; i < gx.size(); ++i) gx[i] += (*gy)[i];
    }
    if (need_b) {
      std::vector<double>& gb = adj.ensure(bn);
      for (int64_t i = 0; i < d.rows; ++i)
        for (int64_t j = 0; j < d.cols; ++j) gb[j] += (*gy)[i * d.cols + j];
    }
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Dims2 dx = as_2d(x), dw = as_2d(w);
  if (dx.cols != dw.rows) shape_error("linear inner dimensions differ", x.shape(), w.shape());
  if (bias.size() != dw.cols) shape_error("linear bias length mismatch", w.shape(), bias.shape());
  Tensor out(Shape{dx.rows, dw.cols});
  double* ov = out.raw().data();
  const double* bv = bias.values().data();
  for (int64_t i = 0; i < dx.rows; ++i) {
    for (int64_t j = 0; j < dw.cols; ++j) ov[i * dw.cols + j] = bv[j];
  }
  gemm_nn(x.values().data(), w.values().data(), ov, dx.rows, dx.cols, dw.cols);

  auto xn = x.node(), wn = w.node(), bn = bias.node(), on = out.node();
  const bool need_x = track(x), need_w = track(w), need_b = track(bias);
  finish_op(out, {&x, &w, &bias}, [xn, wn, bn, on, dx, dw, need_x, need_w, need_b](Adjoints& adj) {
    std::vector<double>* gy = adj.find(on.get());
    if (gy == nullptr) return;
    if (need_x) {
      // dX = dY * W^T
      gemm_nt(gy->data(), wn->values.data(), adj.ensure(xn).data(), dx.rows, dw.cols, dx.cols);
    }
    if (need_w) {
      // dW = X^T * dY
      gemm_tn(xn->values.data(), gy->data(), adj.ensure(wn).data(), dx.cols, dx.rows, dw.cols);
    }
    if (need_b) {
      std::vector<double>& gb = adj.ensure(bn);
      for (int64_t i = 0; i < dx.rows; ++i) {
        for (int64_t j = 0; j < dw.cols; ++j) gb[j] += (*gy)[i * dw.cols + j];
      }
    }
  });
  return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd bwd_factor_from_out_and_in) {
  Tensor out(x.shape());
  const int64_t n = x.size();
  const double* xv = x.values().data();
  double* ov = out.raw().data();
  for (int64_t i = 0; i < n; ++i) ov[i] = fwd(xv[i]);

  auto xn = x.node(), on = out.node();
  finish_op(out, {&x}, [xn, on, n, bwd_factor_from_out_and_in](Adjoints& adj) {
    std::vector<double>* gy = adj.find(on.get());
    if (gy == nullptr) return;
    std::vector<double>& gx = adj.ensure(xn);
    for (int64_t i = 0; i < n; ++i) gx[i] += (*gy)[i] * bwd_factor_from_out_and_in(on->values[i], xn->values[i]);
  });
  return out;
}

}  // namespace

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double, double in) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x,
      [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double out, double) { return out * (1.0 - out); });
}

Tensor log(const Tensor& x) {
  for (double v : x.values()) {
    if (v <= 0.0) throw std::domain_error("log of non-positive value " + std::to_string(v));
  }
  return unary_op(
      x, [](double v) { return std::log(v); }, [](double, double in) { return 1.0 / in; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary_op(
      x, [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](double, double in) { return (in >= lo && in <= hi) ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& x, int axis) {
  Dims2 d = as_2d(x);
  if (axis != 0 && axis != 1) throw std::invalid_argument("softmax axis must be 0 or 1");
  if (x.shape().size() == 1) axis = 1;  // a vector is one row
  const int64_t slices = (axis == 1) ? d.rows : d.cols;
  const int64_t len = (axis == 1) ? d.cols : d.rows;
  const int64_t step = (axis == 1) ? 1 : d.cols;
  const int64_t stride = (axis == 1) ? d.cols : 1;

  Tensor out(x.shape());
  const double* xv = x.values().data();
  double* ov = out.raw().data();
  if (axis == 1) {
    for (int64_t s = 0; s < slices; ++s) {
      const double* xs = xv + s * stride;
      double* os = ov + s * stride;
      double mx = xs[0];
      for (int64_t i = 1; i < len; ++i) mx = std::max(mx, xs[i]);
      double z = 0.0;
      for (int64_t i = 0; i < len; ++i) {
        double e = std::exp(xs[i] - mx);
        os[i] = e;
        z += e;
      }
      for (int64_t i = 0; i < len; ++i) os[i] /= z;
    }
  } else {
    // Column softmax in column tiles, sweeping rows, so the passes stay
    // sequential even when the matrix is much larger than cache.
    constexpr int64_t kTile = 512;
    std::vector<double> mx(static_cast<size_t>(std::min(kTile, slices)));
    std::vector<double> z(mx.size());
    for (int64_t c0 = 0; c0 < slices; c0 += kTile) {
      const int64_t c1 = std::min(c0 + kTile, slices);
      const int64_t w = c1 - c0;
      for (int64_t c = 0; c < w; ++c) mx[static_cast<size_t>(c)] = xv[c0 + c];
      for (int64_t r = 1; r < len; ++r) {
        const double* row = xv + r * d.cols + c0;
        for (int64_t c = 0; c < w; ++c) mx[static_cast<size_t>(c)] = std::max(mx[static_cast<size_t>(c)], row[c]);
      }
      std::fill(z.begin(), z.begin() + w, 0.0);
      for (int64_t r = 0; r < len; ++r) {
        const double* row = xv + r * d.cols + c0;
        double* orow = ov + r * d.cols + c0;
        for (int64_t c = 0; c < w; ++c) {
          const double e = std::exp(row[c] - mx[static_cast<size_t>(c)]);
          orow[c] = e;
          z[static_cast<size_t>(c)] += e;
        }
      }
      for (int64_t r = 0; r < len; ++r) {
        double* orow = ov + r * d.cols + c0;
        for (int64_t c = 0; c < w; ++c) orow[c] /= z[static_cast<size_t>(c)];
      }
    }
  }

  auto xn = x.node(), on = out.node();
  finish_op(out, {&x}, [xn, on, slices, len, step, stride](Adjoints& adj) {
    std::vector<double>* gy = adj.find(on.get());
    if (gy == nullptr) return;
    std::vector<double>& gx = adj.ensure(xn);
    for (int64_t s = 0; s < slices; ++s) {
      const double* ys = on->values.data() + s * stride;
      const double* gys = gy->data() + s * stride;
      double dot = 0.0;
      for (int64_t i = 0; i < len; ++i) dot += gys[i * step] * ys[i * step];
      double* gxs = gx.data() + s * stride;
      for (int64_t i = 0; i < len; ++i) gxs[i * step] += (gys[i * step] - dot) * ys[i * step];
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  constexpr double kEps = 1e-5;
  Dims2 d = as_2d(x);
  if (gain.size() != d.cols || bias.size() != d.cols) {
    shape_error("layer_norm gain/bias length does not match columns", x.shape(), gain.shape());
  }
  Tensor out(x.shape());
  std::vector<double> inv_std(static_cast<size_t>(d.rows));
  std::vector<double> normed(x.values().size());
  const double* xv = x.values().data();
  const double* gv = gain.values().data();
  const double* bv = bias.values().data();
  double* ov = out.raw().data();
  for (int64_t i = 0; i < d.rows; ++i) {
    const double* row = xv + i * d.cols;
    double mu = 0.0;
    for (int64_t j = 0; j < d.cols; ++j) mu += row[j];
    mu /= static_cast<double>(d.cols);
    double var = 0.0;
    for (int64_t j = 0; j < d.cols; ++j) {
      double c = row[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d.cols);
    const double is = 1.0 / std::sqrt(var + kEps);
    inv_std[static_cast<size_t>(i)] = is;
    for (int64_t j = 0; j < d.cols; ++j) {
      double nj = (row[j] - mu) * is;
      normed[static_cast<size_t>(i * d.cols + j)] = nj;
      ov[i * d.cols + j] = nj * gv[j] + bv[j];
    }
  }

  auto xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node();
  const bool need_x = track(x), need_g = track(gain), need_b = track(bias);
  finish_op(out, {&x, &gain, &bias},
            [xn, gn, bn, on, d, inv_std = std::move(inv_std), normed = std::move(normed), need_x,
             need_g, need_b](Adjoints& adj) {
              std::vector<double>* gy = adj.find(on.get());
              if (gy == nullptr) return;
              if (need_g) {
                std::vector<double>& gg = adj.ensure(gn);
                for (int64_t i = 0; i < d.rows; ++i)
                  for (int64_t j = 0; j < d.cols; ++j)
                    gg[j] += (*gy)[i * d.cols + j] * normed[static_cast<size_t>(i * d.cols + j)];
              }
              if (need_b) {
                std::vector<double>& gb = adj.ensure(bn);
                for (int64_t i = 0; i < d.rows; ++i)
                  for (int64_t j = 0; j < d.cols; ++j) gb[j] += (*gy)[i * d.cols + j];
              }
              if (need_x) {
                std::vector<double>& gx = adj.ensure(xn);
                const double* gv2 = gn->values.data();
                const double inv_n = 1.0 / static_cast<double>(d.cols);
                for (int64_t i = 0; i < d.rows; ++i) {
                  const double* gys = gy->data() + i * d.cols;
                  const double* ns = normed.data() + i * d.cols;
                  double mean_gyg = 0.0, mean_gyg_n = 0.0;
                  for (int64_t j = 0; j < d.cols; ++j) {
                    const double gyg = gys[j] * gv2[j];
                    mean_gyg += gyg;
                    mean_gyg_n += gyg * ns[j];
                  }
                  mean_gyg *= inv_n;
                  mean_gyg_n *= inv_n;
                  const double is = inv_std[static_cast<size_t>(i)];
                  for (int64_t j = 0; j < d.cols; ++j) {
                    const double gyg = gys[j] * gv2[j];
                    gx[i * d.cols + j] += (gyg - mean_gyg - ns[j] * mean_gyg_n) * is;
                  }
                }
              }
            });
  return out;
}

namespace {

Tensor reduce_op(const Tensor& x, bool take_mean) {
  const int64_t n = x.size();
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  if (take_mean) acc /= static_cast<double>(n);
  Tensor out = Tensor::scalar(acc);

  auto xn = x.node(), on = out.node();
  const double w = take_mean ? 1.0 / static_cast<double>(n) : 1.0;
  finish_op(out, {&x}, [xn, on, n, w](Adjoints& adj) {
    std::vector<double>* gy = adj.find(on.get());
    if (gy == nullptr) return;
    std::vector<double>& gx = adj.ensure(xn);
    const double g = (*gy)[0] * w;
    for (int64_t i = 0; i < n; ++i) gx[i] += g;
  });
  return out;
}

}  // namespace

Tensor sum(const Tensor& x) { return reduce_op(x, false); }
Tensor mean(const Tensor& x) { return reduce_op(x, true); }

Tensor slice_cols(const Tensor& x, int64_t start, int64_t count) {
  Dims2 d = as_2d(x);
  if (start < 0 || count < 0 || start + count > d.cols) {
    throw std::invalid_argument("slice_cols out of range");
  }
  Tensor out(Shape{d.rows, count});
  const double* xv = x.values().data();
  double* ov = out.raw().data();
  for (int64_t i = 0; i < d.rows; ++i)
    for (int64_t j = 0; j < count; ++j) ov[i * count + j] = xv[i * d.cols + start + j];

  auto xn = x.node(), on = out.node();
  finish_op(out, {&x}, [xn, on, d, start, count](Adjoints& adj) {
    std::vector<double>* gy = adj.find(on.get());
    if (gy == nullptr) return;
    std::vector<double>& gx = adj.ensure(xn);
    for (int64_t i = 0; i < d.rows; ++i)
      for (int64_t j = 0; j < count; ++j) gx[i * d.cols + start + j] += (*gy)[i * count + j];
  });
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols of zero tensors");
  const int64_t rows = as_2d(parts[0]).rows;
  int64_t total_cols = 0;
  for (const Tensor& p : parts) {
    if (as_2d(p).rows != rows) shape_error("concat_cols row mismatch", parts[0].shape(), p.shape());
    total_cols += as_2d(p).cols;
  }
  Tensor out(Shape{rows, total_cols});
  double* ov = out.raw().data();
  int64_t off = 0;
  for (const Tensor& p : parts) {
    const int64_t pc = as_2d(p).cols;
    const double* pv = p.values().data();
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < pc; ++j) ov[i * total_cols + off + j] = pv[i * pc + j];
    off += pc;
  }

  bool rec = false;
  for (const Tensor& p : parts) rec = rec || track(p);
  mark_output(out, rec && Tape::active() != nullptr);
  if (rec && Tape::active() != nullptr) {
    std::vector<std::shared_ptr<TensorNode>> ins;
    ins.reserve(parts.size());
    for (const Tensor& p : parts) ins.push_back(p.node());
    auto on = out.node();
    Tape::active()->record([ins, on, rows, total_cols](Adjoints& adj) {
      std::vector<double>* gy = adj.find(on.get());
      if (gy == nullptr) return;
      int64_t off2 = 0;
      for (const auto& in : ins) {
        const int64_t pc = in->shape.size() == 2 ? in->shape[1] : in->shape[0];
        if (in->requires_grad || in->on_graph) {
          std::vector<double>& gp = adj.ensure(in);
          for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < pc; ++j) gp[i * pc + j] += (*gy)[i * total_cols + off2 + j];
        }
        off2 += pc;
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout probability must be < 1");
  const int64_t n = x.size();
  std::vector<double> mask(static_cast<size_t>(n));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask) m = (u(rng) < p) ? 0.0 : keep_scale;

  Tensor out(x.shape());
  const double* xv = x.values().data();
  double* ov = out.raw().data();
  for (int64_t i = 0; i < n; ++i) ov[i] = xv[i] * mask[static_cast<size_t>(i)];

  auto xn = x.node(), on = out.node();
  finish_op(out, {&x}, [xn, on, n, mask = std::move(mask)](Adjoints& adj) {
    std::vector<double>* gy = adj.find(on.get());
    if (gy == nullptr) return;
    std::vector<double>& gx = adj.ensure(xn);
    for (int64_t i = 0; i < n; ++i) gx[i] += (*gy)[i] * mask[static_cast<size_t>(i)];
  });
  return out;
}

}  // namespace percdia
