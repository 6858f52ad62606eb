#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "srcr/errors.hpp"
#include "srcr/mat.hpp"

namespace srcr {

namespace detail {

struct TensorData {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // empty until backward first touches it
  bool requires_grad = false;
};

inline std::string shape_of(const TensorData& t) {
  return std::to_string(t.rows) + "x" + std::to_string(t.cols);
}

inline void ensure_grad(TensorData& t) {
  if (t.grad.empty()) t.grad.assign(t.value.size(), 0.0);
}

// c (n x m) += a (n x k) * b (k x m), all row-major.
inline void matmul_acc(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                       std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
}

}  // namespace detail

// Handle to a dense 2-D tensor of doubles. Copies of a Tensor share the same
// buffer; the tape inside Graph keeps intermediate results alive until the
// Graph is destroyed.
class Tensor {
 public:
  Tensor() = default;

  static Tensor param(Mat m) { return leaf(std::move(m), true); }
  static Tensor constant(Mat m) { return leaf(std::move(m), false); }
  static Tensor zeros(std::size_t r, std::size_t c, bool requires_grad = false) {
    return leaf(Mat(r, c), requires_grad);
  }

  bool valid() const { return d_ != nullptr; }
  std::size_t rows() const { return d_->rows; }
  std::size_t cols() const { return d_->cols; }
  std::size_t numel() const { return d_->value.size(); }
  bool requires_grad() const { return d_->requires_grad; }

  double at(std::size_t i, std::size_t j) const { return d_->value[i * d_->cols + j]; }

  // Value of a 1x1 tensor (losses).
  double scalar() const {
    if (rows() != 1 || cols() != 1)
      throw ContractError("scalar: tensor is " + detail::shape_of(*d_) + ", expected 1x1");
    return d_->value[0];
  }

  const std::vector<double>& value() const { return d_->value; }
  std::vector<double>& value_mut() { return d_->value; }

  bool has_grad() const { return !d_->grad.empty(); }
  const std::vector<double>& grad() const {
    if (d_->grad.empty())
      throw ContractError("grad: no gradient present for " + detail::shape_of(*d_) + " tensor");
    return d_->grad;
  }
  void clear_grad() { d_->grad.clear(); }

  Mat to_mat() const { return Mat(rows(), cols(), d_->value); }

 private:
  friend class Graph;
  friend class SgdOptimizer;

  static Tensor leaf(Mat m, bool requires_grad) {
    Tensor t;
    t.d_ = std::make_shared<detail::TensorData>();
    t.d_->rows = m.rows;
    t.d_->cols = m.cols;
    t.d_->value = std::move(m.v);
    t.d_->requires_grad = requires_grad;
    return t;
  }

  std::shared_ptr<detail::TensorData> d_;
};

// Symmetric linear map on vertex rows: y += S x, applied column-block-wise to
// row-major matrices. Symmetry of S is what lets backward() reuse apply().
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;
  virtual std::size_t dim() const = 0;
  // Accumulate S * x into y; x and y are dim() x cols, row-major. y is not
  // cleared here.
  virtual void apply(const double* x, double* y, std::size_t cols) const = 0;
};

inline Mat apply_operator(const LinearOperator& op, const Mat& x) {
  if (x.rows != op.dim())
    throw DimensionError("apply_operator: " + std::to_string(op.dim()) + " rows expected, got " +
                         x.shape());
  Mat y(x.rows, x.cols);
  op.apply(x.v.data(), y.v.data(), x.cols);
  return y;
}

// Reverse-mode tape. Ops append records in creation order, which is already a
// topological order of the computation; backward() replays it in reverse and
// accumulates d(loss)/d(tensor) into every requires_grad tensor it reaches.
//
// A Graph and the tensors it produced are confined to one thread. Constructed
// with recording=false it evaluates values only (frozen forward passes).
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  std::size_t tape_size() const { return tape_.size(); }
  void clear() { tape_.clear(); }

  Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
      throw DimensionError("matmul: " + shape(a) + " incompatible with " + shape(b));
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Tensor out = fresh(n, m, wants_grad(a, b));
    detail::matmul_acc(a.d_->value.data(), b.d_->value.data(), out.d_->value.data(), n, k, m);
    if (out.requires_grad()) {
      auto ad = a.d_, bd = b.d_, od = out.d_;
      record([ad, bd, od, n, k, m] {
        if (od->grad.empty()) return;
        const double* g = od->grad.data();
        if (ad->requires_grad) {
          detail::ensure_grad(*ad);
          // dA += G * B^T : row-dot of G row i with B row p.
          for (std::size_t i = 0; i < n; ++i) {
            const double* gi = g + i * m;
            double* dai = ad->grad.data() + i * k;
            for (std::size_t p = 0; p < k; ++p)
              dai[p] += dot(gi, bd->value.data() + p * m, m);
          }
        }
        if (bd->requires_grad) {
          detail::ensure_grad(*bd);
          // dB += A^T * G.
          for (std::size_t i = 0; i < n; ++i) {
            const double* ai = ad->value.data() + i * k;
            const double* gi = g + i * m;
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = ai[p];
              double* dbp = bd->grad.data() + p * m;
              for (std::size_t j = 0; j < m; ++j) dbp[j] += aip * gi[j];
            }
          }
        }
      });
    }
    return out;
  }

  Tensor add(const Tensor& a, const Tensor& b) { return lincomb(a, b, "add", 1.0, 1.0); }

  Tensor sub(const Tensor& a, const Tensor& b) { return lincomb(a, b, "sub", 1.0, -1.0); }

  // Elementwise (Hadamard) product.
  Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out = fresh(a.rows(), a.cols(), wants_grad(a, b));
    for (std::size_t i = 0; i < out.numel(); ++i)
      out.d_->value[i] = a.d_->value[i] * b.d_->value[i];
    if (out.requires_grad()) {
      auto ad = a.d_, bd = b.d_, od = out.d_;
      record([ad, bd, od] {
        if (od->grad.empty()) return;
        if (ad->requires_grad) {
          detail::ensure_grad(*ad);
          for (std::size_t i = 0; i < od->grad.size(); ++i)
            ad->grad[i] += od->grad[i] * bd->value[i];
        }
        if (bd->requires_grad) {
          detail::ensure_grad(*bd);
          for (std::size_t i = 0; i < od->grad.size(); ++i)
            bd->grad[i] += od->grad[i] * ad->value[i];
        }
      });
    }
    return out;
  }

  // Broadcast a 1 x c row vector over every row of a (the only broadcast
  // supported on the tape).
  Tensor add_rowvec(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
      throw DimensionError("add_rowvec: " + shape(a) + " with row " + shape(row));
    const std::size_t n = a.rows(), c = a.cols();
    Tensor out = fresh(n, c, wants_grad(a, row));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j)
        out.d_->value[i * c + j] = a.d_->value[i * c + j] + row.d_->value[j];
    if (out.requires_grad()) {
      auto ad = a.d_, rd = row.d_, od = out.d_;
      record([ad, rd, od, n, c] {
        if (od->grad.empty()) return;
        if (ad->requires_grad) {
          detail::ensure_grad(*ad);
          for (std::size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i];
        }
        if (rd->requires_grad) {
          detail::ensure_grad(*rd);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) rd->grad[j] += od->grad[i * c + j];
        }
      });
    }
    return out;
  }

  Tensor scale(const Tensor& a, double s) {
    Tensor out = fresh(a.rows(), a.cols(), wants_grad(a));
    for (std::size_t i = 0; i < out.numel(); ++i) out.d_->value[i] = s * a.d_->value[i];
    if (out.requires_grad()) {
      auto ad = a.d_;
      auto od = out.d_;
      record([ad, od, s] {
        if (od->grad.empty() || !ad->requires_grad) return;
        detail::ensure_grad(*ad);
        for (std::size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += s * od->grad[i];
      });
    }
    return out;
  }

  Tensor relu(const Tensor& a) {
    Tensor out = fresh(a.rows(), a.cols(), wants_grad(a));
    for (std::size_t i = 0; i < out.numel(); ++i)
      out.d_->value[i] = a.d_->value[i] > 0.0 ? a.d_->value[i] : 0.0;
    if (out.requires_grad()) {
      auto ad = a.d_;
      auto od = out.d_;
      record([ad, od] {
        if (od->grad.empty() || !ad->requires_grad) return;
        detail::ensure_grad(*ad);
        for (std::size_t i = 0; i < od->grad.size(); ++i)
          if (ad->value[i] > 0.0) ad->grad[i] += od->grad[i];
      });
    }
    return out;
  }

  Tensor exp(const Tensor& a) {
    Tensor out = fresh(a.rows(), a.cols(), wants_grad(a));
    for (std::size_t i = 0; i < out.numel(); ++i) out.d_->value[i] = std::exp(a.d_->value[i]);
    if (out.requires_grad()) {
      auto ad = a.d_;
      auto od = out.d_;
      record([ad, od] {
        if (od->grad.empty() || !ad->requires_grad) return;
        detail::ensure_grad(*ad);
        for (std::size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i] * od->value[i];
      });
    }
    return out;
  }

  Tensor log(const Tensor& a) {
    for (std::size_t i = 0; i < a.numel(); ++i)
      if (!(a.d_->value[i] > 0.0))
        throw DomainError("log: non-positive entry " + std::to_string(a.d_->value[i]) + " at (" +
                          std::to_string(i / a.cols()) + "," + std::to_string(i % a.cols()) + ")");
    Tensor out = fresh(a.rows(), a.cols(), wants_grad(a));
    for (std::size_t i = 0; i < out.numel(); ++i) out.d_->value[i] = std::log(a.d_->value[i]);
    if (out.requires_grad()) {
      auto ad = a.d_;
      auto od = out.d_;
      record([ad, od] {
        if (od->grad.empty() || !ad->requires_grad) return;
        detail::ensure_grad(*ad);
        for (std::size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += od->grad[i] / ad->value[i];
      });
    }
    return out;
  }

  // Row-wise softmax with the usual max-shift for stability.
  Tensor softmax_rows(const Tensor& a) {
    const std::size_t n = a.rows(), c = a.cols();
    Tensor out = fresh(n, c, wants_grad(a));
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = a.d_->value.data() + i * c;
      double* yi = out.d_->value.data() + i * c;
      double mx = xi[0];
      for (std::size_t j = 1; j < c; ++j) mx = xi[j] > mx ? xi[j] : mx;
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        yi[j] = std::exp(xi[j] - mx);
        s += yi[j];
      }
      for (std::size_t j = 0; j < c; ++j) yi[j] /= s;
    }
    if (out.requires_grad()) {
      auto ad = a.d_;
      auto od = out.d_;
      record([ad, od, n, c] {
        if (od->grad.empty() || !ad->requires_grad) return;
        detail::ensure_grad(*ad);
        for (std::size_t i = 0; i < n; ++i) {
          const double* yi = od->value.data() + i * c;
          const double* gi = od->grad.data() + i * c;
          double gy = 0.0;
          for (std::size_t j = 0; j < c; ++j) gy += gi[j] * yi[j];
          double* dai = ad->grad.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) dai[j] += yi[j] * (gi[j] - gy);
        }
      });
    }
    return out;
  }

  // Per-row Euclidean norm, n x 1. Subgradient 0 at the origin (guarded).
  Tensor l2norm_rows(const Tensor& a) {
    const std::size_t n = a.rows(), c = a.cols();
    Tensor out = fresh(n, 1, wants_grad(a));
    for (std::size_t i = 0; i < n; ++i)
      out.d_->value[i] = l2_norm(a.d_->value.data() + i * c, c);
    if (out.requires_grad()) {
      auto ad = a.d_;
      auto od = out.d_;
      record([ad, od, n, c] {
        if (od->grad.empty() || !ad->requires_grad) return;
        detail::ensure_grad(*ad);
        for (std::size_t i = 0; i < n; ++i) {
          const double denom = od->value[i] > 1e-12 ? od->value[i] : 1e-12;
          const double gi = od->grad[i] / denom;
          const double* xi = ad->value.data() + i * c;
          double* dai = ad->grad.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) dai[j] += gi * xi[j];
        }
      });
    }
    return out;
  }

  // Sum of all entries, 1 x 1.
  Tensor sum(const Tensor& a) {
    Tensor out = fresh(1, 1, wants_grad(a));
    double s = 0.0;
    for (double x : a.d_->value) s += x;
    out.d_->value[0] = s;
    if (out.requires_grad()) {
      auto ad = a.d_;
      auto od = out.d_;
      record([ad, od] {
        if (od->grad.empty() || !ad->requires_grad) return;
        detail::ensure_grad(*ad);
        const double g = od->grad[0];
        for (double& d : ad->grad) d += g;
      });
    }
    return out;
  }

  // Mean of all entries, 1 x 1.
  Tensor mean_all(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.numel());
    return scale(sum(a), inv);
  }

  // s_ij = ||x_i - y_j||^2 for rows of x (n x d) and y (m x d); output n x m.
  Tensor pairwise_sqdist(const Tensor& x, const Tensor& y) {
    if (x.cols() != y.cols())
      throw DimensionError("pairwise_sqdist: " + shape(x) + " vs " + shape(y));
    const std::size_t n = x.rows(), m = y.rows(), d = x.cols();
    Tensor out = fresh(n, m, wants_grad(x, y));
    for (std::size_t i = 0; i < n; ++i) {
      const double* xi = x.d_->value.data() + i * d;
      double* oi = out.d_->value.data() + i * m;
      for (std::size_t j = 0; j < m; ++j)
        oi[j] = sq_dist(xi, y.d_->value.data() + j * d, d);
    }
    if (out.requires_grad()) {
      auto xd = x.d_, yd = y.d_, od = out.d_;
      record([xd, yd, od, n, m, d] {
        if (od->grad.empty()) return;
        if (xd->requires_grad) detail::ensure_grad(*xd);
        if (yd->requires_grad) detail::ensure_grad(*yd);
        for (std::size_t i = 0; i < n; ++i) {
          const double* gi = od->grad.data() + i * m;
          const double* xi = xd->value.data() + i * d;
          for (std::size_t j = 0; j < m; ++j) {
            const double g2 = 2.0 * gi[j];
            if (g2 == 0.0) continue;
            const double* yj = yd->value.data() + j * d;
            if (xd->requires_grad) {
              double* dxi = xd->grad.data() + i * d;
              for (std::size_t t = 0; t < d; ++t) dxi[t] += g2 * (xi[t] - yj[t]);
            }
            if (yd->requires_grad) {
              double* dyj = yd->grad.data() + j * d;
              for (std::size_t t = 0; t < d; ++t) dyj[t] += g2 * (yj[t] - xi[t]);
            }
          }
        }
      });
    }
    return out;
  }

  // out = S x for a symmetric structure operator S; backward reuses S.
  Tensor apply_symmetric(const LinearOperator& op, const Tensor& x) {
    if (x.rows() != op.dim())
      throw DimensionError("apply_symmetric: operator dim " + std::to_string(op.dim()) +
                           " vs tensor " + shape(x));
    const std::size_t n = x.rows(), c = x.cols();
    Tensor out = fresh(n, c, wants_grad(x));
    op.apply(x.d_->value.data(), out.d_->value.data(), c);
    if (out.requires_grad()) {
      auto xd = x.d_;
      auto od = out.d_;
      const LinearOperator* p = &op;  // caller keeps the operator alive past backward()
      record([xd, od, p, c] {
        if (od->grad.empty() || !xd->requires_grad) return;
        detail::ensure_grad(*xd);
        p->apply(od->grad.data(), xd->grad.data(), c);
      });
    }
    return out;
  }

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. The loss must
  // be scalar. Gradients of leaf tensors accumulate across calls; gradients of
  // op results are scratch space per pass and are reset here, so a second
  // backward adds exactly one more d(loss)/d(leaf), not a compounded seed.
  void backward(const Tensor& loss) {
    if (!loss.valid() || loss.rows() != 1 || loss.cols() != 1)
      throw ContractError("backward: loss must be 1x1, got " +
                          (loss.valid() ? detail::shape_of(*loss.d_) : std::string("null")));
    for (Tensor& t : results_) t.clear_grad();
    if (loss.requires_grad()) {
      detail::ensure_grad(*loss.d_);
      loss.d_->grad[0] += 1.0;
    }
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
  }

 private:
  static std::string shape(const Tensor& t) { return detail::shape_of(*t.d_); }

  static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
      throw DimensionError(std::string(op) + ": " + shape(a) + " vs " + shape(b));
  }

  bool wants_grad(const Tensor& a) const { return recording_ && a.requires_grad(); }
  bool wants_grad(const Tensor& a, const Tensor& b) const {
    return recording_ && (a.requires_grad() || b.requires_grad());
  }

  Tensor fresh(std::size_t r, std::size_t c, bool requires_grad) {
    return Tensor::leaf(Mat(r, c), requires_grad);
  }

  void record(std::function<void()> fn) { tape_.push_back(std::move(fn)); }

  // out = ca * a + cb * b, elementwise.
  Tensor lincomb(const Tensor& a, const Tensor& b, const char* name, double ca, double cb) {
    check_same_shape(a, b, name);
    Tensor out = fresh(a.rows(), a.cols(), wants_grad(a, b));
    for (std::size_t i = 0; i < out.numel(); ++i)
      out.d_->value[i] = ca * a.d_->value[i] + cb * b.d_->value[i];
    if (out.requires_grad()) {
      auto ad = a.d_, bd = b.d_, od = out.d_;
      record([ad, bd, od, ca, cb] {
        if (od->grad.empty()) return;
        if (ad->requires_grad) {
          detail::ensure_grad(*ad);
          for (std::size_t i = 0; i < od->grad.size(); ++i) ad->grad[i] += ca * od->grad[i];
        }
        if (bd->requires_grad) {
          detail::ensure_grad(*bd);
          for (std::size_t i = 0; i < od->grad.size(); ++i) bd->grad[i] += cb * od->grad[i];
        }
      });
    }
    return out;
  }

  bool recording_;
  std::vector<std::function<void()>> tape_;
};

// Plain full-batch SGD: p <- p - lr * grad(p), gradients dropped after the
// step. No momentum.
class SgdOptimizer {
 public:
  SgdOptimizer(double learning_rate, std::vector<Tensor> params)
      : lr_(learning_rate), params_(std::move(params)) {
    if (lr_ < 0.0) throw ConfigError("sgd: negative learning rate");
    for (const Tensor& p : params_)
      if (!p.requires_grad()) throw ContractError("sgd: parameter does not require grad");
  }

  void step() {
    for (Tensor& p : params_)
      if (!p.has_grad())
        throw ContractError("sgd_step: missing gradient for parameter " +
                            detail::shape_of(*p.d_));
    for (Tensor& p : params_) {
      for (std::size_t i = 0; i < p.numel(); ++i) p.d_->value[i] -= lr_ * p.d_->grad[i];
      p.d_->grad.clear();
    }
  }

  void zero_grad() {
    for (Tensor& p : params_) p.d_->grad.clear();
  }

  double learning_rate() const { return lr_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  double lr_;
  std::vector<Tensor> params_;
};

}  // namespace srcr
