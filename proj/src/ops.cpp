#include "sfa/ops.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace sfa {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;

void require_2d(const Tensor& t, const char* who) {
  if (t.ndim() != 2)
    throw std::invalid_argument(std::string(who) + ": expected a 2-d tensor, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(who) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

// Rows of the flattened [slices x n] view of a tensor reduced over its last axis.
long long slice_count(const Tensor& t) { return t.size() / t.shape().back(); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(size_t(m) * size_t(n));
  {
    ConstMap A(a.data().data(), m, k), B(b.data().data(), k, n);
    Eigen::Map<RowMat> C(out.data(), m, n);
    C.noalias() = A * B;
  }
  Tensor y = make_op_output({m, n}, std::move(out), a.requires_grad() || b.requires_grad());
  auto an = a.node(), bn = b.node(), yn = y.node();
  record(y, [an, bn, yn, m, k, n] {
    ConstMap G(yn->grad.data(), m, n);
    if (an->requires_grad) {
      std::vector<double> da(size_t(m) * size_t(k));
      Eigen::Map<RowMat> D(da.data(), m, k);
      ConstMap B(bn->value.data(), k, n);
      D.noalias() = G * B.transpose();
      accumulate_grad(an, da);
    }
    if (bn->requires_grad) {
      std::vector<double> db(size_t(k) * size_t(n));
      Eigen::Map<RowMat> D(db.data(), k, n);
      ConstMap A(an->value.data(), m, k);
      D.noalias() = A.transpose() * G;
      accumulate_grad(bn, db);
    }
  });
  return y;
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(size_t(m) * size_t(n));
  auto src = a.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[size_t(j) * m + i] = src[size_t(i) * n + j];
  Tensor y = make_op_output({n, m}, std::move(out), a.requires_grad());
  auto an = a.node(), yn = y.node();
  record(y, [an, yn, m, n] {
    std::vector<double> da(size_t(m) * size_t(n));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) da[size_t(i) * n + j] = yn->grad[size_t(j) * m + i];
    accumulate_grad(an, da);
  });
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  Tensor y = make_op_output(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
  auto an = a.node(), bn = b.node(), yn = y.node();
  record(y, [an, bn, yn] {
    accumulate_grad(an, yn->grad);
    accumulate_grad(bn, yn->grad);
  });
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  Tensor y = make_op_output(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
  auto an = a.node(), bn = b.node(), yn = y.node();
  record(y, [an, bn, yn] {
    if (an->requires_grad) {
      std::vector<double> da(yn->grad.size());
      for (size_t i = 0; i < da.size(); ++i) da[i] = yn->grad[i] * bn->value[i];
      accumulate_grad(an, da);
    }
    if (bn->requires_grad) {
      std::vector<double> db(yn->grad.size());
      for (size_t i = 0; i < db.size(); ++i) db[i] = yn->grad[i] * an->value[i];
      accumulate_grad(bn, db);
    }
  });
  return y;
}

Tensor scale(const Tensor& a, double c) {
  auto av = a.data();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  Tensor y = make_op_output(a.shape(), std::move(out), a.requires_grad());
  auto an = a.node(), yn = y.node();
  record(y, [an, yn, c] {
    std::vector<double> da(yn->grad.size());
    for (size_t i = 0; i < da.size(); ++i) da[i] = yn->grad[i] * c;
    accumulate_grad(an, da);
  });
  return y;
}

Tensor add_bias(const Tensor& a, const Tensor& b) {
  require_2d(a, "add_bias");
  if (b.ndim() != 1 || b.dim(0) != a.cols())
    throw std::invalid_argument("add_bias: bias " + shape_str(b.shape()) +
                                " does not match matrix " + shape_str(a.shape()));
  const int m = a.rows(), n = a.cols();
  auto av = a.data(), bv = b.data();
  std::vector<double> out(av.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[size_t(i) * n + j] = av[size_t(i) * n + j] + bv[size_t(j)];
  Tensor y = make_op_output(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
  auto an = a.node(), bn = b.node(), yn = y.node();
  record(y, [an, bn, yn, m, n] {
    accumulate_grad(an, yn->grad);
    if (bn->requires_grad) {
      std::vector<double> db(size_t(n), 0.0);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) db[size_t(j)] += yn->grad[size_t(i) * n + j];
      accumulate_grad(bn, db);
    }
  });
  return y;
}

Tensor softmax(const Tensor& a) {
  const int n = a.shape().back();
  const long long rows = slice_count(a);
  auto av = a.data();
  std::vector<double> out(av.size());
  for (long long r = 0; r < rows; ++r) {
    const double* x = av.data() + r * n;
    double* y = out.data() + r * n;
    double mx = x[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    for (int j = 0; j < n; ++j) y[j] /= s;
  }
  Tensor y = make_op_output(a.shape(), std::move(out), a.requires_grad());
  auto an = a.node(), yn = y.node();
  record(y, [an, yn, n, rows] {
    std::vector<double> da(yn->grad.size());
    for (long long r = 0; r < rows; ++r) {
      const double* g = yn->grad.data() + r * n;
      const double* p = yn->value.data() + r * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += g[j] * p[j];
      for (int j = 0; j < n; ++j) da[size_t(r * n + j)] = p[j] * (g[j] - dot);
    }
    accumulate_grad(an, da);
  });
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const int n = x.shape().back();
  if (gamma.ndim() != 1 || gamma.dim(0) != n || beta.ndim() != 1 || beta.dim(0) != n)
    throw std::invalid_argument("layer_norm: affine params " + shape_str(gamma.shape()) + "/" +
                                shape_str(beta.shape()) + " do not match last axis of " +
                                shape_str(x.shape()));
  const long long rows = slice_count(x);
  auto xv = x.data();
  auto gv = gamma.data(), bv = beta.data();
  std::vector<double> out(xv.size());
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(size_t(rows));
  for (long long r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += xr[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[size_t(r)] = inv;
    for (int j = 0; j < n; ++j) {
      double xh = (xr[j] - mu) * inv;
      (*xhat)[size_t(r * n + j)] = xh;
      out[size_t(r * n + j)] = xh * gv[j] + bv[j];
    }
  }
  bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  Tensor y = make_op_output(x.shape(), std::move(out), rg);
  auto xn = x.node(), gn = gamma.node(), bn = beta.node(), yn = y.node();
  record(y, [xn, gn, bn, yn, xhat, inv_std, n, rows] {
    if (gn->requires_grad || bn->requires_grad) {
      std::vector<double> dg(size_t(n), 0.0), db(size_t(n), 0.0);
      for (long long r = 0; r < rows; ++r)
        for (int j = 0; j < n; ++j) {
          const double g = yn->grad[size_t(r * n + j)];
          dg[size_t(j)] += g * (*xhat)[size_t(r * n + j)];
          db[size_t(j)] += g;
        }
      accumulate_grad(gn, dg);
      accumulate_grad(bn, db);
    }
    if (xn->requires_grad) {
      std::vector<double> dx(yn->grad.size());
      for (long long r = 0; r < rows; ++r) {
        double mean_gg = 0.0, mean_ggx = 0.0;
        for (int j = 0; j < n; ++j) {
          const double gg = yn->grad[size_t(r * n + j)] * gn->value[size_t(j)];
          mean_gg += gg;
          mean_ggx += gg * (*xhat)[size_t(r * n + j)];
        }
        mean_gg /= n;
        mean_ggx /= n;
        const double inv = (*inv_std)[size_t(r)];
        for (int j = 0; j < n; ++j) {
          const double gg = yn->grad[size_t(r * n + j)] * gn->value[size_t(j)];
          dx[size_t(r * n + j)] =
              inv * (gg - mean_gg - (*xhat)[size_t(r * n + j)] * mean_ggx);
        }
      }
      accumulate_grad(xn, dx);
    }
  });
  return y;
}

namespace {
const double kInvSqrt2 = 0.70710678118654752440;
const double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Tensor gelu(const Tensor& x) {
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (size_t i = 0; i < out.size(); ++i) {
    const double v = xv[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  Tensor y = make_op_output(x.shape(), std::move(out), x.requires_grad());
  auto xn = x.node(), yn = y.node();
  record(y, [xn, yn] {
    std::vector<double> dx(yn->grad.size());
    for (size_t i = 0; i < dx.size(); ++i) {
      const double v = xn->value[i];
      const double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      dx[i] = yn->grad[i] * (phi + v * pdf);
    }
    accumulate_grad(xn, dx);
  });
  return y;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                     double label_smoothing) {
  require_2d(logits, "cross_entropy");
  const int b = logits.rows(), c = logits.cols();
  if (int(labels.size()) != b)
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(b) + " rows");
  for (int i = 0; i < b; ++i)
    if (labels[size_t(i)] < 0 || labels[size_t(i)] >= c)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(labels[size_t(i)]) +
                                  " at row " + std::to_string(i) + " outside [0, " +
                                  std::to_string(c) + ")");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw std::invalid_argument("cross_entropy: label_smoothing must be in [0, 1)");

  auto lv = logits.data();
  auto probs = std::make_shared<std::vector<double>>(lv.size());
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    const double* x = lv.data() + size_t(i) * c;
    double* p = probs->data() + size_t(i) * c;
    double mx = x[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      p[j] = std::exp(x[j] - mx);
      s += p[j];
    }
    const double log_s = std::log(s);
    for (int j = 0; j < c; ++j) p[j] /= s;
    // -sum_j q_j * log p_j with q = smoothing/c + (1-smoothing) * onehot
    const double uniform = label_smoothing / c;
    double row = 0.0;
    for (int j = 0; j < c; ++j) {
      double q = uniform + (j == labels[size_t(i)] ? 1.0 - label_smoothing : 0.0);
      if (q != 0.0) row -= q * ((x[j] - mx) - log_s);
    }
    loss += row;
  }
  loss /= b;
  Tensor y = make_op_output({1}, {loss}, logits.requires_grad());
  auto ln = logits.node(), yn = y.node();
  const auto labels_copy = labels;
  record(y, [ln, yn, probs, labels_copy, b, c, label_smoothing] {
    const double g = yn->grad[0] / b;
    const double uniform = label_smoothing / c;
    std::vector<double> dl(ln->value.size());
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < c; ++j) {
        double q = uniform + (j == labels_copy[size_t(i)] ? 1.0 - label_smoothing : 0.0);
        dl[size_t(i) * c + j] = g * ((*probs)[size_t(i) * c + j] - q);
      }
    accumulate_grad(ln, dl);
  });
  return y;
}

Tensor sum_all(const Tensor& x) {
  auto xv = x.data();
  double s = 0.0;
  for (double v : xv) s += v;
  Tensor y = make_op_output({1}, {s}, x.requires_grad());
  auto xn = x.node(), yn = y.node();
  record(y, [xn, yn] {
    std::vector<double> dx(xn->value.size(), yn->grad[0]);
    accumulate_grad(xn, dx);
  });
  return y;
}

Tensor mean_rows(const Tensor& x) {
  require_2d(x, "mean_rows");
  const int m = x.rows(), n = x.cols();
  auto xv = x.data();
  std::vector<double> out(size_t(n), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[size_t(j)] += xv[size_t(i) * n + j];
  for (double& v : out) v /= m;
  Tensor y = make_op_output({1, n}, std::move(out), x.requires_grad());
  auto xn = x.node(), yn = y.node();
  record(y, [xn, yn, m, n] {
    std::vector<double> dx(size_t(m) * size_t(n));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) dx[size_t(i) * n + j] = yn->grad[size_t(j)] / m;
    accumulate_grad(xn, dx);
  });
  return y;
}

namespace {

Tensor slice_impl(const Tensor& x, int r0, int len, bool rows_axis, const char* who) {
  require_2d(x, who);
  const int m = x.rows(), n = x.cols();
  const int limit = rows_axis ? m : n;
  if (r0 < 0 || len <= 0 || r0 + len > limit)
    throw std::invalid_argument(std::string(who) + ": window [" + std::to_string(r0) + ", " +
                                std::to_string(r0 + len) + ") outside " + shape_str(x.shape()));
  auto xv = x.data();
  std::vector<double> out;
  if (rows_axis) {
    out.assign(xv.begin() + size_t(r0) * n, xv.begin() + size_t(r0 + len) * n);
  } else {
    out.resize(size_t(m) * size_t(len));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < len; ++j) out[size_t(i) * len + j] = xv[size_t(i) * n + r0 + j];
  }
  Tensor y = make_op_output({rows_axis ? len : m, rows_axis ? n : len}, std::move(out),
                            x.requires_grad());
  auto xn = x.node(), yn = y.node();
  record(y, [xn, yn, r0, len, rows_axis, m, n] {
    std::vector<double> dx(size_t(m) * size_t(n), 0.0);
    if (rows_axis) {
      for (size_t i = 0; i < yn->grad.size(); ++i) dx[size_t(r0) * n + i] = yn->grad[i];
    } else {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < len; ++j) dx[size_t(i) * n + r0 + j] = yn->grad[size_t(i) * len + j];
    }
    accumulate_grad(xn, dx);
  });
  return y;
}

Tensor concat_impl(const std::vector<Tensor>& parts, bool rows_axis, const char* who) {
  if (parts.empty()) throw std::invalid_argument(std::string(who) + ": no parts");
  for (const auto& p : parts) require_2d(p, who);
  const int fixed = rows_axis ? parts[0].cols() : parts[0].rows();
  int total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    const int f = rows_axis ? p.cols() : p.rows();
    if (f != fixed)
      throw std::invalid_argument(std::string(who) + ": incompatible part " + shape_str(p.shape()));
    total += rows_axis ? p.rows() : p.cols();
    rg = rg || p.requires_grad();
  }
  const int m = rows_axis ? total : fixed;
  const int n = rows_axis ? fixed : total;
  std::vector<double> out(size_t(m) * size_t(n));
  int off = 0;
  for (const auto& p : parts) {
    auto pv = p.data();
    if (rows_axis) {
      std::copy(pv.begin(), pv.end(), out.begin() + size_t(off) * n);
      off += p.rows();
    } else {
      const int pc = p.cols();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < pc; ++j) out[size_t(i) * n + off + j] = pv[size_t(i) * pc + j];
      off += pc;
    }
  }
  Tensor y = make_op_output({m, n}, std::move(out), rg);
  std::vector<std::shared_ptr<detail::Node>> nodes;
  nodes.reserve(parts.size());
  for (const auto& p : parts) nodes.push_back(p.node());
  auto yn = y.node();
  record(y, [nodes, yn, rows_axis, m, n] {
    int off = 0;
    for (const auto& pn : nodes) {
      const int pr = pn->shape[0], pc = pn->shape[1];
      if (pn->requires_grad) {
        std::vector<double> dp(size_t(pr) * size_t(pc));
        if (rows_axis) {
          std::copy(yn->grad.begin() + size_t(off) * n,
                    yn->grad.begin() + size_t(off + pr) * n, dp.begin());
        } else {
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < pc; ++j) dp[size_t(i) * pc + j] = yn->grad[size_t(i) * n + off + j];
        }
        accumulate_grad(pn, dp);
      }
      off += rows_axis ? pr : pc;
    }
  });
  return y;
}

}  // namespace

Tensor slice_rows(const Tensor& x, int r0, int len) { return slice_impl(x, r0, len, true, "slice_rows"); }
Tensor slice_cols(const Tensor& x, int c0, int len) { return slice_impl(x, c0, len, false, "slice_cols"); }
Tensor concat_rows(const std::vector<Tensor>& parts) { return concat_impl(parts, true, "concat_rows"); }
Tensor concat_cols(const std::vector<Tensor>& parts) { return concat_impl(parts, false, "concat_cols"); }

}  // namespace sfa
