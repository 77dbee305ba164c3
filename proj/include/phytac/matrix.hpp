#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "phytac/errors.hpp"
#include "phytac/rng.hpp"

namespace phytac {

// Dense row-major matrix of doubles. Control and geometry math run in
// 64-bit throughout; 32-bit precision exists only on disk.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), d_(rows * cols, fill) {}

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Mat randn(std::size_t rows, std::size_t cols, Rng& rng,
                   double scale = 1.0) {
    Mat m(rows, cols);
    for (double& v : m.d_) v = scale * rng.normal();
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return d_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return d_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return d_[i * cols_ + j];
  }
  double& operator[](std::size_t k) { return d_[k]; }
  double operator[](std::size_t k) const { return d_[k]; }

  double* data() { return d_.data(); }
  const double* data() const { return d_.data(); }
  std::vector<double>& raw() { return d_; }
  const std::vector<double>& raw() const { return d_; }
  auto begin() { return d_.begin(); }
  auto end() { return d_.end(); }
  auto begin() const { return d_.begin(); }
  auto end() const { return d_.end(); }

  bool same_shape(const Mat& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  bool all_finite() const {
    for (double v : d_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Largest absolute entry.
  double max_abs() const {
    double m = 0.0;
    for (double v : d_) m = std::max(m, std::abs(v));
    return m;
  }

  // Operator infinity norm (max absolute row sum).
  double norm_inf_op() const {
    double m = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols_; ++j) s += std::abs((*this)(i, j));
      m = std::max(m, s);
    }
    return m;
  }

  double frobenius() const {
    double s = 0.0;
    for (double v : d_) s += v * v;
    return std::sqrt(s);
  }

  Mat transpose() const {
    Mat t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  Mat& operator+=(const Mat& o) {
    require_same_shape(o, "operator+=");
    for (std::size_t k = 0; k < d_.size(); ++k) d_[k] += o.d_[k];
    return *this;
  }
  Mat& operator-=(const Mat& o) {
    require_same_shape(o, "operator-=");
    for (std::size_t k = 0; k < d_.size(); ++k) d_[k] -= o.d_[k];
    return *this;
  }
  Mat& operator*=(double s) {
    for (double& v : d_) v *= s;
    return *this;
  }

  friend Mat operator+(Mat a, const Mat& b) { return a += b; }
  friend Mat operator-(Mat a, const Mat& b) { return a -= b; }
  friend Mat operator*(Mat a, double s) { return a *= s; }
  friend Mat operator*(double s, Mat a) { return a *= s; }

  friend Mat operator*(const Mat& a, const Mat& b) { return matmul(a, b); }

  void require_same_shape(const Mat& o, const char* where) const {
    if (!same_shape(o))
      throw contract_error(std::string(where) + ": shape mismatch " +
                           shape_str() + " vs " + o.shape_str());
  }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  friend Mat matmul(const Mat& a, const Mat& b);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> d_;
};

inline Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols_ != b.rows_)
    throw contract_error("matmul: inner dimensions differ, " + a.shape_str() +
                         " * " + b.shape_str());
  Mat c(a.rows_, b.cols_);
  const std::size_t n = a.rows_, k = a.cols_, m = b.cols_;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * k;
    double* ci = c.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
  return c;
}

namespace detail {

struct Lu {
  Mat lu;                    // combined factors
  std::vector<std::size_t> piv;
  bool singular = false;
};

inline Lu lu_factor(Mat a) {
  const std::size_t n = a.rows();
  Lu f{std::move(a), std::vector<std::size_t>(n), false};
  Mat& m = f.lu;
  for (std::size_t i = 0; i < n; ++i) f.piv[i] = i;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    double best = std::abs(m(c, c));
    for (std::size_t r = c + 1; r < n; ++r) {
      const double v = std::abs(m(r, c));
      if (v > best) {
        best = v;
        p = r;
      }
    }
    if (best == 0.0) {
      f.singular = true;
      return f;
    }
    if (p != c) {
      std::swap(f.piv[c], f.piv[p]);
      for (std::size_t j = 0; j < n; ++j) std::swap(m(c, j), m(p, j));
    }
    const double inv = 1.0 / m(c, c);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double l = m(r, c) * inv;
      m(r, c) = l;
      if (l == 0.0) continue;
      for (std::size_t j = c + 1; j < n; ++j) m(r, j) -= l * m(c, j);
    }
  }
  return f;
}

inline Mat lu_solve(const Lu& f, const Mat& b) {
  const std::size_t n = f.lu.rows();
  Mat x(n, b.cols());
  for (std::size_t col = 0; col < b.cols(); ++col) {
    // forward substitution on the permuted right-hand side
    for (std::size_t i = 0; i < n; ++i) {
      double s = b(f.piv[i], col);
      for (std::size_t j = 0; j < i; ++j) s -= f.lu(i, j) * x(j, col);
      x(i, col) = s;
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = x(ii, col);
      for (std::size_t j = ii + 1; j < n; ++j) s -= f.lu(ii, j) * x(j, col);
      x(ii, col) = s / f.lu(ii, ii);
    }
  }
  return x;
}

}  // namespace detail

// Solve A X = B for square A with partial pivoting and iterative refinement.
// Throws numeric_error when A is singular or the infinity-norm condition
// estimate exceeds `max_condition`.
inline Mat solve_linear(const Mat& a, const Mat& b,
                        double max_condition = 1e12) {
  if (a.rows() != a.cols())
    throw contract_error("solve_linear: matrix not square, " + a.shape_str());
  if (a.rows() != b.rows())
    throw contract_error("solve_linear: rhs rows " + b.shape_str() +
                         " do not match " + a.shape_str());
  if (!a.all_finite() || !b.all_finite())
    throw numeric_error("solve_linear: non-finite input");

  const std::size_t n = a.rows();
  detail::Lu f = detail::lu_factor(a);
  if (f.singular) throw numeric_error("solve_linear: singular matrix");

  // Condition estimate ||A||_inf * ||A^-1||_inf via the explicit inverse;
  // matrices here are small (latent dimension scale).
  Mat inv = detail::lu_solve(f, Mat::identity(n));
  const double cond = a.norm_inf_op() * inv.norm_inf_op();
  if (!std::isfinite(cond) || cond > max_condition)
    throw numeric_error("solve_linear: ill-conditioned matrix, condition ~" +
                        std::to_string(cond));

  Mat x = detail::lu_solve(f, b);
  // Two refinement sweeps keep the residual at working precision.
  for (int sweep = 0; sweep < 2; ++sweep) {
    Mat r = b - matmul(a, x);
    if (r.max_abs() == 0.0) break;
    x += detail::lu_solve(f, r);
  }
  if (!x.all_finite()) throw numeric_error("solve_linear: non-finite solution");
  return x;
}

// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
// Eigenvalues ascending; eigenvectors are the matching columns of `vectors`.
struct Eig3 {
  std::array<double, 3> values;
  std::array<std::array<double, 3>, 3> vectors;  // vectors[i] = i-th column
};

inline Eig3 sym_eig3(const std::array<std::array<double, 3>, 3>& m_in) {
  std::array<std::array<double, 3>, 3> a = m_in;
  std::array<std::array<double, 3>, 3> v = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  for (int sweep = 0; sweep < 50; ++sweep) {
    double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
    if (off < 1e-15) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < 3; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < 3; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return a[i][i] < a[j][j]; });
  Eig3 out{};
  for (int i = 0; i < 3; ++i) {
    out.values[i] = a[order[i]][order[i]];
    for (int k = 0; k < 3; ++k) out.vectors[i][k] = v[k][order[i]];
  }
  return out;
}

// Spectral radius estimate by repeated squaring with normalization:
// rho(M) ~ prod_j n_j^(2^-j) * ||M_s||^(2^-s) after s squarings.
inline double spectral_radius(Mat m, int squarings = 10) {
  if (m.rows() != m.cols())
    throw contract_error("spectral_radius: matrix not square");
  double log_acc = 0.0;
  double weight = 1.0;
  for (int j = 1; j <= squarings; ++j) {
    m = matmul(m, m);
    const double n = m.norm_inf_op();
    weight *= 0.5;
    if (n == 0.0) return 0.0;
    log_acc += weight * std::log(n);
    m *= 1.0 / n;
  }
  return std::exp(log_acc);
}

}  // namespace phytac
