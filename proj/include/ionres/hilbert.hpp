#pragma once

#include <cmath>
#include <complex>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "ionres/errors.hpp"

namespace ionres {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr cplx kI{0.0, 1.0};
inline constexpr double kPi = 3.14159265358979323846;

/// Default tolerance on the probability mass discarded by Fock truncation.
inline constexpr double kTruncationTolerance = 1e-8;

/// Truncated vibrational ladder |0>, ..., |dim-1>.
class FockSpace {
 public:
  explicit FockSpace(std::size_t dim) : dim_(dim) {
    if (dim < 2) throw DomainError("Fock space needs at least two levels, got " + std::to_string(dim));
  }
  std::size_t dim() const noexcept { return dim_; }
  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(dim_); }
  friend bool operator==(FockSpace, FockSpace) = default;

 private:
  std::size_t dim_;
};

namespace detail {

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw DomainError(std::string(what) + " has non-finite entries");
}

inline void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw DimensionMismatch(std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
}

}  // namespace detail

/// Dense square operator. The dimension is either a Fock dimension D or the
/// vibronic dimension 2D; arithmetic between operators of different
/// dimension is rejected.
class Operator {
 public:
  Operator(std::size_t dim, Matrix m) : dim_(dim), m_(std::move(m)) {
    if (m_.rows() != static_cast<Eigen::Index>(dim) || m_.cols() != static_cast<Eigen::Index>(dim))
      throw DimensionMismatch("operator matrix is " + std::to_string(m_.rows()) + "x" +
                              std::to_string(m_.cols()) + ", expected " + std::to_string(dim));
    detail::require_finite(m_, "operator");
  }
  Operator(FockSpace space, Matrix m) : Operator(space.dim(), std::move(m)) {}

  static Operator identity(std::size_t dim) {
    return Operator(dim, Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)));
  }
  static Operator zero(std::size_t dim) {
    return Operator(dim, Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim)));
  }

  std::size_t dim() const noexcept { return dim_; }
  const Matrix& matrix() const noexcept { return m_; }

  Operator adjoint() const { return Operator(dim_, m_.adjoint()); }

  // Largest singular value.
  double norm() const {
    if (m_.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m_);
    return svd.singularValues()(0);
  }

  bool is_hermitian(double tol = 1e-12) const {
    return (m_ - m_.adjoint()).cwiseAbs().maxCoeff() <= tol;
  }

  Operator& operator+=(const Operator& o) {
    detail::require_same_dim(dim_, o.dim_, "operator sum");
    m_ += o.m_;
    return *this;
  }
  Operator& operator-=(const Operator& o) {
    detail::require_same_dim(dim_, o.dim_, "operator difference");
    m_ -= o.m_;
    return *this;
  }
  Operator& operator*=(cplx s) {
    m_ *= s;
    return *this;
  }

  friend Operator operator+(Operator a, const Operator& b) { return a += b; }
  friend Operator operator-(Operator a, const Operator& b) { return a -= b; }
  friend Operator operator*(Operator a, cplx s) { return a *= s; }
  friend Operator operator*(cplx s, Operator a) { return a *= s; }
  friend Operator operator*(const Operator& a, const Operator& b) {
    detail::require_same_dim(a.dim_, b.dim_, "operator product");
    return Operator(a.dim_, a.m_ * b.m_);
  }

 private:
  std::size_t dim_;
  Matrix m_;
};

/// Normalized state vector on a Fock space. Constructors renormalize to
/// exactly one and remember how much probability the truncation discarded.
class Ket {
 public:
  Ket(FockSpace space, Vector amplitudes, double discarded_mass = 0.0)
      : space_(space), amps_(std::move(amplitudes)), discarded_(discarded_mass) {
    detail::require_same_dim(space.dim(), static_cast<std::size_t>(amps_.size()), "ket amplitudes");
    if (!amps_.allFinite()) throw DomainError("ket has non-finite amplitudes");
    const double n = amps_.norm();
    if (!(n > 0.0)) throw DomainError("ket has zero norm");
    amps_ /= n;
  }

  FockSpace space() const noexcept { return space_; }
  const Vector& amplitudes() const noexcept { return amps_; }
  double discarded_mass() const noexcept { return discarded_; }

  Matrix projector() const { return amps_ * amps_.adjoint(); }

  cplx overlap(const Ket& other) const {
    detail::require_same_dim(space_.dim(), other.space_.dim(), "ket overlap");
    return amps_.dot(other.amps_);
  }

 private:
  FockSpace space_;
  Vector amps_;
  double discarded_;
};

inline Vector apply(const Operator& op, const Ket& psi) {
  detail::require_same_dim(op.dim(), psi.space().dim(), "operator on ket");
  return op.matrix() * psi.amplitudes();
}

inline cplx expectation(const Operator& op, const Ket& psi) {
  return psi.amplitudes().dot(apply(op, psi));
}

// ---------------------------------------------------------------------------
// Ladder operators

inline Operator annihilation(FockSpace space) {
  Matrix a = Matrix::Zero(space.size(), space.size());
  for (Eigen::Index n = 1; n < space.size(); ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  return Operator(space, std::move(a));
}

inline Operator creation(FockSpace space) { return annihilation(space).adjoint(); }

inline Operator number_operator(FockSpace space) {
  Matrix n = Matrix::Zero(space.size(), space.size());
  for (Eigen::Index k = 0; k < space.size(); ++k) n(k, k) = static_cast<double>(k);
  return Operator(space, std::move(n));
}

/// Position-like quadrature a + a^dagger.
inline Operator quadrature(FockSpace space) {
  const auto a = annihilation(space);
  return a + a.adjoint();
}

inline Operator diagonal_operator(FockSpace space, const Vector& diag) {
  detail::require_same_dim(space.dim(), static_cast<std::size_t>(diag.size()), "diagonal profile");
  return Operator(space, Matrix(diag.asDiagonal()));
}

/// Diagonal operator with entries f(n).
template <std::invocable<std::size_t> F>
Operator diagonal_function(FockSpace space, F&& f) {
  Vector d(space.size());
  for (Eigen::Index n = 0; n < space.size(); ++n) d(n) = f(static_cast<std::size_t>(n));
  return diagonal_operator(space, d);
}

/// exp(i pi n).
inline Operator parity(FockSpace space) {
  return diagonal_function(space, [](std::size_t n) { return cplx(n % 2 == 0 ? 1.0 : -1.0); });
}

// ---------------------------------------------------------------------------
// Special functions

/// Generalized Laguerre polynomial L_n^{(a)}(x) by the three-term recurrence.
inline double laguerre(std::size_t n, double x, double a = 0.0) {
  double prev = 1.0;
  if (n == 0) return prev;
  double cur = 1.0 + a - x;
  for (std::size_t k = 1; k < n; ++k) {
    const double kk = static_cast<double>(k);
    const double next = ((2.0 * kk + 1.0 + a - x) * cur - (kk + a) * prev) / (kk + 1.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

/// Eigenvalue of the Lamb-Dicke operator function f_k(n) for Fock level n:
///   e^{-eta^2/2} sum_{l=0}^{n} (-1)^l eta^{2l} n! / (l! (l+k)! (n-l)!).
/// Consecutive terms are related by a ratio, so no factorial is formed.
inline double fk_coefficient(std::size_t k, std::size_t n, double eta) {
  if (eta < 0.0) throw DomainError("Lamb-Dicke parameter must be non-negative");
  double term = 1.0;
  for (std::size_t j = 2; j <= k; ++j) term /= static_cast<double>(j);
  double sum = term;
  const double e2 = eta * eta;
  for (std::size_t l = 0; l < n; ++l) {
    term *= -e2 * static_cast<double>(n - l) / (static_cast<double>(l + 1) * static_cast<double>(l + k + 1));
    sum += term;
  }
  return std::exp(-0.5 * e2) * sum;
}

inline Operator fk_operator(FockSpace space, std::size_t k, double eta) {
  if (!(eta > 0.0)) throw DomainError("fk_operator needs eta > 0");
  return diagonal_function(space, [&](std::size_t n) { return cplx(fk_coefficient(k, n, eta)); });
}

// ---------------------------------------------------------------------------
// States

namespace detail {

inline double tail_mass(const Vector& untruncated_norm_one) {
  return std::max(0.0, 1.0 - untruncated_norm_one.squaredNorm());
}

inline void check_tail(double tail, double tol, const char* what) {
  if (tail > tol)
    throw TruncationError(std::string(what) + " loses " + std::to_string(tail) +
                          " probability to truncation (tolerance " + std::to_string(tol) + ")");
}

// e^{-|alpha|^2/2} alpha^n / sqrt(n!) for n < dim.
inline Vector coherent_amplitudes(FockSpace space, cplx alpha) {
  Vector c(space.size());
  c(0) = std::exp(-0.5 * std::norm(alpha));
  for (Eigen::Index n = 1; n < space.size(); ++n) c(n) = c(n - 1) * alpha / std::sqrt(static_cast<double>(n));
  return c;
}

}  // namespace detail

inline Ket fock_state(FockSpace space, std::size_t n) {
  if (n >= space.dim()) throw DomainError("Fock level " + std::to_string(n) + " outside space");
  Vector v = Vector::Zero(space.size());
  v(static_cast<Eigen::Index>(n)) = 1.0;
  return Ket(space, std::move(v));
}

/// Arbitrary amplitude list, normalized on construction.
inline Ket amplitude_state(FockSpace space, std::span<const cplx> amplitudes) {
  if (amplitudes.size() > space.dim())
    throw TruncationError("amplitude list of length " + std::to_string(amplitudes.size()) +
                          " does not fit in dimension " + std::to_string(space.dim()));
  Vector v = Vector::Zero(space.size());
  for (std::size_t n = 0; n < amplitudes.size(); ++n) v(static_cast<Eigen::Index>(n)) = amplitudes[n];
  return Ket(space, std::move(v));
}

inline Ket coherent_state(FockSpace space, cplx alpha, double tol = kTruncationTolerance) {
  Vector c = detail::coherent_amplitudes(space, alpha);
  const double tail = detail::tail_mass(c);
  detail::check_tail(tail, tol, "coherent state");
  return Ket(space, std::move(c), tail);
}

/// (|alpha> + i|-alpha>) / sqrt(2).
inline Ket cat_plus_state(FockSpace space, cplx alpha, double tol = kTruncationTolerance) {
  const Vector plus = detail::coherent_amplitudes(space, alpha);
  const Vector minus = detail::coherent_amplitudes(space, -alpha);
  // <alpha|-alpha> is real, so the untruncated superposition has norm^2 = 2.
  Vector c = (plus + kI * minus) / std::sqrt(2.0);
  const double tail = detail::tail_mass(c);
  detail::check_tail(tail, tol, "cat state");
  return Ket(space, std::move(c), tail);
}

inline Ket squeezed_vacuum(FockSpace space, double r, double tol = kTruncationTolerance) {
  if (r < 0.0) throw DomainError("squeezing factor must be non-negative");
  const double chi = std::tanh(r);
  Vector c = Vector::Zero(space.size());
  c(0) = 1.0 / std::sqrt(std::cosh(r));
  for (Eigen::Index n = 2; n < space.size(); n += 2)
    c(n) = -chi * c(n - 2) * std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n));
  const double tail = detail::tail_mass(c);
  detail::check_tail(tail, tol, "squeezed vacuum");
  return Ket(space, std::move(c), tail);
}

/// Truncated phase state (N+1)^{-1/2} sum_{n<=N} e^{i n phi} |n>.
inline Ket phase_state(FockSpace space, std::size_t N, double phi) {
  if (N >= space.dim())
    throw DomainError("phase state order " + std::to_string(N) + " needs dimension > N");
  Vector c = Vector::Zero(space.size());
  for (std::size_t n = 0; n <= N; ++n)
    c(static_cast<Eigen::Index>(n)) = std::polar(1.0, static_cast<double>(n) * phi);
  return Ket(space, std::move(c));
}

// ---------------------------------------------------------------------------
// Unitaries

inline Operator displacement(FockSpace space, cplx beta) {
  const Matrix a = annihilation(space).matrix();
  const Matrix gen = beta * a.adjoint() - std::conj(beta) * a;
  return Operator(space, gen.exp());
}

/// Unitary mapping the vacuum onto cat_plus_state(alpha): the quadratic
/// phase exp[i pi n(n-1)/2] after a displacement. The displacement amplitude
/// is -i alpha: the phase gate rotates |beta> into a superposition of
/// |+-i beta>, so displacing by alpha itself would yield the cat at i alpha.
inline Operator cat_unitary(FockSpace space, cplx alpha, double tol = kTruncationTolerance) {
  const cplx beta = -kI * alpha;
  detail::check_tail(detail::tail_mass(detail::coherent_amplitudes(space, beta)), tol, "cat unitary");
  const auto phase = diagonal_function(space, [](std::size_t n) {
    // n(n-1)/2 mod 2 decides the sign; the phase is always +-1.
    const std::size_t half = (n * (n - 1) / 2) % 2;
    return cplx(half == 0 ? 1.0 : -1.0);
  });
  return phase * displacement(space, beta);
}

/// Smallest dimension satisfying the default sizing rule
/// max(20, ceil(8 <n> + 10)).
inline std::size_t default_truncation(double mean_photon_number) {
  const double d = std::ceil(8.0 * mean_photon_number + 10.0);
  return std::max<std::size_t>(20, static_cast<std::size_t>(d));
}

}  // namespace ionres
