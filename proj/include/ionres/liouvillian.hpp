#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "ionres/errors.hpp"
#include "ionres/hilbert.hpp"
#include "ionres/integrator.hpp"

namespace ionres {

/// One dissipative channel: rate gamma >= 0 and jump operator c, entering as
/// (gamma/2)(2 c rho c^+ - c^+ c rho - rho c^+ c).
struct LindbladChannel {
  LindbladChannel(double rate_, Operator jump_) : rate(rate_), jump(std::move(jump_)) {
    if (!(rate >= 0.0) || !std::isfinite(rate)) throw NegativeRate("channel rate " + std::to_string(rate));
  }
  double rate;
  Operator jump;
};

/// Static Lindblad generator. The Hamiltonian is optional and expressed in
/// rate units (hbar = 1).
class Generator {
 public:
  explicit Generator(std::size_t dim, std::vector<LindbladChannel> channels = {},
                     std::optional<Operator> hamiltonian = std::nullopt)
      : dim_(dim), hamiltonian_(std::move(hamiltonian)), channels_(std::move(channels)) {
    if (hamiltonian_) detail::require_same_dim(dim_, hamiltonian_->dim(), "generator Hamiltonian");
    for (const auto& ch : channels_) {
      detail::require_same_dim(dim_, ch.jump.dim(), "generator channel");
      decay_.push_back(ch.jump.matrix().adjoint() * ch.jump.matrix());
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  const std::optional<Operator>& hamiltonian() const noexcept { return hamiltonian_; }
  const std::vector<LindbladChannel>& channels() const noexcept { return channels_; }
  // c^+ c for every channel, in channel order.
  const std::vector<Matrix>& decay_operators() const noexcept { return decay_; }

  Generator scaled(double s) const {
    if (!(s > 0.0)) throw DomainError("generator scale must be positive");
    std::vector<LindbladChannel> ch;
    for (const auto& c : channels_) ch.emplace_back(c.rate * s, c.jump);
    std::optional<Operator> h;
    if (hamiltonian_) h = *hamiltonian_ * cplx(s);
    return Generator(dim_, std::move(ch), std::move(h));
  }

  Generator with(const std::vector<LindbladChannel>& extra) const {
    auto ch = channels_;
    ch.insert(ch.end(), extra.begin(), extra.end());
    return Generator(dim_, std::move(ch), hamiltonian_);
  }

 private:
  std::size_t dim_;
  std::optional<Operator> hamiltonian_;
  std::vector<LindbladChannel> channels_;
  std::vector<Matrix> decay_;
};

// ---------------------------------------------------------------------------
// Density matrices

inline double min_eigenvalue(const Matrix& hermitian) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(hermitian, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

struct StateTolerance {
  double hermitian = 1e-10;
  double trace = 1e-10;
  double positivity = 1e-8;
};

class DensityMatrix {
 public:
  DensityMatrix(std::size_t dim, Matrix rho, StateTolerance tol = {}) : dim_(dim), rho_(std::move(rho)) {
    const auto d = static_cast<Eigen::Index>(dim);
    if (rho_.rows() != d || rho_.cols() != d) throw DimensionMismatch("density matrix shape");
    if (!rho_.allFinite()) throw DomainError("density matrix has non-finite entries");
    if ((rho_ - rho_.adjoint()).cwiseAbs().maxCoeff() > tol.hermitian)
      throw DomainError("density matrix is not Hermitian");
    const double tr = rho_.trace().real();
    if (std::abs(tr - 1.0) > tol.trace) throw DomainError("density matrix trace is " + std::to_string(tr));
    const double lo = min_eigenvalue(rho_);
    if (lo < -tol.positivity) throw DomainError("density matrix eigenvalue " + std::to_string(lo));
  }

  static DensityMatrix pure(const Ket& psi) { return DensityMatrix(psi.space().dim(), psi.projector()); }
  static DensityMatrix maximally_mixed(std::size_t dim) {
    const auto d = static_cast<Eigen::Index>(dim);
    return DensityMatrix(dim, Matrix::Identity(d, d) / static_cast<double>(dim));
  }

  std::size_t dim() const noexcept { return dim_; }
  const Matrix& matrix() const noexcept { return rho_; }

 private:
  std::size_t dim_;
  Matrix rho_;
};

/// Real part of Tr[a b]; for Hermitian arguments the imaginary part is
/// round-off only.
inline double fidelity(const Matrix& reference, const Matrix& rho) {
  if (reference.rows() != rho.rows() || reference.cols() != rho.cols())
    throw DimensionMismatch("fidelity arguments differ in shape");
  const cplx tr = (reference.array() * rho.transpose().array()).sum();
  if (std::abs(tr.imag()) > 1e-10) throw DomainError("fidelity has imaginary residue " + std::to_string(tr.imag()));
  return tr.real();
}

inline double fidelity(const DensityMatrix& reference, const DensityMatrix& rho) {
  return fidelity(reference.matrix(), rho.matrix());
}

inline double trace_distance(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionMismatch("trace distance arguments");
  const Matrix diff = a - b;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (diff + diff.adjoint()), Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

// ---------------------------------------------------------------------------
// Generator action

/// L(rho) = sum_i (g_i/2)(2 c rho c^+ - c^+c rho - rho c^+c) - i[H, rho].
/// Works on any square matrix, not only valid states.
inline Matrix apply_generator(const Generator& gen, const Matrix& rho) {
  const auto d = static_cast<Eigen::Index>(gen.dim());
  if (rho.rows() != d || rho.cols() != d)
    throw DimensionMismatch("generator of dimension " + std::to_string(gen.dim()) + " applied to " +
                            std::to_string(rho.rows()) + "x" + std::to_string(rho.cols()) + " matrix");
  Matrix out = Matrix::Zero(d, d);
  const auto& decay = gen.decay_operators();
  for (std::size_t i = 0; i < gen.channels().size(); ++i) {
    const auto& ch = gen.channels()[i];
    if (ch.rate == 0.0) continue;
    const Matrix& c = ch.jump.matrix();
    const Matrix c_rho = c * rho;
    out.noalias() += ch.rate * (c_rho * c.adjoint());
    const Matrix dr = decay[i] * rho;
    out -= (0.5 * ch.rate) * (dr + rho * decay[i]);
  }
  if (gen.hamiltonian()) {
    const Matrix& h = gen.hamiltonian()->matrix();
    out -= kI * (h * rho - rho * h);
  }
  return out;
}

inline Matrix apply_generator(const Generator& gen, const DensityMatrix& rho) {
  return apply_generator(gen, rho.matrix());
}

inline constexpr std::size_t kSuperoperatorDimGuard = 128;

namespace detail {

inline void guard_dim(std::size_t dim, std::size_t max_dim) {
  if (dim > max_dim)
    throw SizeGuardExceeded("superoperator for dimension " + std::to_string(dim) + " exceeds guard " +
                            std::to_string(max_dim));
}

}  // namespace detail

/// Column-stacking vectorization: vec(L(rho)) = M vec(rho), with
/// vec(A X B) = (B^T kron A) vec(X).
inline Matrix build_superoperator(const Generator& gen, std::size_t max_dim = kSuperoperatorDimGuard) {
  detail::guard_dim(gen.dim(), max_dim);
  const auto d = static_cast<Eigen::Index>(gen.dim());
  const Matrix id = Matrix::Identity(d, d);
  Matrix m = Matrix::Zero(d * d, d * d);
  const auto& decay = gen.decay_operators();
  for (std::size_t i = 0; i < gen.channels().size(); ++i) {
    const auto& ch = gen.channels()[i];
    if (ch.rate == 0.0) continue;
    const Matrix& c = ch.jump.matrix();
    m += ch.rate * Matrix(Eigen::kroneckerProduct(c.conjugate(), c));
    m -= (0.5 * ch.rate) * Matrix(Eigen::kroneckerProduct(id, decay[i]));
    m -= (0.5 * ch.rate) * Matrix(Eigen::kroneckerProduct(decay[i].transpose(), id));
  }
  if (gen.hamiltonian()) {
    const Matrix& h = gen.hamiltonian()->matrix();
    m -= kI * Matrix(Eigen::kroneckerProduct(id, h));
    m += kI * Matrix(Eigen::kroneckerProduct(h.transpose(), id));
  }
  return m;
}

inline Vector vectorize(const Matrix& rho) { return Eigen::Map<const Vector>(rho.data(), rho.size()); }

inline Matrix unvectorize(const Vector& v, Eigen::Index dim) { return Eigen::Map<const Matrix>(v.data(), dim, dim); }

/// Orthonormal Hermitian operator basis: E_jj, (E_jk + E_kj)/sqrt2 and
/// i(E_jk - E_kj)/sqrt2 for j < k. Each basis element has at most two
/// entries, recorded as (vec index, value) pairs.
struct HermitianBasis {
  struct Entry {
    Eigen::Index index;
    cplx value;
  };
  std::vector<std::array<Entry, 2>> elements;
  std::vector<int> counts;

  explicit HermitianBasis(Eigen::Index d) {
    const double s = 1.0 / std::sqrt(2.0);
    auto idx = [d](Eigen::Index i, Eigen::Index j) { return i + j * d; };
    for (Eigen::Index j = 0; j < d; ++j) {
      elements.push_back({Entry{idx(j, j), 1.0}, Entry{0, 0.0}});
      counts.push_back(1);
    }
    for (Eigen::Index j = 0; j < d; ++j)
      for (Eigen::Index k = j + 1; k < d; ++k) {
        elements.push_back({Entry{idx(j, k), s}, Entry{idx(k, j), s}});
        counts.push_back(2);
        elements.push_back({Entry{idx(j, k), kI * s}, Entry{idx(k, j), -kI * s}});
        counts.push_back(2);
      }
  }

  Eigen::Index size() const { return static_cast<Eigen::Index>(elements.size()); }

  // Matrix whose column b is vec(B_b).
  template <class Fn>
  void for_each(Eigen::Index b, Fn&& fn) const {
    for (int e = 0; e < counts[static_cast<std::size_t>(b)]; ++e) fn(elements[static_cast<std::size_t>(b)][e]);
  }
};

/// The generator as a real matrix in the Hermitian basis:
/// R_ab = Tr[B_a L(B_b)]. Same spectrum as build_superoperator, at a quarter
/// of the cost for dense factorizations.
inline Eigen::MatrixXd hermitian_superoperator(const Generator& gen, std::size_t max_dim = kSuperoperatorDimGuard) {
  const Matrix m = build_superoperator(gen, max_dim);
  const auto d = static_cast<Eigen::Index>(gen.dim());
  const HermitianBasis basis(d);
  const Eigen::Index n = basis.size();
  // M T: combine at most two columns of M per basis element.
  Matrix mt = Matrix::Zero(n, n);
  for (Eigen::Index b = 0; b < n; ++b)
    basis.for_each(b, [&](const HermitianBasis::Entry& e) { mt.col(b) += e.value * m.col(e.index); });
  // T^+ (M T): combine at most two rows.
  Eigen::MatrixXd r(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    Eigen::RowVectorXcd row = Eigen::RowVectorXcd::Zero(n);
    basis.for_each(a, [&](const HermitianBasis::Entry& e) { row += std::conj(e.value) * mt.row(e.index); });
    r.row(a) = row.real();
  }
  return r;
}

inline Matrix from_hermitian_coordinates(const Eigen::VectorXd& x, Eigen::Index d) {
  const HermitianBasis basis(d);
  Vector v = Vector::Zero(d * d);
  for (Eigen::Index b = 0; b < basis.size(); ++b)
    basis.for_each(b, [&](const HermitianBasis::Entry& e) { v(e.index) += x(b) * e.value; });
  return unvectorize(v, d);
}

// ---------------------------------------------------------------------------
// Spectral analysis

/// Null-space tolerance relative to the Frobenius norm of the superoperator.
inline constexpr double kNullSpaceTolerance = 1e-10;

struct SteadyStates {
  std::vector<DensityMatrix> states;
  std::size_t multiplicity = 0;
  // Set when the null space is more than one-dimensional: the environment
  // may then induce transitions between steady states.
  bool degenerate = false;
};

namespace detail {

// Positive and negative parts of a Hermitian matrix.
inline std::pair<Matrix, Matrix> jordan_parts(const Matrix& x) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (x + x.adjoint()));
  const auto& ev = es.eigenvalues();
  const Matrix& v = es.eigenvectors();
  return {v * ev.cwiseMax(0.0).asDiagonal() * v.adjoint(), v * (-ev).cwiseMax(0.0).asDiagonal() * v.adjoint()};
}

}  // namespace detail

/// Real Hermitian-basis matrix of any linear map on D x D matrices that
/// sends Hermitian matrices to Hermitian matrices (one map evaluation per
/// basis element).
template <class Map>
Eigen::MatrixXd hermitian_superoperator_of(Map&& map, std::size_t dim, std::size_t max_dim = kSuperoperatorDimGuard) {
  detail::guard_dim(dim, max_dim);
  const auto d = static_cast<Eigen::Index>(dim);
  const HermitianBasis basis(d);
  const Eigen::Index n = basis.size();
  Eigen::MatrixXd r(n, n);
  for (Eigen::Index b = 0; b < n; ++b) {
    Matrix x = Matrix::Zero(d, d);
    basis.for_each(b, [&](const HermitianBasis::Entry& e) { x.data()[e.index] = e.value; });
    const Matrix y = map(static_cast<const Matrix&>(x));
    for (Eigen::Index a = 0; a < n; ++a) {
      cplx acc = 0.0;
      basis.for_each(a, [&](const HermitianBasis::Entry& e) { acc += std::conj(e.value) * y.data()[e.index]; });
      r(a, b) = acc.real();
    }
  }
  return r;
}

/// Stationary density matrices of the map whose real Hermitian-basis matrix
/// is `r`. Null vectors come from a rank-revealing QR of r^T; when the null
/// space is degenerate the positive and negative parts of each null vector
/// (themselves stationary for a trace-preserving semigroup) are used to
/// assemble a basis of states.
inline SteadyStates steady_states_from(const Eigen::MatrixXd& r, std::size_t dim, double tol = kNullSpaceTolerance) {
  const auto d = static_cast<Eigen::Index>(dim);
  const Eigen::Index n = r.rows();
  if (r.cols() != n || n != d * d) throw DimensionMismatch("Hermitian-basis superoperator does not match dimension");
  const double scale = r.norm();

  SteadyStates out;
  std::vector<Matrix> null_vectors;
  if (scale == 0.0) {
    // Every state is stationary; report the canonical basis of populations
    // and coherences via the identity decomposition below.
    out.multiplicity = static_cast<std::size_t>(n);
    for (Eigen::Index b = 0; b < n; ++b) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
      e(b) = 1.0;
      null_vectors.push_back(from_hermitian_coordinates(e, d));
    }
  } else {
    const Eigen::MatrixXd rt = r.transpose();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(rt);
    const auto& packed = qr.matrixQR();
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (std::abs(packed(i, i)) > tol * scale) ++rank;
    out.multiplicity = static_cast<std::size_t>(n - rank);
    if (rank < n) {
      Eigen::MatrixXd tail = Eigen::MatrixXd::Zero(n, n - rank);
      tail.bottomRows(n - rank).setIdentity();
      const Eigen::MatrixXd kernel = qr.householderQ() * tail;
      for (Eigen::Index k = 0; k < kernel.cols(); ++k) null_vectors.push_back(from_hermitian_coordinates(kernel.col(k), d));
    }
  }
  out.degenerate = out.multiplicity > 1;

  // Candidate states: each null vector's positive and negative parts.
  std::vector<Matrix> candidates;
  for (const auto& x : null_vectors) {
    if (out.multiplicity == 1) {
      candidates.push_back(x);
      continue;
    }
    auto [pos, neg] = detail::jordan_parts(x);
    candidates.push_back(std::move(pos));
    candidates.push_back(std::move(neg));
  }

  std::vector<Vector> chosen;  // orthonormalized vec() of accepted states
  for (auto& c : candidates) {
    if (out.states.size() == out.multiplicity) break;
    Matrix h = 0.5 * (c + c.adjoint());
    const cplx tr = h.trace();
    if (std::abs(tr) < 1e-12 * std::max(1.0, h.norm())) continue;
    h /= tr.real();
    Vector v = vectorize(h);
    for (const auto& q : chosen) v -= q.dot(v) * q;
    if (v.norm() < 1e-8 * h.norm()) continue;
    chosen.push_back(v.normalized());
    out.states.emplace_back(dim, 0.5 * (h + h.adjoint()), StateTolerance{1e-10, 1e-9, 1e-6});
  }
  return out;
}

inline SteadyStates steady_states(const Generator& gen, double tol = kNullSpaceTolerance,
                                  std::size_t max_dim = kSuperoperatorDimGuard) {
  return steady_states_from(hermitian_superoperator(gen, max_dim), gen.dim(), tol);
}

/// Asymptotic relaxation rate: -max Re(lambda) over eigenvalues outside the
/// null cluster. Zero when the whole spectrum is null.
inline double spectral_gap_from(const Eigen::MatrixXd& r, double tol = kNullSpaceTolerance) {
  const double scale = r.norm();
  if (scale == 0.0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(r, false);
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const cplx lam = es.eigenvalues()(i);
    if (std::abs(lam) <= tol * scale) continue;
    best = std::max(best, lam.real());
  }
  return std::isfinite(best) ? std::max(0.0, -best) : 0.0;
}

inline double spectral_gap(const Generator& gen, double tol = kNullSpaceTolerance,
                           std::size_t max_dim = kSuperoperatorDimGuard) {
  return spectral_gap_from(hermitian_superoperator(gen, max_dim), tol);
}

// ---------------------------------------------------------------------------
// Time propagation

struct PropagationOptions {
  StepControl step;
  double trace_tolerance = 1e-7;
  double positivity_tolerance = 1e-6;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Matrix> states;  // Hermitized outputs
  std::vector<double> trace_drift;
  std::vector<double> min_eigenvalue;
  IntegrationStats stats;

  double max_trace_drift() const {
    return trace_drift.empty() ? 0.0 : *std::max_element(trace_drift.begin(), trace_drift.end());
  }
  double min_eigenvalue_floor() const {
    return min_eigenvalue.empty() ? 0.0 : *std::min_element(min_eigenvalue.begin(), min_eigenvalue.end());
  }
};

namespace detail {

// Hermitizes and audits an output state; throws on tolerance breaches.
inline void record_output(Trajectory& traj, double t, const Matrix& y, const PropagationOptions& opt) {
  Matrix rho = 0.5 * (y + y.adjoint());
  const double drift = std::abs(rho.trace().real() - 1.0);
  const double lo = min_eigenvalue(rho);
  if (drift > opt.trace_tolerance)
    throw IntegratorFailure("trace drift " + std::to_string(drift) + " at t=" + std::to_string(t));
  if (lo < -opt.positivity_tolerance)
    throw PositivityViolation("minimum eigenvalue " + std::to_string(lo) + " at t=" + std::to_string(t));
  traj.times.push_back(t);
  traj.states.push_back(std::move(rho));
  traj.trace_drift.push_back(drift);
  traj.min_eigenvalue.push_back(lo);
}

inline void check_grid(std::span<const double> grid) {
  if (grid.empty()) throw DomainError("empty time grid");
  if (grid.front() != 0.0) throw DomainError("time grid must start at 0");
}

}  // namespace detail

/// Integrates any matrix-valued Lindblad-type right-hand side on `grid`,
/// auditing each output state.
template <class Rhs>
Trajectory propagate_with(Rhs&& rhs, const Matrix& rho0, std::span<const double> grid,
                          const PropagationOptions& opt = {}) {
  detail::check_grid(grid);
  Trajectory traj;
  traj.stats = integrate_dopri5(std::forward<Rhs>(rhs), rho0, grid, opt.step,
                                [&](std::size_t, double t, const Matrix& y) { detail::record_output(traj, t, y, opt); });
  return traj;
}

inline Trajectory propagate(const Generator& gen, const DensityMatrix& rho0, std::span<const double> grid,
                            const PropagationOptions& opt = {}) {
  detail::require_same_dim(gen.dim(), rho0.dim(), "propagate");
  return propagate_with([&gen](const Matrix& rho) { return apply_generator(gen, rho); }, rho0.matrix(), grid, opt);
}

/// `points` equally spaced times on [0, t_max].
inline std::vector<double> uniform_grid(double t_max, std::size_t points) {
  if (!(t_max > 0.0) || points < 2) throw DomainError("grid needs t_max > 0 and at least two points");
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k)
    g[k] = t_max * static_cast<double>(k) / static_cast<double>(points - 1);
  return g;
}

}  // namespace ionres
