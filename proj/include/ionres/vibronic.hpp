#pragma once

// Two-level ion coupled to its vibrational mode. The joint density matrix is
// stored as a 2D x 2D matrix with the electronic ground state |1> in the
// upper-left block and the excited state |2> in the lower-right block.

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ionres/errors.hpp"
#include "ionres/hilbert.hpp"
#include "ionres/liouvillian.hpp"
#include "ionres/pointer.hpp"

namespace ionres {

// ---------------------------------------------------------------------------
// Environment

struct Environment {
  enum class Kind { none, thermal, random_field };
  Kind kind = Kind::none;
  double gamma = 0.0;      // thermal coupling rate
  double n_thermal = 0.0;  // thermal occupation N_T
  double lambda = 0.0;     // random-field strength mu^2 D / hbar^2

  static Environment none() { return {}; }
  static Environment thermal(double gamma, double n_thermal) { return {Kind::thermal, gamma, n_thermal, 0.0}; }
  static Environment random_field(double lambda) { return {Kind::random_field, 0.0, 0.0, lambda}; }

  /// Rate at which the environment alone adds vibrational quanta to the
  /// vacuum: gamma N_T for a thermal bath, 2 lambda for random fields.
  double heating_rate() const {
    switch (kind) {
      case Kind::thermal: return gamma * n_thermal;
      case Kind::random_field: return 2.0 * lambda;
      case Kind::none: return 0.0;
    }
    return 0.0;
  }
};

inline const char* to_string(Environment::Kind k) {
  switch (k) {
    case Environment::Kind::none: return "none";
    case Environment::Kind::thermal: return "thermal";
    case Environment::Kind::random_field: return "random_field";
  }
  return "?";
}

/// thermal(gamma, N_T) -> (gamma(N_T+1), a), (gamma N_T, a^+);
/// random_field(lambda) -> (2 lambda, a), (2 lambda, a^+).
inline std::vector<LindbladChannel> environment_channels(const Environment& env, FockSpace space) {
  const auto a = annihilation(space);
  std::vector<LindbladChannel> out;
  switch (env.kind) {
    case Environment::Kind::none: break;
    case Environment::Kind::thermal:
      if (env.gamma < 0.0 || env.n_thermal < 0.0) throw NegativeRate("thermal environment parameters must be >= 0");
      out.emplace_back(env.gamma * (env.n_thermal + 1.0), a);
      if (env.n_thermal > 0.0) out.emplace_back(env.gamma * env.n_thermal, a.adjoint());
      break;
    case Environment::Kind::random_field:
      if (env.lambda < 0.0) throw NegativeRate("random-field rate must be >= 0");
      out.emplace_back(2.0 * env.lambda, a);
      out.emplace_back(2.0 * env.lambda, a.adjoint());
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Recoil

namespace detail {

// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_legendre(std::size_t n) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(n)), w(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double z = std::cos(kPi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (std::size_t k = 2; k <= n; ++k) {
        const double kk = static_cast<double>(k);
        const double p2 = ((2.0 * kk - 1.0) * z * p1 - (kk - 1.0) * p0) / kk;
        p0 = p1;
        p1 = p2;
      }
      dp = static_cast<double>(n) * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x(static_cast<Eigen::Index>(i)) = z;
    w(static_cast<Eigen::Index>(i)) = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

}  // namespace detail

/// Angular distribution W(s) of spontaneous emission projected on the trap
/// axis, normalized so that its integral over [-1, 1] is one, plus the
/// Lamb-Dicke parameter of the recoil.
class RecoilKernel {
 public:
  RecoilKernel(double eta, std::function<double(double)> pattern, std::size_t nodes = 16)
      : eta_(eta), pattern_(std::move(pattern)), nodes_(nodes) {
    if (!(eta >= 0.0 && eta < 1.0)) throw DomainError("recoil eta must lie in [0, 1)");
    if (nodes < 2) throw DomainError("recoil quadrature needs at least two nodes");
    const auto [x, w] = detail::gauss_legendre(nodes_);
    double total = 0.0;
    for (Eigen::Index q = 0; q < x.size(); ++q) {
      const double v = pattern_(x(q));
      if (!(v >= 0.0)) throw DomainError("angular distribution must be non-negative");
      total += w(q) * v;
    }
    if (!(total > 0.0)) throw DomainError("angular distribution integrates to zero");
    norm_ = 1.0 / total;
  }

  /// Dipole emission pattern (3/8)(1 + s^2), for which <s^2> = 2/5.
  static RecoilKernel dipole(double eta, std::size_t nodes = 16) {
    return RecoilKernel(eta, [](double s) { return 0.375 * (1.0 + s * s); }, nodes);
  }

  /// Piecewise-linear interpolation of tabulated (s, W) pairs; renormalized.
  static RecoilKernel tabulated(double eta, std::vector<double> s, std::vector<double> w, std::size_t nodes = 16) {
    if (s.size() != w.size() || s.size() < 2) throw DomainError("tabulated pattern needs matching s and W lists");
    for (std::size_t i = 1; i < s.size(); ++i)
      if (!(s[i] > s[i - 1])) throw DomainError("tabulated s values must increase");
    if (s.front() > -1.0 || s.back() < 1.0) throw DomainError("tabulated pattern must cover [-1, 1]");
    auto fn = [s = std::move(s), w = std::move(w)](double x) {
      std::size_t i = 1;
      while (i + 1 < s.size() && s[i] < x) ++i;
      const double t = (x - s[i - 1]) / (s[i] - s[i - 1]);
      return (1.0 - t) * w[i - 1] + t * w[i];
    };
    return RecoilKernel(eta, std::move(fn), nodes);
  }

  double eta() const noexcept { return eta_; }
  std::size_t nodes() const noexcept { return nodes_; }
  double density(double s) const { return norm_ * pattern_(s); }

  /// Nodes and normalized weights w_q W(s_q) for an n-point rule.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> rule(std::size_t n) const {
    auto [x, w] = detail::gauss_legendre(n);
    for (Eigen::Index q = 0; q < x.size(); ++q) w(q) *= density(x(q));
    return {x, w};
  }

  /// Second moment of s under the normalized pattern.
  double second_moment() const {
    const auto [x, w] = rule(nodes_);
    return (w.array() * x.array().square()).sum();
  }

 private:
  double eta_;
  std::function<double(double)> pattern_;
  std::size_t nodes_;
  double norm_ = 1.0;
};

/// rho -> int ds W(s) e^{i eta s x} rho e^{-i eta s x} with x = a + a^+.
/// In the eigenbasis of x the map is an entrywise (Hadamard) product with
/// K(j, k) = sum_q w_q W(s_q) exp(i eta s_q (x_j - x_k)).
class RecoilMap {
 public:
  RecoilMap(const RecoilKernel& kernel, FockSpace space) : space_(space), eta_(kernel.eta()) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(quadrature(space).matrix().real());
    basis_ = es.eigenvectors().cast<cplx>();
    const Eigen::VectorXd& lam = es.eigenvalues();
    mask_ = build_mask(kernel, lam, kernel.nodes());
    const Matrix doubled = build_mask(kernel, lam, 2 * kernel.nodes());
    const double change = (doubled - mask_).cwiseAbs().maxCoeff();
    if (change > 1e-9)
      throw QuadratureNotConverged("recoil quadrature changes by " + std::to_string(change) + " when nodes double");
  }

  FockSpace space() const noexcept { return space_; }
  double eta() const noexcept { return eta_; }

  Matrix apply(const Matrix& rho) const {
    if (rho.rows() != space_.size() || rho.cols() != space_.size()) throw DimensionMismatch("recoil map argument");
    const Matrix in_x = basis_.adjoint() * rho * basis_;
    return basis_ * mask_.cwiseProduct(in_x) * basis_.adjoint();
  }

 private:
  static Matrix build_mask(const RecoilKernel& kernel, const Eigen::VectorXd& lam, std::size_t n) {
    const auto [s, w] = kernel.rule(n);
    const Eigen::Index d = lam.size();
    Matrix k = Matrix::Zero(d, d);
    for (Eigen::Index q = 0; q < s.size(); ++q)
      for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < d; ++i) k(i, j) += w(q) * std::polar(1.0, kernel.eta() * s(q) * (lam(i) - lam(j)));
    return k;
  }

  FockSpace space_;
  double eta_;
  Matrix basis_;
  Matrix mask_;
};

inline Matrix recoil_map(const Matrix& rho22, const RecoilKernel& kernel) {
  return RecoilMap(kernel, FockSpace(static_cast<std::size_t>(rho22.rows()))).apply(rho22);
}

// ---------------------------------------------------------------------------
// Vibronic state and coupling

class VibronicState {
 public:
  VibronicState(FockSpace space, Matrix full) : space_(space), full_(std::move(full)) {
    if (full_.rows() != 2 * space.size() || full_.cols() != 2 * space.size())
      throw DimensionMismatch("vibronic state must be 2D x 2D");
  }

  /// Electronic ground state times the given motional state.
  static VibronicState ground(const Matrix& motional) {
    const Eigen::Index d = motional.rows();
    Matrix full = Matrix::Zero(2 * d, 2 * d);
    full.topLeftCorner(d, d) = motional;
    return VibronicState(FockSpace(static_cast<std::size_t>(d)), std::move(full));
  }

  FockSpace space() const noexcept { return space_; }
  const Matrix& matrix() const noexcept { return full_; }
  Matrix rho11() const { return full_.topLeftCorner(space_.size(), space_.size()); }
  Matrix rho22() const { return full_.bottomRightCorner(space_.size(), space_.size()); }
  Matrix rho12() const { return full_.topRightCorner(space_.size(), space_.size()); }
  Matrix rho21() const { return full_.bottomLeftCorner(space_.size(), space_.size()); }
  Matrix motional() const { return rho11() + rho22(); }
  double excited_population() const { return rho22().trace().real(); }

 private:
  FockSpace space_;
  Matrix full_;
};

struct VibronicCoupling {
  double g;
  Operator d;            // motional, D x D
  Operator hamiltonian;  // g (A21 d + A12 d^+), 2D x 2D
};

/// Interaction Hamiltonian of a drive set on the vibronic space.
inline VibronicCoupling interaction_hamiltonian(std::span<const LaserDrive> drives, FockSpace space) {
  auto [g, d] = realize(drives, space);
  const Eigen::Index n = space.size();
  Matrix h = Matrix::Zero(2 * n, 2 * n);
  h.bottomLeftCorner(n, n) = g * d.matrix();
  h.topRightCorner(n, n) = g * d.matrix().adjoint();
  return {g, std::move(d), Operator(2 * space.dim(), std::move(h))};
}

namespace detail {

// Motional Lindblad channels applied to one block: sum (r/2)(2 c X c^+ - c^+c X - X c^+c).
struct BlockDissipator {
  std::vector<double> rates;
  std::vector<Matrix> jumps, jumps_adj, decay;

  explicit BlockDissipator(const std::vector<LindbladChannel>& channels) {
    for (const auto& ch : channels) {
      rates.push_back(ch.rate);
      jumps.push_back(ch.jump.matrix());
      jumps_adj.push_back(ch.jump.matrix().adjoint());
      decay.push_back(jumps_adj.back() * jumps.back());
    }
  }

  void add_to(const Matrix& x, Eigen::Ref<Matrix> out) const {
    for (std::size_t i = 0; i < rates.size(); ++i) {
      if (rates[i] == 0.0) continue;
      out.noalias() += rates[i] * (jumps[i] * x * jumps_adj[i]);
      out.noalias() -= (0.5 * rates[i]) * (decay[i] * x);
      out.noalias() -= (0.5 * rates[i]) * (x * decay[i]);
    }
  }
};

}  // namespace detail

/// Full vibronic master equation in electronic blocks:
///   r11' = -i g (d^+ r21 - r12 d) + Gamma R(r22) + L r11
///   r22' = -i g (d r12 - r21 d^+) - Gamma r22   + L r22
///   r12' = -i g (d^+ r22 - r11 d^+) - (Gamma/2) r12 + L r12
class VibronicModel {
 public:
  VibronicModel(VibronicCoupling coupling, double Gamma, std::optional<RecoilKernel> kernel, const Environment& env)
      : space_(FockSpace(coupling.d.dim())),
        g_(coupling.g),
        gamma_(Gamma),
        d_(coupling.d.matrix()),
        d_adj_(coupling.d.matrix().adjoint()),
        env_(environment_channels(env, space_)) {
    if (!(Gamma > 0.0)) throw DomainError("electronic decay rate must be positive");
    if (kernel) recoil_.emplace(*kernel, space_);
  }

  FockSpace space() const noexcept { return space_; }
  double coupling() const noexcept { return g_; }
  double decay() const noexcept { return gamma_; }
  double engineered_rate() const noexcept { return 4.0 * g_ * g_ / gamma_; }
  const Matrix& d() const noexcept { return d_; }

  Matrix recoil(const Matrix& rho22) const { return recoil_ ? recoil_->apply(rho22) : rho22; }

  Matrix rhs(const Matrix& full) const {
    const Eigen::Index n = space_.size();
    if (full.rows() != 2 * n || full.cols() != 2 * n) throw DimensionMismatch("vibronic right-hand side argument");
    const auto r11 = full.topLeftCorner(n, n);
    const auto r12 = full.topRightCorner(n, n);
    const auto r21 = full.bottomLeftCorner(n, n);
    const auto r22 = full.bottomRightCorner(n, n);
    const cplx mig = -kI * g_;

    Matrix out(2 * n, 2 * n);
    auto o11 = out.topLeftCorner(n, n);
    auto o12 = out.topRightCorner(n, n);
    auto o22 = out.bottomRightCorner(n, n);

    o11 = mig * (d_adj_ * r21 - r12 * d_) + gamma_ * recoil(r22);
    o22 = mig * (d_ * r12 - r21 * d_adj_) - gamma_ * r22;
    o12 = mig * (d_adj_ * r22 - r11 * d_adj_) - (0.5 * gamma_) * r12;
    env_.add_to(r11, o11);
    env_.add_to(r22, o22);
    env_.add_to(r12, o12);
    out.bottomLeftCorner(n, n) = o12.adjoint();
    return out;
  }

 private:
  FockSpace space_;
  double g_;
  double gamma_;
  Matrix d_, d_adj_;
  detail::BlockDissipator env_;
  std::optional<RecoilMap> recoil_;
};

inline Matrix vibronic_rhs(const VibronicModel& model, const VibronicState& state) { return model.rhs(state.matrix()); }

/// Leading-order adiabatic coherence -(2 i g / Gamma)(d^+ r22 - r11 d^+).
inline Matrix adiabatic_rho12(const VibronicState& state, const Matrix& d, double g, double Gamma) {
  if (!(Gamma > 0.0)) throw DomainError("electronic decay rate must be positive");
  const Matrix d_adj = d.adjoint();
  return (-2.0 * kI * g / Gamma) * (d_adj * state.rho22() - state.rho11() * d_adj);
}

// ---------------------------------------------------------------------------
// Reduced motional model

/// rho_v' = (G/2)(2 d rho d^+ - d^+d rho - rho d^+d) - Gamma (r22 - R(r22)) + L rho_v
/// with the excited block closed at leading adiabatic order,
/// r22 = (4 g^2 / Gamma^2) d rho d^+, so the recoil term is
/// G (R(d rho d^+) - d rho d^+) with G = 4 g^2 / Gamma.
class ReducedModel {
 public:
  ReducedModel(Operator d, double gamma_eng, std::optional<RecoilKernel> kernel, const Environment& env)
      : space_(FockSpace(d.dim())),
        gamma_eng_(gamma_eng),
        d_(d.matrix()),
        d_adj_(d.matrix().adjoint()),
        decay_(d_adj_ * d_),
        env_(environment_channels(env, space_)),
        env_channels_(environment_channels(env, space_)) {
    if (!(gamma_eng >= 0.0)) throw NegativeRate("engineered rate must be non-negative");
    if (kernel) recoil_.emplace(*kernel, space_);
  }

  FockSpace space() const noexcept { return space_; }
  double engineered_rate() const noexcept { return gamma_eng_; }
  bool has_recoil() const noexcept { return recoil_.has_value(); }

  Matrix engineered_term(const Matrix& rho) const {
    return gamma_eng_ * (d_ * rho * d_adj_) - (0.5 * gamma_eng_) * (decay_ * rho + rho * decay_);
  }

  Matrix recoil_term(const Matrix& rho) const {
    if (!recoil_) return Matrix::Zero(rho.rows(), rho.cols());
    const Matrix jumped = d_ * rho * d_adj_;
    return gamma_eng_ * (recoil_->apply(jumped) - jumped);
  }

  Matrix rhs(const Matrix& rho) const {
    if (rho.rows() != space_.size() || rho.cols() != space_.size()) throw DimensionMismatch("reduced model argument");
    Matrix out = engineered_term(rho);
    if (recoil_) out += recoil_term(rho);
    env_.add_to(rho, out);
    return out;
  }

  /// Engineered plus environment channels as a Lindblad generator (recoil
  /// excluded), for spectral analysis.
  Generator engineered_generator() const {
    std::vector<LindbladChannel> ch{LindbladChannel(gamma_eng_, Operator(space_, d_))};
    ch.insert(ch.end(), env_channels_.begin(), env_channels_.end());
    return Generator(space_.dim(), std::move(ch));
  }

  /// Vibrational quanta injected by recoil per engineered jump:
  /// Tr[n (R(s) - s)] / Tr[s] with s = d rho d^+. Equals eta^2 <s^2>
  /// (2 eta^2 / 5 for dipole emission) up to truncation.
  double recoil_energy_ratio(const Matrix& rho) const {
    if (!recoil_) return 0.0;
    const Matrix jumped = d_ * rho * d_adj_;
    const double rate = jumped.trace().real();
    // Relative to ||d||_F^2 so that round-off jumps out of a dark state do not count.
    if (!(rate > 1e-20 * std::max(1.0, decay_.trace().real())))
      throw DomainError("state is dark: no engineered jumps to compare against");
    const Matrix n = number_operator(space_).matrix();
    return (n * (recoil_->apply(jumped) - jumped)).trace().real() / rate;
  }

 private:
  FockSpace space_;
  double gamma_eng_;
  Matrix d_, d_adj_, decay_;
  detail::BlockDissipator env_;
  std::vector<LindbladChannel> env_channels_;
  std::optional<RecoilMap> recoil_;
};

inline Matrix reduced_rhs(const ReducedModel& model, const Matrix& rho_v) { return model.rhs(rho_v); }

// ---------------------------------------------------------------------------
// Trajectories

struct VibronicTrajectory {
  Trajectory full;                   // audited 2D x 2D states
  std::vector<Matrix> motional;      // r11 + r22
  std::vector<double> excited_population;
};

inline VibronicTrajectory propagate_vibronic(const VibronicModel& model, const VibronicState& initial,
                                             std::span<const double> grid, const PropagationOptions& opt = {}) {
  VibronicTrajectory out;
  out.full = propagate_with([&model](const Matrix& y) { return model.rhs(y); }, initial.matrix(), grid, opt);
  for (const auto& s : out.full.states) {
    VibronicState st(model.space(), s);
    out.motional.push_back(st.motional());
    out.excited_population.push_back(st.excited_population());
  }
  return out;
}

inline Trajectory propagate_reduced(const ReducedModel& model, const Matrix& rho0, std::span<const double> grid,
                                    const PropagationOptions& opt = {}) {
  return propagate_with([&model](const Matrix& y) { return model.rhs(y); }, rho0, grid, opt);
}

}  // namespace ionres
