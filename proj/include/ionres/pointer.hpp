#pragma once

// Inverse design of engineered reservoirs: jump operators d whose unique
// zero-eigenvalue eigenstate is a chosen target, and the laser settings
// that realize them on a trapped ion.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ionres/errors.hpp"
#include "ionres/hilbert.hpp"

namespace ionres {

enum class Sideband { carrier, red, blue };

inline const char* to_string(Sideband s) {
  switch (s) {
    case Sideband::carrier: return "carrier";
    case Sideband::red: return "red";
    case Sideband::blue: return "blue";
  }
  return "?";
}

/// One laser: complex Rabi frequency (rate units), sideband order k
/// (0 = carrier) with its direction, and the Lamb-Dicke projection eta onto
/// the trap axis.
struct LaserDrive {
  cplx rabi;
  std::size_t order = 0;
  Sideband kind = Sideband::carrier;
  double eta = 0.0;
  std::string label;

  void validate() const {
    if (!(eta >= 0.0 && eta < 1.0)) throw DomainError("drive '" + label + "': eta must lie in [0, 1)");
    if ((order == 0) != (kind == Sideband::carrier))
      throw DomainError("drive '" + label + "': carrier drives have order 0, sideband drives order >= 1");
    if (order > 0 && !(eta > 0.0)) throw DomainError("drive '" + label + "': sideband drives need eta > 0");
    if (!std::isfinite(rabi.real()) || !std::isfinite(rabi.imag()))
      throw DomainError("drive '" + label + "': non-finite Rabi frequency");
  }
};

inline LaserDrive red_sideband(cplx rabi, double eta, std::string label = "red", std::size_t order = 1) {
  return {rabi, order, Sideband::red, eta, std::move(label)};
}
inline LaserDrive blue_sideband(cplx rabi, double eta, std::string label = "blue", std::size_t order = 1) {
  return {rabi, order, Sideband::blue, eta, std::move(label)};
}
inline LaserDrive carrier(cplx rabi, double eta, std::string label = "carrier") {
  return {rabi, 0, Sideband::carrier, eta, std::move(label)};
}

/// The motional operator a drive contributes to the coupling g d:
///   red:     (Omega/2)(i eta)^k f_k(n) a^k
///   blue:    (Omega/2)(i eta)^k (a^+)^k f_k(n)
///   carrier: (Omega/2) f_0(n)
/// (the blue form is the Hermitian-conjugate ladder of the red one, taken
/// from the same Lamb-Dicke expansion).
inline Operator drive_operator(const LaserDrive& drive, FockSpace space) {
  drive.validate();
  const auto f = diagonal_function(space, [&](std::size_t n) { return cplx(fk_coefficient(drive.order, n, drive.eta)); });
  // integer power: std::pow on a complex zero base returns NaN even for exponent 0
  cplx pref = 0.5 * drive.rabi;
  for (std::size_t j = 0; j < drive.order; ++j) pref *= kI * drive.eta;
  Operator ladder = Operator::identity(space.dim());
  const auto a = annihilation(space);
  for (std::size_t j = 0; j < drive.order; ++j) ladder = ladder * a;
  switch (drive.kind) {
    case Sideband::carrier: return f * pref;
    case Sideband::red: return (f * ladder) * pref;
    case Sideband::blue: return (ladder.adjoint() * f) * pref;
  }
  return Operator::zero(space.dim());
}

/// Overall coupling scale g of a drive set: half the strongest sideband
/// coupling |Omega| eta^k. For a single red sideband this is eta Omega / 2,
/// giving Gamma_eng = 4 g^2 / Gamma = eta^2 Omega^2 / Gamma.
inline double coupling_scale(std::span<const LaserDrive> drives) {
  double g = 0.0;
  for (const auto& d : drives)
    if (d.kind != Sideband::carrier) g = std::max(g, 0.5 * std::abs(d.rabi) * std::pow(d.eta, static_cast<double>(d.order)));
  if (!(g > 0.0)) throw InconsistentScale("drive set has no sideband coupling to fix g");
  return g;
}

struct RealizedCoupling {
  double g;
  Operator d;  // sum of drive operators divided by g
};

inline RealizedCoupling realize(std::span<const LaserDrive> drives, FockSpace space) {
  const double g = coupling_scale(drives);
  Operator sum = Operator::zero(space.dim());
  for (const auto& d : drives) sum += drive_operator(d, space);
  return {g, sum * cplx(1.0 / g)};
}

// ---------------------------------------------------------------------------
// Dark-state audit

struct DarkStateCheck {
  double residual = 0.0;     // ||d psi||
  std::size_t null_dim = 0;  // singular values <= 1e-10 sigma_max
};

inline DarkStateCheck verify_dark_state(const Operator& d, const Ket& psi, double rel_tol = 1e-10) {
  detail::require_same_dim(d.dim(), psi.space().dim(), "dark-state check");
  DarkStateCheck out;
  out.residual = apply(d, psi).norm();
  Eigen::BDCSVD<Matrix> svd(d.matrix());
  const auto& s = svd.singularValues();
  const double cut = rel_tol * (s.size() > 0 ? s(0) : 0.0);
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) <= cut) ++out.null_dim;
  return out;
}

/// d together with its strength and (possibly empty) laser realization.
struct EngineeredDissipator {
  Operator d;
  double gamma_eng;
  std::vector<LaserDrive> drives;
  Ket target;
  double coupling = 0.0;  // g, zero for abstract operators
  double decay = 0.0;     // electronic decay rate Gamma used for gamma_eng
  DarkStateCheck check;
  std::optional<double> condition_number;
};

// ---------------------------------------------------------------------------
// Finite superpositions sum_{n<=N} c_n |n>

struct GhProfile {
  Vector g;  // coefficient of a on each Fock level
  Vector h;
  Operator d;
};

namespace detail {

inline void require_nonzero_amplitudes(std::span<const cplx> c) {
  double scale = 0.0;
  for (auto x : c) scale = std::max(scale, std::abs(x));
  for (std::size_t n = 0; n < c.size(); ++n)
    if (!(std::abs(c[n]) > 1e-14 * scale))
      throw ZeroAmplitude("target amplitude c_" + std::to_string(n) + " vanishes");
}

}  // namespace detail

/// d = g(n) a + h(n) with g(m) = -h(m) c_m / (sqrt(m+1) c_{m+1}) for m < N.
/// h is padded with zeros up to the space dimension; above N the a
/// coefficient continues at g(N-1) (or 1 for N = 0).
inline GhProfile gh_profile(FockSpace space, std::span<const cplx> target, std::span<const cplx> h_values) {
  if (target.empty()) throw DomainError("empty target amplitude list");
  const std::size_t N = target.size() - 1;
  if (N >= space.dim()) throw TruncationError("target does not fit in the Fock space");
  if (h_values.size() > space.dim()) throw DomainError("h profile longer than the Fock space");
  detail::require_nonzero_amplitudes(target);

  Vector h = Vector::Zero(space.size());
  for (std::size_t m = 0; m < h_values.size(); ++m) h(static_cast<Eigen::Index>(m)) = h_values[m];
  const double h_scale = h.cwiseAbs().maxCoeff();
  const auto hN = std::abs(h(static_cast<Eigen::Index>(N)));
  if (hN > 1e-14 * h_scale) throw BadHProfile("h(N) must vanish, got |h(N)| = " + std::to_string(hN));
  for (std::size_t m = 0; m < N; ++m)
    if (!(std::abs(h(static_cast<Eigen::Index>(m))) > 1e-14 * h_scale))
      throw BadHProfile("h(" + std::to_string(m) + ") vanishes before N = " + std::to_string(N));

  Vector g(space.size());
  for (std::size_t m = 0; m < N; ++m)
    g(static_cast<Eigen::Index>(m)) =
        -h(static_cast<Eigen::Index>(m)) / std::sqrt(static_cast<double>(m + 1)) * target[m] / target[m + 1];
  const cplx tail = N == 0 ? cplx(1.0) : g(static_cast<Eigen::Index>(N - 1));
  for (std::size_t m = N; m < space.dim(); ++m) g(static_cast<Eigen::Index>(m)) = tail;

  Operator d = diagonal_operator(space, g) * annihilation(space) + diagonal_operator(space, h);
  const Ket psi = amplitude_state(space, target);
  const auto check = verify_dark_state(d, psi);
  if (check.null_dim != 1)
    throw BadHProfile("assembled d has a " + std::to_string(check.null_dim) + "-dimensional null space");
  return {std::move(g), std::move(h), std::move(d)};
}

/// Carrier pair (one laser along the trap axis, one orthogonal with eta ~ 0)
/// producing h(m) proportional to f_0(m; eta_x) + Omega_y/Omega_x, with the
/// ratio fixed so that h(N) = 0 exactly.
struct CarrierPair {
  cplx ratio;          // Omega_y / Omega_x = -e^{-eta^2/2} L_N(eta^2)
  double bare_ratio;   // -L_N(eta^2), without the Debye-Waller factor
  Vector h;            // h(m) for Omega_x = 1, on the whole space
};

inline CarrierPair carrier_pair(FockSpace space, double eta_x, std::size_t N) {
  if (!(eta_x > 0.0 && eta_x < 1.0)) throw DomainError("carrier pair needs eta_x in (0, 1)");
  if (N == 0 || N >= space.dim()) throw DomainError("carrier pair order must satisfy 1 <= N < dim");
  const double fN = fk_coefficient(0, N, eta_x);
  CarrierPair out{cplx(-fN), -laguerre(N, eta_x * eta_x), Vector(space.size())};
  for (Eigen::Index m = 0; m < space.size(); ++m)
    out.h(m) = fk_coefficient(0, static_cast<std::size_t>(m), eta_x) - fN;
  for (std::size_t m = 0; m < N; ++m)
    if (!(out.h(static_cast<Eigen::Index>(m)).real() > 1e-12))
      throw FirstZeroViolation("h(" + std::to_string(m) + ") = " + std::to_string(out.h(static_cast<Eigen::Index>(m)).real()) +
                               " already vanishes or changes sign before N = " + std::to_string(N) +
                               "; reduce eta_x");
  return out;
}

inline constexpr double kConditionThreshold = 1e12;

struct RabiSolution {
  std::vector<cplx> rabi;
  double condition_number;
  Eigen::MatrixXd coefficients;  // (m, n) entry eta_n f_1(m; eta_n)
  Vector rhs;
};

/// Solves sum_n eta_n f_1(m; eta_n) Omega_n = i h(m) c_m / (sqrt(m+1) c_{m+1})
/// for m = 0..N-1: the red-sideband Rabi frequencies that supply g(n) a.
/// h is in Rabi units (the carrier contribution to 2 g d).
inline RabiSolution solve_rabi_system(std::span<const cplx> target, std::span<const cplx> h_values,
                                      std::span<const double> etas) {
  if (target.size() < 2) throw DomainError("Rabi system needs N >= 1");
  const std::size_t N = target.size() - 1;
  if (etas.size() != N) throw DomainError("need exactly N = " + std::to_string(N) + " Lamb-Dicke parameters");
  if (h_values.size() < N) throw DomainError("h profile shorter than N");
  detail::require_nonzero_amplitudes(target);
  for (double eta : etas)
    if (!(eta > 0.0 && eta < 1.0)) throw DomainError("sideband eta must lie in (0, 1)");

  const auto n = static_cast<Eigen::Index>(N);
  RabiSolution out{{}, 0.0, Eigen::MatrixXd(n, n), Vector(n)};
  for (Eigen::Index m = 0; m < n; ++m) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const double eta = etas[static_cast<std::size_t>(k)];
      out.coefficients(m, k) = eta * fk_coefficient(1, static_cast<std::size_t>(m), eta);
    }
    const auto mm = static_cast<std::size_t>(m);
    out.rhs(m) = kI * h_values[mm] * target[mm] / (std::sqrt(static_cast<double>(mm + 1)) * target[mm + 1]);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.coefficients);
  const auto& s = svd.singularValues();
  out.condition_number = s(n - 1) > 0.0 ? s(0) / s(n - 1) : std::numeric_limits<double>::infinity();
  if (!(out.condition_number <= kConditionThreshold))
    throw SingularSystem("Rabi system condition number " + std::to_string(out.condition_number) +
                         " exceeds " + std::to_string(kConditionThreshold) + "; Lamb-Dicke parameters too close");
  const Vector sol = out.coefficients.cast<cplx>().colPivHouseholderQr().solve(out.rhs);
  out.rabi.assign(sol.data(), sol.data() + sol.size());
  return out;
}

/// Default sideband geometry: eta_n = eta_max cos(theta_n), theta_n evenly
/// spaced over [0, 60 deg].
inline std::vector<double> default_sideband_etas(double eta_max, std::size_t N) {
  std::vector<double> etas(N);
  for (std::size_t n = 0; n < N; ++n) {
    const double theta = N == 1 ? 0.0 : (kPi / 3.0) * static_cast<double>(n) / static_cast<double>(N - 1);
    etas[n] = eta_max * std::cos(theta);
  }
  return etas;
}

namespace detail {

inline EngineeredDissipator finish_drive_design(FockSpace space, std::vector<LaserDrive> drives, Ket target,
                                                double Gamma, std::optional<double> cond = std::nullopt) {
  if (!(Gamma > 0.0)) throw DomainError("electronic decay rate must be positive");
  auto [g, d] = realize(drives, space);
  auto check = verify_dark_state(d, target);
  const double gamma_eng = 4.0 * g * g / Gamma;
  return EngineeredDissipator{std::move(d), gamma_eng, std::move(drives), std::move(target), g, Gamma, check, cond};
}

}  // namespace detail

/// N + 2 lasers protecting sum_{n<=N} c_n |n>: N red sidebands along
/// distinct directions plus a carrier pair. Rabi frequencies are scaled so
/// the strongest red sideband has |Omega| = omega1, with its phase real.
inline EngineeredDissipator finite_superposition_drive(FockSpace space, std::span<const cplx> target, double eta,
                                                       double omega1, double Gamma,
                                                       std::optional<std::vector<double>> etas = std::nullopt) {
  if (target.size() < 2) throw DomainError("finite superposition needs N >= 1");
  if (!(omega1 > 0.0)) throw DomainError("omega1 must be positive");
  const std::size_t N = target.size() - 1;
  const auto sideband_etas = etas.value_or(default_sideband_etas(eta, N));
  const auto pair = carrier_pair(space, eta, N);
  std::vector<cplx> h(pair.h.data(), pair.h.data() + N);
  const auto sol = solve_rabi_system(target, h, sideband_etas);

  std::size_t strongest = 0;
  for (std::size_t n = 1; n < N; ++n)
    if (std::abs(sol.rabi[n]) > std::abs(sol.rabi[strongest])) strongest = n;
  const cplx scale = omega1 * std::conj(sol.rabi[strongest]) / std::norm(sol.rabi[strongest]);

  std::vector<LaserDrive> drives;
  for (std::size_t n = 0; n < N; ++n)
    drives.push_back(red_sideband(sol.rabi[n] * scale, sideband_etas[n], "red_" + std::to_string(n + 1)));
  drives.push_back(carrier(scale, eta, "carrier_x"));
  drives.push_back(carrier(pair.ratio * scale, 0.0, "carrier_y"));
  return detail::finish_drive_design(space, std::move(drives), amplitude_state(space, target), Gamma,
                                     sol.condition_number);
}

/// Three-laser protection of c0|0> + c1|1>:
///   eta Omega_x / (i Omega_1) = -c1/c0,
///   Omega_y / (i Omega_1) = e^{-eta^2/2} (c1/c0)(1 - eta^2)/eta.
inline EngineeredDissipator qubit_drive(FockSpace space, cplx c0, cplx c1, double eta, double omega1, double Gamma) {
  const cplx amps[] = {c0, c1};
  detail::require_nonzero_amplitudes(amps);
  if (!(eta > 0.0 && eta < 1.0)) throw DomainError("qubit drive needs eta in (0, 1)");
  if (!(omega1 > 0.0)) throw DomainError("omega1 must be positive");
  const cplx ratio = c1 / c0;
  const cplx omega_x = -kI * omega1 * ratio / eta;
  const cplx omega_y = kI * omega1 * std::exp(-0.5 * eta * eta) * ratio * (1.0 - eta * eta) / eta;
  std::vector<LaserDrive> drives{red_sideband(omega1, eta, "red_1"), carrier(omega_x, eta, "carrier_x"),
                                 carrier(omega_y, 0.0, "carrier_y")};
  return detail::finish_drive_design(space, std::move(drives), amplitude_state(space, amps), Gamma);
}

/// d = exp(i pi n) a + i alpha, dark on (|alpha> + i|-alpha>)/sqrt2. No
/// finite laser realization is known, so the drive list stays empty.
inline EngineeredDissipator cat_dissipator(FockSpace space, cplx alpha, double gamma_eng) {
  if (!(gamma_eng > 0.0)) throw DomainError("gamma_eng must be positive");
  Ket target = cat_plus_state(space, alpha);
  Operator d = parity(space) * annihilation(space) + Operator::identity(space.dim()) * (kI * alpha);
  auto check = verify_dark_state(d, target);
  return EngineeredDissipator{std::move(d), gamma_eng, {}, std::move(target), 0.0, 0.0, check, std::nullopt};
}

/// d = a + tanh(r) a^+, realized by a red and a blue first sideband with
/// Omega_2 / Omega_1 = tanh(r). gamma_eng = eta^2 omega1^2 / Gamma.
inline EngineeredDissipator squeeze_dissipator(FockSpace space, double r, double omega1, double eta, double Gamma,
                                               double tol = kTruncationTolerance) {
  if (r < 0.0) throw DomainError("squeezing factor must be non-negative");
  if (!(omega1 > 0.0) || !(Gamma > 0.0)) throw DomainError("omega1 and Gamma must be positive");
  const double chi = std::tanh(r);
  std::vector<LaserDrive> drives{red_sideband(omega1, eta, "red_1")};
  if (chi > 0.0) drives.push_back(blue_sideband(chi * omega1, eta, "blue_1"));
  for (const auto& d : drives) d.validate();
  Ket target = squeezed_vacuum(space, r, tol);
  const auto a = annihilation(space);
  Operator d = a + a.adjoint() * cplx(chi);
  auto check = verify_dark_state(d, target);
  const double g = coupling_scale(drives);
  return EngineeredDissipator{std::move(d), 4.0 * g * g / Gamma, std::move(drives), std::move(target), g, Gamma,
                              check, std::nullopt};
}

}  // namespace ionres
