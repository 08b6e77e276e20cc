#include <cmath>
#include <vector>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "ionres/liouvillian.hpp"
#include "ionres/pointer.hpp"

using namespace ionres;

namespace {

Matrix displacement_exponential(std::size_t big, double eta) {
  const Matrix x = quadrature(FockSpace(big)).matrix();
  return Matrix(kI * eta * x).exp();
}

std::vector<cplx> phase_amplitudes(std::size_t N, double phi) {
  std::vector<cplx> c;
  for (std::size_t n = 0; n <= N; ++n) c.push_back(std::polar(1.0 / std::sqrt(N + 1.0), n * phi));
  return c;
}

}  // namespace

TEST(DriveOperator, SidebandsAreBandsOfTheDisplacementExponential) {
  const FockSpace s(12);
  for (double eta : {0.1, 0.25}) {
    const Matrix u = displacement_exponential(70, eta);
    for (std::size_t k = 1; k <= 2; ++k) {
      // Omega = 2 removes the 1/2 prefactor.
      const Matrix red = drive_operator(red_sideband(2.0, eta, "r", k), s).matrix();
      const Matrix blue = drive_operator(blue_sideband(2.0, eta, "b", k), s).matrix();
      for (Eigen::Index i = 0; i < 12; ++i)
        for (Eigen::Index j = 0; j < 12; ++j) {
          const cplx r_expect = (j - i == static_cast<Eigen::Index>(k)) ? u(i, j) : cplx(0.0);
          const cplx b_expect = (i - j == static_cast<Eigen::Index>(k)) ? u(i, j) : cplx(0.0);
          EXPECT_LT(std::abs(red(i, j) - r_expect), 1e-12) << i << "," << j;
          EXPECT_LT(std::abs(blue(i, j) - b_expect), 1e-12) << i << "," << j;
        }
    }
    const Matrix car = drive_operator(carrier(2.0, eta), s).matrix();
    for (Eigen::Index i = 0; i < 12; ++i) EXPECT_LT(std::abs(car(i, i) - u(i, i)), 1e-12);
  }
}

TEST(DriveOperator, ZeroEtaCarrierIsHalfRabiTimesIdentity) {
  const Matrix m = drive_operator(carrier(cplx(0.0, 3.0), 0.0), FockSpace(5)).matrix();
  EXPECT_LT((m - cplx(0.0, 1.5) * Matrix::Identity(5, 5)).norm(), 1e-15);
}

TEST(DriveOperator, Validation) {
  EXPECT_THROW(drive_operator(red_sideband(1.0, 0.0), FockSpace(4)), DomainError);
  LaserDrive bad = carrier(1.0, 0.1);
  bad.order = 1;
  EXPECT_THROW(bad.validate(), DomainError);
  EXPECT_THROW(red_sideband(1.0, 1.2).validate(), DomainError);
  const std::vector<LaserDrive> carriers{carrier(1.0, 0.1)};
  EXPECT_THROW(coupling_scale(carriers), InconsistentScale);
}

TEST(QubitDrive, RatiosAndEngineeredRate) {
  const FockSpace s(20);
  const double c = 1.0 / std::sqrt(2.0);
  // Rates in MHz: Omega_1 = 2, Gamma = 4, eta = 0.2.
  const auto e = qubit_drive(s, c, c, 0.2, 2.0, 4.0);
  ASSERT_EQ(e.drives.size(), 3u);
  const cplx rx = e.drives[1].rabi / e.drives[0].rabi;
  const cplx ry = e.drives[2].rabi / e.drives[0].rabi;
  EXPECT_NEAR(std::abs(rx - cplx(0.0, -5.0)), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(ry - cplx(0.0, 5.0 * 0.96 * std::exp(-0.02))), 0.0, 1e-12);
  EXPECT_NEAR(ry.imag(), 4.704954, 5e-7);
  EXPECT_NEAR(e.gamma_eng * 1e3, 40.0, 40.0 * 1e-12);  // kHz
  EXPECT_LT(e.check.residual, 1e-12);
  EXPECT_EQ(e.check.null_dim, 1u);
}

TEST(QubitDrive, GeneralAmplitudesAreDark) {
  const FockSpace s(20);
  const cplx c0{0.6, 0.0}, c1{0.0, 0.8};
  const auto e = qubit_drive(s, c0, c1, 0.15, 1.0, 1.0);
  EXPECT_LT(e.check.residual, 1e-12);
  EXPECT_THROW(qubit_drive(s, 1.0, 0.0, 0.15, 1.0, 1.0), ZeroAmplitude);
}

TEST(GhProfile, QubitExample) {
  const FockSpace s(6);
  const std::vector<cplx> c{1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)};
  const std::vector<cplx> h{1.0, 0.0};
  const auto p = gh_profile(s, c, h);
  EXPECT_NEAR(std::abs(p.g(0) - cplx(-1.0)), 0.0, 1e-15);
  for (Eigen::Index m = 1; m < 6; ++m) EXPECT_EQ(p.g(m), p.g(0));
  EXPECT_LT(apply(p.d, amplitude_state(s, c)).norm(), 1e-15);
}

TEST(GhProfile, ThreeLevelExample) {
  const FockSpace s(8);
  const std::vector<cplx> c{0.5, cplx(0.0, 0.5), std::sqrt(0.5)};
  const std::vector<cplx> h{2.0, 1.0, 0.0};
  const auto p = gh_profile(s, c, h);
  EXPECT_NEAR(std::abs(p.g(0) - (-2.0 * c[0] / c[1])), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(p.g(1) - (-1.0 / std::sqrt(2.0) * c[1] / c[2])), 0.0, 1e-15);
  EXPECT_LT(apply(p.d, amplitude_state(s, c)).norm(), 1e-14);
}

TEST(GhProfile, RejectsBadInput) {
  const FockSpace s(6);
  const std::vector<cplx> c{0.6, 0.8};
  EXPECT_THROW(gh_profile(s, c, std::vector<cplx>{1.0, 0.5}), BadHProfile);
  EXPECT_THROW(gh_profile(s, c, std::vector<cplx>{0.0, 0.0}), BadHProfile);
  EXPECT_THROW(gh_profile(s, std::vector<cplx>{0.6, 0.0, 0.8}, std::vector<cplx>{1.0, 1.0, 0.0}), ZeroAmplitude);
}

TEST(CarrierPair, FirstOrderRatio) {
  const auto p = carrier_pair(FockSpace(10), 0.2, 1);
  EXPECT_NEAR(p.bare_ratio, -0.96, 1e-15);
  EXPECT_NEAR(p.ratio.real(), -0.96 * std::exp(-0.02), 1e-15);
  EXPECT_NEAR(std::abs(p.h(1)), 0.0, 1e-16);
  EXPECT_GT(p.h(0).real(), 0.0);
}

TEST(CarrierPair, ThirdOrderRatio) {
  const double x = 0.09;
  const double l3 = (-x * x * x + 9 * x * x - 18 * x + 6) / 6.0;
  const auto p = carrier_pair(FockSpace(10), 0.3, 3);
  EXPECT_NEAR(p.bare_ratio, -l3, 1e-14);
  EXPECT_NEAR(p.bare_ratio, -0.7420285, 1e-7);
  EXPECT_NEAR(p.ratio.real(), -std::exp(-0.045) * l3, 1e-14);
  for (Eigen::Index m = 0; m < 3; ++m) EXPECT_GT(p.h(m).real(), 0.0);
  EXPECT_NEAR(std::abs(p.h(3)), 0.0, 1e-16);
}

TEST(CarrierPair, VanishingEtaViolatesFirstZero) {
  EXPECT_THROW(carrier_pair(FockSpace(10), 1e-7, 2), FirstZeroViolation);
  EXPECT_THROW(carrier_pair(FockSpace(10), 0.0, 2), DomainError);
  EXPECT_THROW(carrier_pair(FockSpace(10), 0.2, 10), DomainError);
}

TEST(RabiSystem, DuplicateEtaIsSingular) {
  const auto c = phase_amplitudes(2, 0.0);
  const std::vector<cplx> h{1.0, 0.5};
  const std::vector<double> etas{0.2, 0.2};
  EXPECT_THROW(solve_rabi_system(c, h, etas), SingularSystem);
  EXPECT_THROW(solve_rabi_system(c, h, std::vector<double>{0.2}), DomainError);
}

TEST(RabiSystem, SolutionSatisfiesTheLinearSystem) {
  const FockSpace s(22);
  const auto c = phase_amplitudes(3, 0.0);
  const auto pair = carrier_pair(s, 0.2, 3);
  const std::vector<cplx> h(pair.h.data(), pair.h.data() + 3);
  const std::vector<double> etas{0.1, 0.15, 0.2};
  const auto sol = solve_rabi_system(c, h, etas);
  const Vector x = Eigen::Map<const Vector>(sol.rabi.data(), 3);
  EXPECT_LT((sol.coefficients.cast<cplx>() * x - sol.rhs).norm(), 1e-10 * sol.rhs.norm());
  EXPECT_LT(sol.condition_number, kConditionThreshold);
  for (Eigen::Index m = 0; m < 3; ++m)
    for (Eigen::Index k = 0; k < 3; ++k)
      EXPECT_DOUBLE_EQ(sol.coefficients(m, k), etas[k] * fk_coefficient(1, m, etas[k]));
}

TEST(PhaseDrive, RealizedOperatorIsDark) {
  const FockSpace s(22);
  const auto c = phase_amplitudes(3, 0.0);
  const auto e = finite_superposition_drive(s, c, 0.2, 1.0, 1.0, std::vector<double>{0.1, 0.15, 0.2});
  ASSERT_EQ(e.drives.size(), 5u);
  EXPECT_LE(e.check.residual, 1e-8);
  EXPECT_EQ(e.check.null_dim, 1u);
  double strongest = 0.0;
  for (std::size_t n = 0; n < 3; ++n) strongest = std::max(strongest, std::abs(e.drives[n].rabi));
  EXPECT_NEAR(strongest, 1.0, 1e-12);
}

TEST(PhaseDrive, PhaseOnlyRotatesTheCarriers) {
  const FockSpace s(22);
  const auto ref = finite_superposition_drive(s, phase_amplitudes(3, 0.0), 0.2, 1.0, 1.0);
  for (double phi : {0.7, 2.1, -1.3}) {
    const auto e = finite_superposition_drive(s, phase_amplitudes(3, phi), 0.2, 1.0, 1.0);
    EXPECT_LE(e.check.residual, 1e-8);
    for (std::size_t n = 0; n < 3; ++n) EXPECT_NEAR(std::abs(e.drives[n].rabi - ref.drives[n].rabi), 0.0, 1e-12);
    for (std::size_t n = 3; n < 5; ++n)
      EXPECT_NEAR(std::abs(e.drives[n].rabi - std::polar(1.0, phi) * ref.drives[n].rabi), 0.0, 1e-12);
  }
}

TEST(CatDissipator, ConjugatedAnnihilationOperator) {
  // T a T^+ with T|0> = cat, built in a large space and restricted.
  const cplx alpha = std::sqrt(3.0);
  const FockSpace big(100);
  const Matrix t = cat_unitary(big, alpha).matrix();
  const Matrix conj = t * annihilation(big).matrix() * t.adjoint();
  const auto e = cat_dissipator(FockSpace(40), alpha, 1.0);
  EXPECT_LT((conj.topLeftCorner(40, 40) - e.d.matrix()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(e.check.residual, 1e-12);
  EXPECT_TRUE(e.drives.empty());
}

TEST(SqueezeDissipator, Parameters) {
  const auto e = squeeze_dissipator(FockSpace(41), 0.6, 2.0, 0.2, 4.0);
  ASSERT_EQ(e.drives.size(), 2u);
  const double chi = (e.drives[1].rabi / e.drives[0].rabi).real();
  EXPECT_NEAR(chi, std::tanh(0.6), 1e-15);
  EXPECT_NEAR(chi, 0.53705, 5e-6);
  EXPECT_NEAR(e.gamma_eng, 0.04, 1e-15);
  EXPECT_LT(e.check.residual, 1e-12);
}

TEST(SqueezeDissipator, SteadyStateIsTheSqueezedVacuum) {
  const FockSpace s(41);
  const auto e = squeeze_dissipator(s, 0.6, 1.0, 0.2, 1.0);
  const Generator gen(41, {LindbladChannel(1.0, e.d)});
  const auto ss = steady_states(gen);
  ASSERT_EQ(ss.multiplicity, 1u);
  EXPECT_GE(fidelity(e.target.projector(), ss.states[0].matrix()), 1.0 - 1e-6);
}

TEST(SqueezeDissipator, EvenTruncationLeavesABoundaryTerm) {
  // At even D the top level D-1 is odd and receives chi sqrt(D-1) c_{D-2}
  // from a^+ with no partner from a.
  const FockSpace s(40);
  const auto e = squeeze_dissipator(s, 0.6, 1.0, 0.2, 1.0);
  const double expected = std::tanh(0.6) * std::sqrt(39.0) * std::abs(e.target.amplitudes()(38));
  EXPECT_NEAR(e.check.residual, expected, 1e-12 * expected);
  EXPECT_GT(e.check.residual, 1e-6);
  EXPECT_EQ(e.check.null_dim, 0u);
}
