#include <cmath>
#include <vector>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "ionres/hilbert.hpp"

using namespace ionres;

namespace {

// exp(i eta (a + a^+)) computed in a generous space so that the low block is
// free of truncation effects.
Matrix displacement_exponential(std::size_t big, double eta) {
  const FockSpace s(big);
  const Matrix x = quadrature(s).matrix();
  return Matrix(kI * eta * x).exp();
}

double factorial_ratio_sqrt(std::size_t m, std::size_t k) {
  // sqrt((m + k)! / m!)
  double r = 1.0;
  for (std::size_t j = m + 1; j <= m + k; ++j) r *= static_cast<double>(j);
  return std::sqrt(r);
}

}  // namespace

TEST(FockSpace, RejectsTooSmall) {
  EXPECT_THROW(FockSpace(1), DomainError);
  EXPECT_EQ(FockSpace(5).dim(), 5u);
}

TEST(Operator, ShapeAndFinitenessAreChecked) {
  EXPECT_THROW(Operator(3, Matrix::Zero(3, 4)), DimensionMismatch);
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 1) = std::nan("");
  EXPECT_THROW(Operator(2, bad), DomainError);
  EXPECT_THROW(Operator::identity(3) * Operator::identity(4), DimensionMismatch);
  EXPECT_THROW(Operator::identity(3) + Operator::identity(4), DimensionMismatch);
}

TEST(Ladder, CommutatorIsIdentityAwayFromTheEdge) {
  const FockSpace s(12);
  const Matrix a = annihilation(s).matrix();
  const Matrix comm = a * a.adjoint() - a.adjoint() * a;
  for (Eigen::Index i = 0; i < 11; ++i) EXPECT_NEAR(comm(i, i).real(), 1.0, 1e-14);
  EXPECT_NEAR(comm(11, 11).real(), -11.0, 1e-12);  // truncation edge
  EXPECT_TRUE(number_operator(s).is_hermitian());
  EXPECT_NEAR((a.adjoint() * a - number_operator(s).matrix()).norm(), 0.0, 1e-13);
}

TEST(Laguerre, MatchesClosedForms) {
  const double x = 0.37;
  EXPECT_DOUBLE_EQ(laguerre(0, x), 1.0);
  EXPECT_NEAR(laguerre(1, x), 1.0 - x, 1e-15);
  EXPECT_NEAR(laguerre(2, x), 0.5 * (x * x - 4 * x + 2), 1e-15);
  EXPECT_NEAR(laguerre(3, x), (-x * x * x + 9 * x * x - 18 * x + 6) / 6.0, 1e-14);
  EXPECT_NEAR(laguerre(2, x, 1.0), 0.5 * (x * x - 6 * x + 6), 1e-14);
  EXPECT_NEAR(laguerre(1, 0.04), 0.96, 1e-15);
}

TEST(LambDicke, CarrierCoefficientIsLaguerre) {
  for (double eta : {0.05, 0.1, 0.2, 0.25})
    for (std::size_t n = 0; n <= 10; ++n)
      EXPECT_NEAR(fk_coefficient(0, n, eta), std::exp(-0.5 * eta * eta) * laguerre(n, eta * eta), 1e-14);
}

TEST(LambDicke, CoefficientsMatchMatrixExponential) {
  for (double eta : {0.05, 0.1, 0.2, 0.25}) {
    const Matrix u = displacement_exponential(60, eta);
    for (std::size_t k = 0; k <= 3; ++k)
      for (std::size_t m = 0; m <= 10; ++m) {
        const cplx elem = u(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m + k));
        const cplx model = std::pow(kI * eta, static_cast<double>(k)) * fk_coefficient(k, m, eta) *
                           factorial_ratio_sqrt(m, k);
        EXPECT_NEAR(std::abs(elem - model), 0.0, 1e-12) << "k=" << k << " m=" << m << " eta=" << eta;
      }
  }
}

TEST(LambDicke, HighLevelsStayStable) {
  // Alternating sums at large n: compare against the Laguerre recurrence.
  for (std::size_t n : {40u, 80u, 120u})
    EXPECT_NEAR(fk_coefficient(0, n, 0.3), std::exp(-0.045) * laguerre(n, 0.09), 1e-11);
  EXPECT_THROW(fk_coefficient(1, 2, -0.1), DomainError);
  EXPECT_THROW(fk_operator(FockSpace(4), 1, 0.0), DomainError);
}

TEST(States, FockAndAmplitudeStates) {
  const FockSpace s(6);
  const Ket f = fock_state(s, 2);
  EXPECT_DOUBLE_EQ(std::abs(f.amplitudes()(2)), 1.0);
  const std::vector<cplx> c{{0.5, 0.0}, {0.5, 0.0}};
  const Ket q = amplitude_state(s, c);
  EXPECT_NEAR(q.amplitudes().norm(), 1.0, 1e-15);
  EXPECT_NEAR(std::abs(q.amplitudes()(0)), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_THROW(fock_state(s, 6), DomainError);
}

TEST(States, CoherentStateIsEigenvectorOfA) {
  const FockSpace s(40);
  const cplx alpha{1.1, -0.4};
  const Ket c = coherent_state(s, alpha);
  const Vector residual = apply(annihilation(s), c) - alpha * c.amplitudes();
  // Only the top level misses its partner.
  EXPECT_LT(residual.head(38).norm(), 1e-13);
  EXPECT_NEAR(expectation(number_operator(s), c).real(), std::norm(alpha), 1e-10);
  EXPECT_THROW(coherent_state(FockSpace(5), 3.0), TruncationError);
}

TEST(States, CatStateOverlapsAndNorm) {
  const FockSpace s(40);
  const cplx alpha = std::sqrt(3.0);
  const Ket cat = cat_plus_state(s, alpha);
  const Ket plus = coherent_state(s, alpha);
  const Ket minus = coherent_state(s, -alpha);
  const Vector expect = (plus.amplitudes() + kI * minus.amplitudes()) / std::sqrt(2.0);
  EXPECT_LT((cat.amplitudes() - expect).norm(), 1e-12);
  EXPECT_NEAR(expectation(number_operator(s), cat).real(), 3.0, 1e-9);
}

TEST(States, SqueezedVacuumMatchesSqueezeOperator) {
  const double r = 0.6;
  const FockSpace big(120);
  const Matrix a = annihilation(big).matrix();
  const Matrix gen = 0.5 * r * (a * a - a.adjoint() * a.adjoint());
  const Vector ref = Matrix(gen.exp()).col(0);
  const FockSpace s(41);
  const Ket sq = squeezed_vacuum(s, r);
  EXPECT_LT((sq.amplitudes() - ref.head(41)).norm(), 1e-9);
  EXPECT_NEAR(expectation(number_operator(s), sq).real(), std::sinh(r) * std::sinh(r), 1e-8);
  EXPECT_LT(sq.discarded_mass(), 1e-8);
  // Too small a space loses more than the tolerance.
  EXPECT_THROW(squeezed_vacuum(FockSpace(20), r), TruncationError);
}

TEST(States, PhaseStateIsUniform) {
  const FockSpace s(10);
  const Ket p = phase_state(s, 3, 0.4);
  for (Eigen::Index n = 0; n <= 3; ++n) EXPECT_NEAR(std::abs(p.amplitudes()(n)), 0.5, 1e-15);
  EXPECT_NEAR(std::arg(p.amplitudes()(2) / p.amplitudes()(1)), 0.4, 1e-14);
  EXPECT_THROW(phase_state(s, 10, 0.0), DomainError);
}

TEST(Unitaries, CatUnitaryPreparesCatFromVacuum) {
  const FockSpace s(60);
  const cplx alpha = std::sqrt(3.0);
  const Matrix t = cat_unitary(s, alpha).matrix();
  EXPECT_LT((t * t.adjoint() - Matrix::Identity(60, 60)).cwiseAbs().maxCoeff(), 1e-12);
  const Ket cat = cat_plus_state(s, alpha);
  EXPECT_NEAR(std::abs(cat.amplitudes().dot(t.col(0))), 1.0, 1e-10);
}

TEST(Unitaries, DisplacementMovesVacuumToCoherentState) {
  const FockSpace s(50);
  const cplx beta{0.7, 0.3};
  const Vector v = displacement(s, beta).matrix().col(0);
  EXPECT_LT((v - coherent_state(s, beta).amplitudes()).norm(), 1e-10);
}

TEST(Truncation, DefaultRule) {
  EXPECT_EQ(default_truncation(0.5), 20u);
  EXPECT_EQ(default_truncation(3.0), 34u);
  EXPECT_EQ(default_truncation(1.25), 20u);
}
