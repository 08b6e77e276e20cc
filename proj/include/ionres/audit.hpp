#pragma once

// Randomized invariant audit: random Lindblad generators, random reduced
// vibronic models (with recoil and a thermal bath) and random mixed states,
// checked for trace preservation, Hermiticity, positivity, steady-state
// consistency and bitwise reproducibility.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ionres/liouvillian.hpp"
#include "ionres/vibronic.hpp"

namespace ionres {

struct InvariantTolerances {
  double generator_trace = 1e-11;    // |Tr L(rho)| relative to ||L(rho)||
  double generator_hermiticity = 1e-11;
  double trace_drift = 1e-7;
  double positivity = 1e-6;
  double steady_residual = 1e-9;    // max|L(rho_ss)| relative to the generator scale
};

struct InvariantReport {
  std::size_t instances = 0;
  std::size_t violations = 0;
  double worst_generator_trace = 0.0;
  double worst_generator_hermiticity = 0.0;
  double worst_trace_drift = 0.0;
  double lowest_eigenvalue = std::numeric_limits<double>::infinity();
  double worst_steady_residual = 0.0;
  bool deterministic = true;
  std::vector<std::string> failures;
};

namespace detail {

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index d, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) m(i, j) = cplx(n(rng), n(rng));
  return m;
}

inline Matrix random_state(std::mt19937_64& rng, Eigen::Index d) {
  const Matrix g = random_matrix(rng, d, 1.0);
  Matrix rho = g * g.adjoint();
  rho /= rho.trace().real();
  return 0.5 * (rho + rho.adjoint());
}

inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace detail

/// Runs `instances` random cases; every fourth one is a reduced vibronic
/// model instead of a plain Lindblad generator.
inline InvariantReport run_invariant_suite(std::size_t instances = 100, std::uint64_t seed = 0x5eed1e55,
                                           const InvariantTolerances& tol = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dim_dist(2, 7);
  std::uniform_int_distribution<int> channel_dist(1, 3);
  std::uniform_real_distribution<double> rate_dist(0.1, 2.0);

  InvariantReport rep;
  rep.instances = instances;
  auto fail = [&](std::size_t k, const std::string& what) {
    ++rep.violations;
    rep.failures.push_back("instance " + std::to_string(k) + ": " + what);
  };

  for (std::size_t k = 0; k < instances; ++k) {
    const Eigen::Index d = dim_dist(rng);
    const auto du = static_cast<std::size_t>(d);
    const Matrix rho0 = detail::random_state(rng, d);
    const bool vibronic = k % 4 == 3;

    std::function<Matrix(const Matrix&)> rhs;
    std::optional<Generator> gen;
    std::optional<ReducedModel> reduced;
    if (vibronic) {
      const FockSpace space(du);
      reduced.emplace(Operator(space, detail::random_matrix(rng, d, 0.5)), rate_dist(rng),
                      RecoilKernel::dipole(0.05 + 0.2 * rate_dist(rng) / 2.0),
                      Environment::thermal(0.1 * rate_dist(rng), 0.5 * rate_dist(rng)));
      rhs = [&reduced](const Matrix& x) { return reduced->rhs(x); };
    } else {
      std::vector<LindbladChannel> channels;
      const int nc = channel_dist(rng);
      for (int c = 0; c < nc; ++c) channels.emplace_back(rate_dist(rng), Operator(du, detail::random_matrix(rng, d, 0.5)));
      const Matrix x = detail::random_matrix(rng, d, 0.5);
      const Matrix h = 0.5 * (x + x.adjoint());
      gen.emplace(du, std::move(channels), Operator(du, h));
      rhs = [&gen](const Matrix& x) { return apply_generator(*gen, x); };
    }

    try {
      // Generator-level invariants on the random state.
      const Matrix l = rhs(rho0);
      const double scale = std::max(1.0, l.norm());
      const double tr = std::abs(l.trace()) / scale;
      const double herm = detail::max_abs(l - l.adjoint()) / scale;
      rep.worst_generator_trace = std::max(rep.worst_generator_trace, tr);
      rep.worst_generator_hermiticity = std::max(rep.worst_generator_hermiticity, herm);
      if (tr > tol.generator_trace) fail(k, "generator changes the trace by " + std::to_string(tr));
      if (herm > tol.generator_hermiticity) fail(k, "generator output not Hermitian (" + std::to_string(herm) + ")");

      // Trajectory invariants and reproducibility.
      PropagationOptions opt;
      opt.trace_tolerance = tol.trace_drift;
      opt.positivity_tolerance = tol.positivity;
      const auto grid = uniform_grid(3.0, 13);
      const auto a = propagate_with(rhs, rho0, grid, opt);
      const auto b = propagate_with(rhs, rho0, grid, opt);
      rep.worst_trace_drift = std::max(rep.worst_trace_drift, a.max_trace_drift());
      rep.lowest_eigenvalue = std::min(rep.lowest_eigenvalue, a.min_eigenvalue_floor());
      for (std::size_t j = 0; j < a.states.size(); ++j)
        if (!(a.states[j].array() == b.states[j].array()).all()) {
          rep.deterministic = false;
          fail(k, "repeated propagation differs at t=" + std::to_string(a.times[j]));
          break;
        }

      // Steady state: the generator must annihilate every reported state.
      const Eigen::MatrixXd r = hermitian_superoperator_of(rhs, du);
      const auto ss = steady_states_from(r, du);
      if (ss.states.empty()) fail(k, "no steady state found");
      for (const auto& s : ss.states) {
        const double res = detail::max_abs(rhs(s.matrix())) / std::max(1.0, r.norm());
        rep.worst_steady_residual = std::max(rep.worst_steady_residual, res);
        if (res > tol.steady_residual) fail(k, "steady-state residual " + std::to_string(res));
      }
    } catch (const Error& e) {
      fail(k, e.what());
    }
  }
  return rep;
}

}  // namespace ionres
