#pragma once

// Adaptive Dormand-Prince 5(4) integrator for matrix-valued ODEs.
//
// The state is any Eigen dense type. Output is produced exactly at the
// requested grid points: the step is clipped so that each grid point is hit,
// which keeps trajectories reproducible bit for bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include <Eigen/Core>

#include "ionres/errors.hpp"

namespace ionres {

struct StepControl {
  double rtol = 1e-8;
  double atol = 1e-10;
  std::size_t max_steps = 20'000'000;
  double min_step = 1e-13;  // relative to the integration span
};

struct IntegrationStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evaluations = 0;
};

namespace detail {

template <class State>
double scaled_error(const State& err, const State& y0, const State& y1, const StepControl& ctl) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < err.cols(); ++j)
    for (Eigen::Index i = 0; i < err.rows(); ++i) {
      const double scale = ctl.atol + ctl.rtol * std::max(std::abs(y0(i, j)), std::abs(y1(i, j)));
      worst = std::max(worst, std::abs(err(i, j)) / scale);
    }
  return worst;
}

}  // namespace detail

/// Integrates dy/dt = rhs(y) across `grid` (increasing, grid[0] is the
/// initial time) and calls `observe(k, t_k, y(t_k))` for every grid point,
/// including the initial one.
template <class State, class Rhs, class Observer>
IntegrationStats integrate_dopri5(Rhs&& rhs, State y, std::span<const double> grid,
                                  const StepControl& ctl, Observer&& observe) {
  // Butcher tableau (autonomous right-hand sides only, so no c_i nodes).
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - b_hat, the embedded fourth-order difference.
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                   e6 = 22.0 / 525, e7 = -1.0 / 40;

  IntegrationStats stats;
  if (grid.empty()) return stats;
  for (std::size_t k = 1; k < grid.size(); ++k)
    if (!(grid[k] > grid[k - 1])) throw DomainError("time grid must be strictly increasing");

  double t = grid.front();
  observe(std::size_t{0}, t, static_cast<const State&>(y));
  if (grid.size() == 1) return stats;

  const double span = grid.back() - grid.front();
  const double h_min = ctl.min_step * span;

  State k1 = rhs(y);
  ++stats.rhs_evaluations;

  // Starting step from the usual ratio of solution scale to derivative scale.
  double h;
  {
    const double d0 = y.cwiseAbs().maxCoeff();
    const double d1 = k1.cwiseAbs().maxCoeff();
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 * span : 0.01 * d0 / d1;
    h = std::min(h, grid[1] - grid[0]);
  }

  std::size_t next = 1;
  while (next < grid.size()) {
    if (stats.accepted + stats.rejected >= ctl.max_steps)
      throw IntegratorFailure("step budget of " + std::to_string(ctl.max_steps) + " exhausted at t=" +
                              std::to_string(t));
    const double target = grid[next];
    bool lands = false;
    double step = h;
    if (t + step >= target) {
      step = target - t;
      lands = true;
    }

    const State k2 = rhs(y + step * (a21 * k1));
    const State k3 = rhs(y + step * (a31 * k1 + a32 * k2));
    const State k4 = rhs(y + step * (a41 * k1 + a42 * k2 + a43 * k3));
    const State k5 = rhs(y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const State k6 = rhs(y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    State y_new = y + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    State k7 = rhs(y_new);
    stats.rhs_evaluations += 6;

    const State err = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double err_norm = detail::scaled_error(err, y, y_new, ctl);
    if (!std::isfinite(err_norm)) throw IntegratorFailure("non-finite error estimate at t=" + std::to_string(t));

    const double factor =
        err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
    if (err_norm <= 1.0) {
      ++stats.accepted;
      t = lands ? target : t + step;
      y = std::move(y_new);
      k1 = std::move(k7);
      // A step clipped to land on a grid point must not shrink h.
      h = lands ? std::max(h, step * factor) : step * factor;
      if (lands) {
        observe(next, t, static_cast<const State&>(y));
        ++next;
      }
    } else {
      ++stats.rejected;
      h = step * std::max(factor, 0.2);
      if (h < h_min)
        throw IntegratorFailure("step size underflow (h=" + std::to_string(h) + ") at t=" + std::to_string(t));
    }
  }
  return stats;
}

}  // namespace ionres
