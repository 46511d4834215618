#pragma once

// Two-way fixed-effects least squares y_jt ~ unit_j + period_t over an
// arbitrary subset of cells of a (unit x period) grid.

#include "bnidid/core.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace bnidid {

struct TwoWayOptions {
  double tolerance = 1e-10;          // max absolute parameter update
  std::size_t max_iterations = 10000;
  std::size_t dense_limit = 10000;   // J*T at or below which the dense fallback runs
};

struct TwoWaySolution {
  std::vector<double> unit;    // fixed effect per unit
  std::vector<double> period;  // period effect, period[0] == 0
  std::size_t iterations = 0;
  double max_update = 0.0;
  bool used_dense = false;
};

class NonConvergenceError : public std::runtime_error {
 public:
  NonConvergenceError(const std::string& what, double residual_norm)
      : std::runtime_error(what), residual_norm_(residual_norm) {}
  double residual_norm() const noexcept { return residual_norm_; }

 private:
  double residual_norm_;
};

namespace detail {

struct CellCounts {
  std::vector<std::size_t> unit, period;
};

inline CellCounts count_cells(const Grid<std::uint8_t>& mask) {
  CellCounts c{std::vector<std::size_t>(mask.rows(), 0), std::vector<std::size_t>(mask.cols(), 0)};
  for (std::size_t j = 0; j < mask.rows(); ++j)
    for (std::size_t t = 0; t < mask.cols(); ++t)
      if (mask(j, t)) {
        ++c.unit[j];
        ++c.period[t];
      }
  return c;
}

/// Number of connected components of the bipartite unit-period graph whose
/// edges are the masked cells (isolated rows/columns excluded).
inline std::size_t cell_components(const Grid<std::uint8_t>& mask) {
  const std::size_t J = mask.rows(), T = mask.cols();
  std::vector<std::size_t> parent(J + T);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<bool> used(J + T, false);
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t t = 0; t < T; ++t)
      if (mask(j, t)) {
        used[j] = used[J + t] = true;
        parent[find(j)] = find(J + t);
      }
  std::size_t n = 0;
  for (std::size_t x = 0; x < J + T; ++x)
    if (used[x] && find(x) == x) ++n;
  return n;
}

inline double residual_norm(const Grid<double>& y, const Grid<std::uint8_t>& mask,
                            const TwoWaySolution& s) {
  double ss = 0.0;
  for (std::size_t j = 0; j < y.rows(); ++j)
    for (std::size_t t = 0; t < y.cols(); ++t)
      if (mask(j, t)) {
        const double r = y(j, t) - s.unit[j] - s.period[t];
        ss += r * r;
      }
  return std::sqrt(ss);
}

/// Normal equations with period[0] pinned, reduced to the period block by a
/// Schur complement on the (diagonal) unit block.
inline TwoWaySolution solve_two_way_dense(const Grid<double>& y, const Grid<std::uint8_t>& mask,
                                          const CellCounts& counts) {
  const std::size_t J = y.rows(), T = y.cols();
  std::vector<double> unit_sum(J, 0.0);
  Eigen::VectorXd period_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(T));
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t t = 0; t < T; ++t)
      if (mask(j, t)) {
        unit_sum[j] += y(j, t);
        period_sum[static_cast<Eigen::Index>(t)] += y(j, t);
      }
  // S = D_T - B' D_J^{-1} B ; r = s_T - B' D_J^{-1} s_J
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(T),
                                            static_cast<Eigen::Index>(T));
  Eigen::VectorXd r = period_sum;
  for (std::size_t t = 0; t < T; ++t)
    S(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t)) =
        static_cast<double>(counts.period[t]);
  for (std::size_t j = 0; j < J; ++j) {
    if (counts.unit[j] == 0) continue;
    const double inv = 1.0 / static_cast<double>(counts.unit[j]);
    for (std::size_t t = 0; t < T; ++t) {
      if (!mask(j, t)) continue;
      r[static_cast<Eigen::Index>(t)] -= inv * unit_sum[j];
      for (std::size_t u = 0; u < T; ++u)
        if (mask(j, u))
          S(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(u)) -= inv;
    }
  }
  const auto m = static_cast<Eigen::Index>(T) - 1;
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(T));
  if (m > 0) {
    Eigen::MatrixXd Sr = S.bottomRightCorner(m, m);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(Sr);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw std::runtime_error("two-way fixed effects: dense system is singular");
    lam.tail(m) = ldlt.solve(r.tail(m));
  }
  TwoWaySolution s;
  s.used_dense = true;
  s.period.assign(lam.data(), lam.data() + lam.size());
  s.unit.assign(J, 0.0);
  for (std::size_t j = 0; j < J; ++j) {
    if (counts.unit[j] == 0) continue;
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t)
      if (mask(j, t)) acc += y(j, t) - s.period[t];
    s.unit[j] = acc / static_cast<double>(counts.unit[j]);
  }
  return s;
}

}  // namespace detail

/// Least-squares fit of y = unit_j + period_t on the masked cells by
/// alternating demeaning; period effect of the first period pinned to 0.
/// Units or periods without masked cells get effect 0 (callers check).
inline TwoWaySolution fit_two_way(const Grid<double>& y, const Grid<std::uint8_t>& mask,
                                  const TwoWayOptions& options = {}) {
  if (y.rows() != mask.rows() || y.cols() != mask.cols())
    throw std::invalid_argument("fit_two_way: value and mask shapes differ");
  const std::size_t J = y.rows(), T = y.cols();
  const auto counts = detail::count_cells(mask);

  TwoWaySolution s;
  s.unit.assign(J, 0.0);
  s.period.assign(T, 0.0);
  std::vector<double> acc(T);
  bool converged = false;
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    double delta = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      if (counts.unit[j] == 0) continue;
      double a = 0.0;
      for (std::size_t t = 0; t < T; ++t)
        if (mask(j, t)) a += y(j, t) - s.period[t];
      const double next = a / static_cast<double>(counts.unit[j]);
      delta = std::max(delta, std::abs(next - s.unit[j]));
      s.unit[j] = next;
    }
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t t = 0; t < T; ++t)
        if (mask(j, t)) acc[t] += y(j, t) - s.unit[j];
    for (std::size_t t = 0; t < T; ++t) {
      if (counts.period[t] == 0) continue;
      const double next = acc[t] / static_cast<double>(counts.period[t]);
      delta = std::max(delta, std::abs(next - s.period[t]));
      s.period[t] = next;
    }
    s.iterations = it + 1;
    s.max_update = delta;
    if (delta < options.tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    if (J * T <= options.dense_limit) return detail::solve_two_way_dense(y, mask, counts);
    const double rn = detail::residual_norm(y, mask, s);
    throw NonConvergenceError("two-way fixed effects did not converge after " +
                                  std::to_string(s.iterations) +
                                  " iterations (last update " + std::to_string(s.max_update) +
                                  ", residual norm " + std::to_string(rn) + ")",
                              rn);
  }
  const double shift = s.period.empty() ? 0.0 : s.period[0];
  for (auto& p : s.period) p -= shift;
  for (auto& u : s.unit) u += shift;
  return s;
}

/// x minus its two-way fitted values on the masked cells (cells outside the
/// mask are left as computed from the same fitted effects).
inline Grid<double> two_way_residuals(const Grid<double>& x, const Grid<std::uint8_t>& mask,
                                      const TwoWayOptions& options = {}) {
  auto s = fit_two_way(x, mask, options);
  Grid<double> r(x.rows(), x.cols());
  for (std::size_t j = 0; j < x.rows(); ++j)
    for (std::size_t t = 0; t < x.cols(); ++t) r(j, t) = x(j, t) - s.unit[j] - s.period[t];
  return r;
}

}  // namespace bnidid
