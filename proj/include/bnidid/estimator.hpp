#pragma once

// Two-stage (imputation) difference-in-differences event-study estimator on
// intervention-level panels, cluster bootstrap inference, outcome-level
// rescaling of the effects, and one-step TWFE baselines for comparison.

#include "bnidid/core.hpp"
#include "bnidid/fixed_effects.hpp"
#include "bnidid/projection.hpp"
#include "bnidid/stats.hpp"

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace bnidid {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Event times k in [-leads, lags].
struct EventWindow {
  int leads = 0;
  int lags = 0;

  void validate() const {
    if (leads < 0 || lags < 0)
      throw std::invalid_argument("event window must contain k = 0 (leads, lags >= 0)");
  }
  int lo() const noexcept { return -leads; }
  int hi() const noexcept { return lags; }
  bool contains(int k) const noexcept { return k >= lo() && k <= hi(); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(leads + lags + 1); }
  std::size_t offset(int k) const noexcept { return static_cast<std::size_t>(k + leads); }
};

/// Stage-1 error with the offending units / periods listed.
class IdentificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FixedEffectsFit {
  std::vector<double> mu;      // per intervention unit
  std::vector<double> lambda;  // per period, lambda[0] == 0
  std::vector<std::string> covariate_names;
  std::vector<double> gamma;   // covariate coefficients
  std::size_t n_obs_used = 0;
  std::size_t iterations = 0;
  bool used_dense = false;

  /// mu_j + lambda_t (+ x_jt' gamma).
  double predict(const ProjectedPanel& panel, std::size_t j, std::size_t t) const {
    double y = mu[j] + lambda[t];
    for (std::size_t c = 0; c < gamma.size(); ++c) y += gamma[c] * panel.covariates[c](j, t);
    return y;
  }
};

namespace detail {

inline void require_control_support(const ProjectedPanel& panel) {
  const auto counts = count_cells(panel.is_control);
  std::string units, periods;
  std::size_t n_units = 0, n_periods = 0;
  for (std::size_t j = 0; j < counts.unit.size(); ++j)
    if (counts.unit[j] == 0) {
      if (n_units++ < 20) units += (units.empty() ? "" : ", ") + (*panel.ids)[j];
    }
  for (std::size_t t = 0; t < counts.period.size(); ++t)
    if (counts.period[t] == 0) {
      if (n_periods++ < 20)
        periods += (periods.empty() ? "" : ", ") + std::to_string(panel.periods.label(t));
    }
  if (n_units || n_periods) {
    std::string msg = "stage 1: no control observations for";
    if (n_units) msg += " " + std::to_string(n_units) + " unit(s) [" + units + "]";
    if (n_periods) msg += " " + std::to_string(n_periods) + " period(s) [" + periods + "]";
    throw IdentificationError(msg);
  }
  if (cell_components(panel.is_control) > 1)
    throw IdentificationError(
        "stage 1: control observations split into disconnected unit/period groups; "
        "fixed effects are not identified");
}

}  // namespace detail

/// Two-way fixed effects (plus linear covariates) fitted on control cells only.
inline FixedEffectsFit fit_stage1(const ProjectedPanel& panel, const TwoWayOptions& options = {}) {
  detail::require_control_support(panel);
  const auto& mask = panel.is_control;
  const std::size_t J = panel.units(), T = panel.periods.size();

  FixedEffectsFit fit;
  fit.covariate_names = panel.covariate_names;
  for (auto v : mask.data()) fit.n_obs_used += v;

  Grid<double> y = panel.outcomes;
  if (!panel.covariates.empty()) {
    // Partial the fixed effects out of y and every covariate, then OLS.
    const auto P = static_cast<Eigen::Index>(panel.covariates.size());
    const auto n = static_cast<Eigen::Index>(fit.n_obs_used);
    Eigen::MatrixXd X(n, P);
    Eigen::VectorXd yv(n);
    auto y_res = two_way_residuals(panel.outcomes, mask, options);
    std::vector<Grid<double>> x_res;
    for (const auto& c : panel.covariates) x_res.push_back(two_way_residuals(c, mask, options));
    Eigen::Index row = 0;
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t t = 0; t < T; ++t)
        if (mask(j, t)) {
          yv[row] = y_res(j, t);
          for (Eigen::Index c = 0; c < P; ++c) X(row, c) = x_res[static_cast<std::size_t>(c)](j, t);
          ++row;
        }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < P)
      throw IdentificationError("stage 1: covariates are collinear with the fixed effects");
    Eigen::VectorXd g = qr.solve(yv);
    fit.gamma.assign(g.data(), g.data() + g.size());
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < fit.gamma.size(); ++c)
          y(j, t) -= fit.gamma[c] * panel.covariates[c](j, t);
  }
  auto s = fit_two_way(y, mask, options);
  fit.mu = std::move(s.unit);
  fit.lambda = std::move(s.period);
  fit.iterations = s.iterations;
  fit.used_dense = s.used_dense;
  return fit;
}

/// Y_jt - Yhat_jt(0,0) on the full grid.
inline Grid<double> residualize(const ProjectedPanel& panel, const FixedEffectsFit& fit) {
  if (fit.mu.size() != panel.units() || fit.lambda.size() != panel.periods.size())
    throw std::invalid_argument("residualize: fit does not cover the panel");
  Grid<double> r(panel.units(), panel.periods.size());
  for (std::size_t j = 0; j < r.rows(); ++j)
    for (std::size_t t = 0; t < r.cols(); ++t)
      r(j, t) = panel.outcomes(j, t) - fit.predict(panel, j, t);
  return r;
}

struct EventCoefficient {
  int k = 0;
  std::size_t n_obs = 0;
  std::optional<double> estimate;  // absent when no observation has A^k = 1
  double std_error = kNaN;
  double ci_low = kNaN;
  double ci_high = kNaN;
};

struct RescaleEntry {
  std::size_t n_treated_obs = 0;  // sum over periods of |Z_t^k|
  double sum_ell = 0.0;           // sum over periods of sum_i l_it
  double factor = kNaN;           // count-weighted mean of |Z_t^k| / sum_i l_it
  double outcome_level_estimate = kNaN;
  double ci_low = kNaN;
  double ci_high = kNaN;
};

struct PreTrendSummary {
  std::size_t n_pre = 0;               // lead coefficients present
  double mean_estimate = kNaN;
  double max_abs_estimate = kNaN;
  std::size_t n_ci_excluding_zero = 0;  // needs bootstrap CIs
};

struct EventStudyResult {
  EventWindow window;
  std::vector<EventCoefficient> coefficients;  // one per k in window, ascending
  std::map<int, RescaleEntry> rescale;
  std::size_t n_control_obs = 0;
  PreTrendSummary diagnostics;
  std::size_t bootstrap_used = 0;
  std::size_t bootstrap_discarded = 0;

  const EventCoefficient& at(int k) const {
    if (!window.contains(k)) throw std::out_of_range("k outside event window");
    return coefficients[window.offset(k)];
  }
  EventCoefficient& at(int k) {
    if (!window.contains(k)) throw std::out_of_range("k outside event window");
    return coefficients[window.offset(k)];
  }
};

inline void summarize_pretrends(EventStudyResult& r) {
  PreTrendSummary d;
  double sum = 0.0, mx = 0.0;
  for (const auto& c : r.coefficients) {
    if (c.k >= 0 || !c.estimate) continue;
    ++d.n_pre;
    sum += *c.estimate;
    mx = std::max(mx, std::abs(*c.estimate));
    if (std::isfinite(c.ci_low) && (c.ci_low > 0.0 || c.ci_high < 0.0)) ++d.n_ci_excluding_zero;
  }
  if (d.n_pre) {
    d.mean_estimate = sum / static_cast<double>(d.n_pre);
    d.max_abs_estimate = mx;
  }
  r.diagnostics = d;
}

/// Mean residual over cells with A^k = 1 for each k in the window. Cells with
/// finite event time outside the window are excluded; never-treated cells
/// carry all-zero dummies and therefore do not move any coefficient.
inline EventStudyResult fit_stage2(const Grid<double>& residuals, const TreatmentPanel& treatment,
                                   EventWindow window) {
  window.validate();
  if (residuals.rows() != treatment.units() || residuals.cols() != treatment.periods().size())
    throw std::invalid_argument("stage 2: residual grid does not match treatment panel");
  EventStudyResult out;
  out.window = window;
  std::vector<double> sum(window.size(), 0.0);
  std::vector<std::size_t> n(window.size(), 0);
  for (std::size_t j = 0; j < residuals.rows(); ++j) {
    if (!treatment.ever_treated(j)) continue;
    const int f = treatment.first_treated(j).period();
    for (std::size_t t = 0; t < residuals.cols(); ++t) {
      const int k = treatment.periods().label(t) - f;
      if (!window.contains(k)) continue;
      sum[window.offset(k)] += residuals(j, t);
      ++n[window.offset(k)];
    }
  }
  out.coefficients.resize(window.size());
  for (int k = window.lo(); k <= window.hi(); ++k) {
    auto& c = out.coefficients[window.offset(k)];
    c.k = k;
    c.n_obs = n[window.offset(k)];
    if (c.n_obs) c.estimate = sum[window.offset(k)] / static_cast<double>(c.n_obs);
  }
  summarize_pretrends(out);
  return out;
}

/// Stage 1, residualization and stage 2 (point estimates only).
inline EventStudyResult estimate_event_study(const ProjectedPanel& panel,
                                             const TreatmentPanel& treatment, EventWindow window,
                                             const TwoWayOptions& options = {}) {
  auto fit = fit_stage1(panel, options);
  auto result = fit_stage2(residualize(panel, fit), treatment, window);
  result.n_control_obs = fit.n_obs_used;
  return result;
}

struct BootstrapConfig {
  std::size_t n_replicates = 999;
  std::uint64_t master_seed = 0;
  double ci_level = 0.95;
  unsigned threads = 1;
  double max_discard_fraction = 0.2;

  void validate() const {
    if (n_replicates < 1) throw std::invalid_argument("bootstrap: n_replicates must be >= 1");
    if (!(ci_level > 0.0 && ci_level < 1.0))
      throw std::invalid_argument("bootstrap: ci_level must be in (0, 1)");
  }
};

class BootstrapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

/// One bootstrap draw: intervention units resampled with replacement, whole
/// time series kept. Returns nullopt when the replicate's stage 1 fails.
inline std::optional<std::vector<std::optional<double>>> bootstrap_replicate(
    const ProjectedPanel& panel, const TreatmentPanel& treatment, EventWindow window,
    std::uint64_t seed, const TwoWayOptions& options) {
  const std::size_t J = panel.units();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, J - 1);
  std::vector<std::size_t> rows(J);
  std::vector<std::string> names(J);
  for (std::size_t r = 0; r < J; ++r) {
    rows[r] = pick(rng);
    names[r] = (*panel.ids)[rows[r]] + "#" + std::to_string(r);
  }
  auto ids = make_ids(std::move(names));
  auto p = panel.select(rows, ids);
  auto tr = treatment.select(rows, ids);
  try {
    auto res = estimate_event_study(p, tr, window, options);
    std::vector<std::optional<double>> est;
    est.reserve(res.coefficients.size());
    for (const auto& c : res.coefficients) est.push_back(c.estimate);
    return est;
  } catch (const IdentificationError&) {
    return std::nullopt;
  } catch (const NonConvergenceError&) {
    return std::nullopt;
  }
}

}  // namespace detail

/// Point estimates plus cluster (unit) bootstrap standard errors and
/// percentile intervals. Replicate b uses seed derive_seed(master_seed, b);
/// results are identical for any thread count.
inline EventStudyResult bootstrap_ci(const ProjectedPanel& panel, const TreatmentPanel& treatment,
                                     EventWindow window, const BootstrapConfig& config,
                                     const TwoWayOptions& options = {}) {
  config.validate();
  auto result = estimate_event_study(panel, treatment, window, options);
  const std::size_t B = config.n_replicates;
  std::vector<std::optional<std::vector<std::optional<double>>>> reps(B);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t b = next++; b < B; b = next++)
      reps[b] = detail::bootstrap_replicate(panel, treatment, window,
                                            derive_seed(config.master_seed, b), options);
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(B)));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < n_threads; ++w) pool.emplace_back(worker);
  }

  std::size_t discarded = 0;
  for (const auto& r : reps)
    if (!r) ++discarded;
  if (static_cast<double>(discarded) > config.max_discard_fraction * static_cast<double>(B))
    throw BootstrapError("bootstrap: " + std::to_string(discarded) + " of " + std::to_string(B) +
                         " replicates discarded (stage 1 lost control support)");
  result.bootstrap_used = B - discarded;
  result.bootstrap_discarded = discarded;

  const double alpha = 1.0 - config.ci_level;
  for (std::size_t idx = 0; idx < result.coefficients.size(); ++idx) {
    std::vector<double> draws;
    for (const auto& r : reps)
      if (r && (*r)[idx]) draws.push_back(*(*r)[idx]);
    if (draws.empty()) continue;
    auto& c = result.coefficients[idx];
    c.std_error = sample_sd(draws);
    c.ci_low = quantile_linear(draws, alpha / 2.0);
    c.ci_high = quantile_linear(draws, 1.0 - alpha / 2.0);
  }
  summarize_pretrends(result);
  return result;
}

namespace detail {

inline void require_same_units(const NormalizedWeights& w, const TreatmentPanel& treatment) {
  if (!(*w.weights.interventions() == *treatment.ids()) ||
      !(w.weights.periods() == treatment.periods()))
    throw std::invalid_argument("weights and treatment panel cover different units or periods");
}

}  // namespace detail

/// Factor |Z^k| / sum_i l_it per period, combined across periods weighted by
/// |Z_t^k|, with l_it = sum_{j in Z_t^k} w_ijt.
inline RescaleEntry rescale_factor(const NormalizedWeights& weights,
                                   const TreatmentPanel& treatment, int k) {
  detail::require_same_units(weights, treatment);
  RescaleEntry e;
  double weighted = 0.0;
  for (std::size_t t = 0; t < treatment.periods().size(); ++t) {
    std::size_t n_t = 0;
    std::vector<bool> in_z(treatment.units(), false);
    for (std::size_t j = 0; j < treatment.units(); ++j)
      if (treatment.event_dummy(j, t, k)) {
        in_z[j] = true;
        ++n_t;
      }
    if (!n_t) continue;
    double ell = 0.0;
    for (const auto& edge : weights.weights.layer(t).edges())
      if (in_z[edge.intervention]) ell += edge.weight;
    if (!(ell > 0.0))
      throw std::invalid_argument("rescale: treated units at k = " + std::to_string(k) +
                                  " have no connected outcome units in period " +
                                  std::to_string(treatment.periods().label(t)));
    e.n_treated_obs += n_t;
    e.sum_ell += ell;
    weighted += static_cast<double>(n_t) * (static_cast<double>(n_t) / ell);
  }
  if (e.n_treated_obs == 0)
    throw std::invalid_argument("rescale: no units with A^k = 1 for k = " + std::to_string(k));
  e.factor = weighted / static_cast<double>(e.n_treated_obs);
  return e;
}

/// tau_hat^k expressed as an l-weighted average outcome-unit effect.
inline double rescale_to_outcome_level(const EventStudyResult& result,
                                       const NormalizedWeights& weights,
                                       const TreatmentPanel& treatment, int k) {
  const auto& c = result.at(k);
  if (!c.estimate) throw std::invalid_argument("rescale: no estimate for k = " + std::to_string(k));
  return *c.estimate * rescale_factor(weights, treatment, k).factor;
}

/// Fills result.rescale for every k with an estimate.
inline void attach_rescaling(EventStudyResult& result, const NormalizedWeights& weights,
                             const TreatmentPanel& treatment) {
  result.rescale.clear();
  for (const auto& c : result.coefficients) {
    if (!c.estimate) continue;
    auto e = rescale_factor(weights, treatment, c.k);
    e.outcome_level_estimate = *c.estimate * e.factor;
    e.ci_low = c.ci_low * e.factor;
    e.ci_high = c.ci_high * e.factor;
    result.rescale[c.k] = e;
  }
}

/// Sample TTT at event time k computed at the intervention level and as the
/// l-weighted outcome-level sum; returns the largest absolute disagreement
/// over periods and the period-pooled value. `counterfactual` holds Y_it
/// with no unit treated.
inline double proposition1_identity_check(const NormalizedWeights& weights,
                                          const OutcomePanel& factual,
                                          const OutcomePanel& counterfactual,
                                          const TreatmentPanel& treatment, int k) {
  detail::require_same_units(weights, treatment);
  const auto Yj = project_outcomes(weights, factual);
  const auto Yj0 = project_outcomes(weights, counterfactual);
  const auto rows_f = detail::receptor_rows(weights, factual);
  const auto rows_c = detail::receptor_rows(weights, counterfactual);

  double worst = 0.0, pooled_plant = 0.0, pooled_receptor = 0.0;
  std::size_t pooled_n = 0;
  for (std::size_t t = 0; t < treatment.periods().size(); ++t) {
    std::vector<bool> in_z(treatment.units(), false);
    std::size_t n_t = 0;
    double plant = 0.0;
    for (std::size_t j = 0; j < treatment.units(); ++j)
      if (treatment.event_dummy(j, t, k)) {
        in_z[j] = true;
        ++n_t;
        plant += Yj(j, t) - Yj0(j, t);
      }
    if (!n_t) continue;
    const auto& layer = weights.weights.layer(t);
    double receptor = 0.0;
    for (std::size_t i = 0; i < layer.outcome_count(); ++i) {
      double ell = 0.0;
      for (const auto& e : layer.row(i))
        if (in_z[e.intervention]) ell += e.weight;
      if (ell != 0.0)
        receptor += ell * (factual.value(rows_f[i], t) - counterfactual.value(rows_c[i], t));
    }
    worst = std::max(worst, std::abs(plant / static_cast<double>(n_t) -
                                     receptor / static_cast<double>(n_t)));
    pooled_plant += plant;
    pooled_receptor += receptor;
    pooled_n += n_t;
  }
  if (pooled_n)
    worst = std::max(worst, std::abs(pooled_plant - pooled_receptor) / static_cast<double>(pooled_n));
  return worst;
}

/// One-step TWFE with a single contemporaneous treatment dummy, all cells.
inline double baseline_static_twfe(const ProjectedPanel& panel, const TreatmentPanel& treatment,
                                   const TwoWayOptions& options = {}) {
  const std::size_t J = panel.units(), T = panel.periods.size();
  Grid<std::uint8_t> all(J, T, 1);
  Grid<double> d(J, T, 0.0);
  bool any = false;
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t t = 0; t < T; ++t)
      if (treatment.treated(j, t)) {
        d(j, t) = 1.0;
        any = true;
      }
  if (!any) throw IdentificationError("static TWFE: no treated observations");
  const auto dr = two_way_residuals(d, all, options);
  const auto yr = two_way_residuals(panel.outcomes, all, options);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < dr.size(); ++k) {
    sxy += dr.data()[k] * yr.data()[k];
    sxx += dr.data()[k] * dr.data()[k];
  }
  if (sxx < 1e-10)
    throw IdentificationError("static TWFE: treatment dummy is collinear with the fixed effects");
  return sxy / sxx;
}

struct DynamicTwfeResult {
  std::optional<int> reference;              // omitted event time (k = -1 when in window)
  std::map<int, std::optional<double>> beta;  // absent: no observations at k
};

/// One-step TWFE with unit and period effects and event-time dummies fitted
/// jointly. Cells with finite event time outside the window are dropped; k = -1
/// is the omitted reference when the window has leads.
inline DynamicTwfeResult baseline_dynamic_twfe(const ProjectedPanel& panel,
                                               const TreatmentPanel& treatment, EventWindow window,
                                               const TwoWayOptions& options = {}) {
  window.validate();
  const std::size_t J = panel.units(), T = panel.periods.size();
  DynamicTwfeResult out;
  if (window.leads >= 1) out.reference = -1;

  Grid<std::uint8_t> sample(J, T, 1);
  std::map<int, std::size_t> counts;
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t t = 0; t < T; ++t) {
      auto K = treatment.event_time_at(j, t);
      if (!K.is_finite()) continue;
      if (!window.contains(K.value())) {
        sample(j, t) = 0;
        continue;
      }
      ++counts[K.value()];
    }
  std::vector<int> ks;
  for (int k = window.lo(); k <= window.hi(); ++k) {
    if (out.reference && k == *out.reference) {
      out.beta[k] = 0.0;
      continue;
    }
    if (counts[k] == 0) {
      out.beta[k] = std::nullopt;
      continue;
    }
    ks.push_back(k);
  }
  if (ks.empty()) throw IdentificationError("dynamic TWFE: no event-time observations");

  std::size_t n = 0;
  for (auto v : sample.data()) n += v;
  const auto P = static_cast<Eigen::Index>(ks.size());
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), P);
  Eigen::VectorXd yv(static_cast<Eigen::Index>(n));
  const auto yr = two_way_residuals(panel.outcomes, sample, options);
  std::vector<Grid<double>> xr;
  for (int k : ks) {
    Grid<double> d(J, T, 0.0);
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t t = 0; t < T; ++t)
        if (sample(j, t) && treatment.event_dummy(j, t, k)) d(j, t) = 1.0;
    xr.push_back(two_way_residuals(d, sample, options));
  }
  Eigen::Index row = 0;
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t t = 0; t < T; ++t)
      if (sample(j, t)) {
        yv[row] = yr(j, t);
        for (Eigen::Index c = 0; c < P; ++c) X(row, c) = xr[static_cast<std::size_t>(c)](j, t);
        ++row;
      }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < P)
    throw IdentificationError("dynamic TWFE: event dummies are collinear with the fixed effects");
  Eigen::VectorXd b = qr.solve(yv);
  for (Eigen::Index c = 0; c < P; ++c) out.beta[ks[static_cast<std::size_t>(c)]] = b[c];
  return out;
}

}  // namespace bnidid
