#pragma once

// Synthetic bipartite-interference panels with both the factual and the
// no-treatment counterfactual world, so every estimand has an exact oracle.
//
// Construction (per period t, W_t the receptor-share weights, G_t = W_t'W_t):
//   intervention-level baseline  b_jt = mu_j + lambda_t
//   receptor baseline            B_t  = W_t G_t^{-1} b_t + (I - W_t G_t^{-1} W_t') z
//   Y_it(0)  = B_it + gamma' x_it + eps_it
//   Y_it     = Y_it(0) + sum_j a_jt m_j beta(K_jt) rho_ij h_ijt / sum_i' h_i'jt
// so the projection of Y(0) onto intervention units is exactly additive
// two-way plus projected covariates and noise, and each treated source
// distributes its effect over its receptors in proportion to its emissions.
// rho_ij is 1 on a receptor's home edge and `spillover_scale` elsewhere.

#include "bnidid/analysis.hpp"
#include "bnidid/core.hpp"
#include "bnidid/network.hpp"
#include "bnidid/stats.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace bnidid {

struct NetworkSpec {
  double edge_density = 0.02;  // probability of each non-home edge
  double meanlog = 0.0;
  double sdlog = 1.0;
  double home_boost = 1.5;     // added to meanlog for home edges
  bool time_constant = true;
  double period_jitter_sdlog = 0.1;  // per-edge per-period noise when time-varying
};

struct AdoptionSpec {
  double never_treated_fraction = 0.3;
  int earliest = 2;  // period label
  int latest = 0;    // period label; 0 means the last period
  std::vector<double> cohort_probabilities;  // over [earliest, latest]; empty = uniform
};

struct EffectSpec {
  std::vector<double> profile;  // beta_k for k = 0, 1, ...; last value persists
  double spillover_scale = 1.0;
  double heterogeneity_sd = 0.0;  // per-unit multiplier m_j = 1 + sd * N(0, 1)

  double beta(int k) const {
    if (k < 0 || profile.empty()) return 0.0;
    return profile[std::min<std::size_t>(static_cast<std::size_t>(k), profile.size() - 1)];
  }
  bool any() const {
    return std::any_of(profile.begin(), profile.end(), [](double b) { return b != 0.0; });
  }
};

struct FixedEffectSpec {
  double unit_mean = 50.0;
  double unit_sd = 10.0;
  std::vector<double> time_trend;  // lambda_t if given (size T)
  double trend_slope = 0.5;
  double time_sd = 1.0;
  double receptor_sd = 1.0;  // receptor heterogeneity invisible after projection
};

struct DgpConfig {
  std::size_t J = 20;
  std::size_t N = 100;
  std::size_t T = 8;
  int first_period = 1;
  NetworkSpec network{};
  AdoptionSpec adoption{};
  EffectSpec effects{};
  double noise_sd = 1.0;
  FixedEffectSpec fe{};
  std::size_t n_covariates = 0;
  double covariate_coef = 1.0;
  std::uint64_t master_seed = 1;

  int last_period() const { return first_period + static_cast<int>(T) - 1; }
  int latest_adoption() const { return adoption.latest == 0 ? last_period() : adoption.latest; }

  void validate() const {
    if (J < 1 || N < 1 || T < 2) throw std::invalid_argument("dgp: need J, N >= 1 and T >= 2");
    if (N < J) throw std::invalid_argument("dgp: need N >= J so every source has a home receptor");
    if (!(network.edge_density >= 0.0 && network.edge_density <= 1.0))
      throw std::invalid_argument("dgp: edge_density must be in [0, 1]");
    if (!(adoption.never_treated_fraction >= 0.0 && adoption.never_treated_fraction <= 1.0))
      throw std::invalid_argument("dgp: never_treated_fraction must be in [0, 1]");
    if (adoption.earliest <= first_period || latest_adoption() > last_period() ||
        adoption.earliest > latest_adoption())
      throw std::invalid_argument("dgp: adoption window must lie within [first + 1, last]");
    const auto n_cohorts = static_cast<std::size_t>(latest_adoption() - adoption.earliest + 1);
    if (!adoption.cohort_probabilities.empty() &&
        adoption.cohort_probabilities.size() != n_cohorts)
      throw std::invalid_argument("dgp: cohort_probabilities must have one entry per adoption period");
    for (double b : effects.profile)
      if (!std::isfinite(b)) throw std::invalid_argument("dgp: effect profile must be finite");
    if (!(noise_sd >= 0.0)) throw std::invalid_argument("dgp: noise_sd must be >= 0");
    if (!fe.time_trend.empty() && fe.time_trend.size() != T)
      throw std::invalid_argument("dgp: time_trend must have T entries");
  }
};

struct OracleCell {
  double ttt = 0.0;  // mean intervention-level effect over cells with A^k = 1
  std::size_t n_obs = 0;
};

struct SimulatedData {
  DgpConfig config;
  InterferenceNetwork network;
  TreatmentPanel treatment;
  OutcomePanel factual;
  OutcomePanel counterfactual;
  std::map<int, OracleCell> oracle;
  std::vector<std::uint32_t> home;  // home source of each receptor
};

namespace detail {

inline std::string padded(char prefix, std::size_t k, std::size_t n) {
  const int width = static_cast<int>(std::to_string(n).size());
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, k + 1);
  return buf;
}

enum SimStream : std::uint64_t { kNetwork = 1, kAdoption, kFixedEffects, kNoise, kCovariates };

}  // namespace detail

inline SimulatedData generate(const DgpConfig& config) {
  config.validate();
  const std::size_t J = config.J, N = config.N, T = config.T;
  SimulatedData sim;
  sim.config = config;

  std::vector<std::string> src_ids(J), rec_ids(N);
  for (std::size_t j = 0; j < J; ++j) src_ids[j] = detail::padded('p', j, J);
  for (std::size_t i = 0; i < N; ++i) rec_ids[i] = detail::padded('z', i, N);
  auto sources = make_ids(std::move(src_ids));
  auto receptors = make_ids(std::move(rec_ids));
  const PeriodRange periods(config.first_period, T);

  // Network: each receptor has one home source (every source gets >= 1),
  // plus Bernoulli(edge_density) log-normal cross edges.
  std::mt19937_64 net_rng(derive_seed(config.master_seed, 0, detail::kNetwork));
  const auto& ns = config.network;
  std::lognormal_distribution<double> home_w(ns.meanlog + ns.home_boost, ns.sdlog);
  std::lognormal_distribution<double> cross_w(ns.meanlog, ns.sdlog);
  std::bernoulli_distribution cross(ns.edge_density);
  std::uniform_int_distribution<std::size_t> any_src(0, J - 1);
  sim.home.resize(N);
  std::vector<Edge> base;
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t h = i < J ? i : any_src(net_rng);
    sim.home[i] = static_cast<std::uint32_t>(h);
    for (std::size_t j = 0; j < J; ++j) {
      if (j == h) {
        base.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), home_w(net_rng)});
      } else if (ns.edge_density > 0.0 && cross(net_rng)) {
        base.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), cross_w(net_rng)});
      }
    }
  }
  std::vector<SparseLayer> layers;
  if (ns.time_constant) {
    layers.emplace_back(N, J, base);
  } else {
    std::lognormal_distribution<double> jitter(0.0, ns.period_jitter_sdlog);
    for (std::size_t t = 0; t < T; ++t) {
      auto edges = base;
      for (auto& e : edges) e.weight *= jitter(net_rng);
      layers.emplace_back(N, J, std::move(edges));
    }
  }
  sim.network = InterferenceNetwork(sources, receptors, periods, std::move(layers), ns.time_constant);

  // Adoption.
  std::mt19937_64 adopt_rng(derive_seed(config.master_seed, 0, detail::kAdoption));
  std::vector<std::size_t> order(J);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), adopt_rng);
  const auto n_never = static_cast<std::size_t>(
      std::llround(config.adoption.never_treated_fraction * static_cast<double>(J)));
  if (n_never >= J && config.effects.any())
    throw std::invalid_argument("dgp: nonzero effect profile but no unit is ever treated");
  const int earliest = config.adoption.earliest, latest = config.latest_adoption();
  std::vector<double> probs = config.adoption.cohort_probabilities;
  if (probs.empty()) probs.assign(static_cast<std::size_t>(latest - earliest + 1), 1.0);
  std::discrete_distribution<int> cohort(probs.begin(), probs.end());
  std::vector<FirstTreated> first(J, FirstTreated::never());
  for (std::size_t r = n_never; r < J; ++r) first[order[r]] = FirstTreated::at(earliest + cohort(adopt_rng));
  sim.treatment = TreatmentPanel(sources, periods, std::move(first));

  // Fixed effects.
  std::mt19937_64 fe_rng(derive_seed(config.master_seed, 0, detail::kFixedEffects));
  std::normal_distribution<double> z01(0.0, 1.0);
  std::vector<double> mu(J), lambda(T), mult(J, 1.0);
  for (auto& m : mu) m = config.fe.unit_mean + config.fe.unit_sd * z01(fe_rng);
  for (std::size_t t = 0; t < T; ++t)
    lambda[t] = config.fe.time_trend.empty()
                    ? config.fe.trend_slope * static_cast<double>(t) + config.fe.time_sd * z01(fe_rng)
                    : config.fe.time_trend[t];
  for (auto& m : mult) m = 1.0 + config.effects.heterogeneity_sd * z01(fe_rng);
  Eigen::VectorXd z(static_cast<Eigen::Index>(N));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = config.fe.receptor_sd * z01(fe_rng);

  // Covariates.
  std::mt19937_64 cov_rng(derive_seed(config.master_seed, 0, detail::kCovariates));
  std::vector<Grid<double>> cov(config.n_covariates, Grid<double>(N, T));
  for (auto& c : cov)
    for (auto& v : c.data()) v = z01(cov_rng);

  std::mt19937_64 noise_rng(derive_seed(config.master_seed, 0, detail::kNoise));
  std::normal_distribution<double> noise(0.0, 1.0);

  Grid<double> y0(N, T), y1(N, T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& H = sim.network.layer(t);
    // Receptor-share weights W_t (rows sum to one) and source column sums.
    std::vector<double> row_sum(N, 0.0);
    for (const auto& e : H.edges()) row_sum[e.outcome] += e.weight;
    const auto col_sum = H.column_sums();

    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(J), static_cast<Eigen::Index>(J));
    for (std::size_t i = 0; i < N; ++i) {
      auto row = H.row(i);
      for (const auto& a : row)
        for (const auto& b : row)
          G(a.intervention, b.intervention) += (a.weight / row_sum[i]) * (b.weight / row_sum[i]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-12 * ldlt.vectorD().maxCoeff())
      throw std::runtime_error("dgp: receptor-share matrix is rank deficient; change seed or density");

    auto apply_w = [&](const Eigen::VectorXd& c) {  // W c
      Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
      for (const auto& e : H.edges()) out[e.outcome] += (e.weight / row_sum[e.outcome]) * c[e.intervention];
      return out;
    };
    auto apply_wt = [&](const Eigen::VectorXd& v) {  // W' v
      Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(J));
      for (const auto& e : H.edges()) out[e.intervention] += (e.weight / row_sum[e.outcome]) * v[e.outcome];
      return out;
    };

    Eigen::VectorXd target(static_cast<Eigen::Index>(J));
    for (std::size_t j = 0; j < J; ++j) target[static_cast<Eigen::Index>(j)] = mu[j] + lambda[t];
    Eigen::VectorXd baseline = apply_w(ldlt.solve(target));
    baseline += z - apply_w(ldlt.solve(apply_wt(z)));

    std::vector<double> effect(N, 0.0);
    for (const auto& e : H.edges()) {
      if (!sim.treatment.treated(e.intervention, t)) continue;
      const int k = sim.treatment.event_time_at(e.intervention, t).value();
      const double rho = sim.home[e.outcome] == e.intervention ? 1.0 : config.effects.spillover_scale;
      effect[e.outcome] += mult[e.intervention] * config.effects.beta(k) * rho * e.weight /
                           col_sum[e.intervention];
    }
    for (std::size_t i = 0; i < N; ++i) {
      double v = baseline[static_cast<Eigen::Index>(i)];
      for (std::size_t c = 0; c < cov.size(); ++c) v += config.covariate_coef * cov[c](i, t);
      v += config.noise_sd * noise(noise_rng);
      y0(i, t) = v;
      y1(i, t) = v + effect[i];
    }
  }
  sim.counterfactual = OutcomePanel(receptors, periods, y0);
  sim.factual = OutcomePanel(receptors, periods, y1);
  for (std::size_t c = 0; c < cov.size(); ++c) {
    const std::string name = "x" + std::to_string(c + 1);
    sim.counterfactual.add_covariate(name);
    sim.counterfactual.set_covariate(c, cov[c]);
    sim.factual.add_covariate(name);
    sim.factual.set_covariate(c, cov[c]);
  }

  // Oracle: brute-force projection of both worlds, averaged over A^k = 1.
  std::map<int, double> sums;
  for (std::size_t t = 0; t < T; ++t) {
    const auto& H = sim.network.layer(t);
    std::vector<double> diff(J, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
      double rs = 0.0;
      for (const auto& e : H.row(i)) rs += e.weight;
      for (const auto& e : H.row(i)) diff[e.intervention] += (e.weight / rs) * (y1(i, t) - y0(i, t));
    }
    for (std::size_t j = 0; j < J; ++j) {
      auto K = sim.treatment.event_time_at(j, t);
      if (!K.is_finite()) continue;
      sums[K.value()] += diff[j];
      ++sim.oracle[K.value()].n_obs;
    }
  }
  for (auto& [k, cell] : sim.oracle) cell.ttt = sums[k] / static_cast<double>(cell.n_obs);
  return sim;
}

struct CoverageSettings {
  AnalysisSettings analysis{};
  bool with_dynamic_twfe = false;
};

struct CoverageRow {
  int k = 0;
  std::size_t n_ok = 0;            // replicates with an estimate at k
  double mean_oracle = kNaN;
  double mean_estimate = kNaN;
  double mean_bias = kNaN;         // mean of (estimate - oracle)
  double mc_se = kNaN;             // Monte-Carlo standard error of mean_bias
  double rmse = kNaN;
  double coverage = kNaN;          // fraction of CIs containing the oracle
  double mean_twfe = kNaN;         // dynamic TWFE baseline, when requested
  double twfe_mean_bias = kNaN;
};

struct CoverageReport {
  std::vector<CoverageRow> rows;
  std::size_t n_outer = 0;
  std::size_t n_failed = 0;
  std::vector<std::string> failures;

  const CoverageRow* find(int k) const {
    for (const auto& r : rows)
      if (r.k == k) return &r;
    return nullptr;
  }
};

/// Repeats generate + full analysis n_outer times. Replicate r uses DGP seed
/// derive_seed(master, r, 11) and bootstrap seed derive_seed(master, r, 12).
inline CoverageReport coverage_study(const DgpConfig& config, const CoverageSettings& settings,
                                     std::size_t n_outer) {
  if (n_outer < 2) throw std::invalid_argument("coverage_study: n_outer must be >= 2");
  const auto& window = settings.analysis.window;
  window.validate();
  struct Acc {
    std::vector<double> bias, oracle, est, twfe, twfe_bias;
    std::size_t covered = 0, with_ci = 0;
  };
  std::vector<Acc> acc(window.size());
  CoverageReport report;
  report.n_outer = n_outer;
  for (std::size_t r = 0; r < n_outer; ++r) {
    DgpConfig c = config;
    c.master_seed = derive_seed(config.master_seed, r, 11);
    AnalysisSettings a = settings.analysis;
    if (a.bootstrap) a.bootstrap->master_seed = derive_seed(config.master_seed, r, 12);
    try {
      auto sim = generate(c);
      auto out = run_analysis(sim.network, sim.treatment, sim.factual, a);
      std::optional<DynamicTwfeResult> twfe;
      if (settings.with_dynamic_twfe)
        twfe = baseline_dynamic_twfe(out.projected, sim.treatment, window, a.solver);
      for (const auto& coef : out.result.coefficients) {
        if (!coef.estimate) continue;
        auto o = sim.oracle.find(coef.k);
        if (o == sim.oracle.end()) continue;
        auto& s = acc[window.offset(coef.k)];
        s.bias.push_back(*coef.estimate - o->second.ttt);
        s.oracle.push_back(o->second.ttt);
        s.est.push_back(*coef.estimate);
        if (std::isfinite(coef.ci_low)) {
          ++s.with_ci;
          if (coef.ci_low <= o->second.ttt && o->second.ttt <= coef.ci_high) ++s.covered;
        }
        if (twfe) {
          auto b = twfe->beta.find(coef.k);
          if (b != twfe->beta.end() && b->second) {
            s.twfe.push_back(*b->second);
            s.twfe_bias.push_back(*b->second - o->second.ttt);
          }
        }
      }
    } catch (const std::exception& e) {
      ++report.n_failed;
      report.failures.push_back("replicate " + std::to_string(r) + ": " + e.what());
    }
  }
  if (report.n_failed == n_outer)
    throw std::runtime_error("coverage_study: every replicate failed; first: " + report.failures.front());
  for (int k = window.lo(); k <= window.hi(); ++k) {
    const auto& s = acc[window.offset(k)];
    CoverageRow row;
    row.k = k;
    row.n_ok = s.bias.size();
    if (row.n_ok) {
      row.mean_oracle = mean(s.oracle);
      row.mean_estimate = mean(s.est);
      row.mean_bias = mean(s.bias);
      row.mc_se = sample_sd(s.bias) / std::sqrt(static_cast<double>(row.n_ok));
      double ss = 0.0;
      for (double b : s.bias) ss += b * b;
      row.rmse = std::sqrt(ss / static_cast<double>(row.n_ok));
    }
    if (s.with_ci) row.coverage = static_cast<double>(s.covered) / static_cast<double>(s.with_ci);
    if (!s.twfe.empty()) {
      row.mean_twfe = mean(s.twfe);
      row.twfe_mean_bias = mean(s.twfe_bias);
    }
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace bnidid
