#include "helpers.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <random>

using namespace bnidid;
using namespace testing_helpers;

namespace {

struct DenseOls {
  std::vector<double> mu, lambda, gamma;
};

// Dummy-variable least squares on the control cells: unit dummies for every
// unit, period dummies for periods 2..T, plus covariates.
DenseOls dense_ols(const Grid<double>& y, const Grid<std::uint8_t>& mask,
                   const std::vector<Grid<double>>& x = {}) {
  const std::size_t J = y.rows(), T = y.cols(), P = x.size();
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t t = 0; t < T; ++t)
      if (mask(j, t)) cells.emplace_back(j, t);
  const auto n = static_cast<Eigen::Index>(cells.size());
  const auto p = static_cast<Eigen::Index>(J + T - 1 + P);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, p);
  Eigen::VectorXd v(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    auto [j, t] = cells[static_cast<std::size_t>(r)];
    D(r, static_cast<Eigen::Index>(j)) = 1.0;
    if (t > 0) D(r, static_cast<Eigen::Index>(J + t - 1)) = 1.0;
    for (std::size_t c = 0; c < P; ++c) D(r, static_cast<Eigen::Index>(J + T - 1 + c)) = x[c](j, t);
    v[r] = y(j, t);
  }
  Eigen::VectorXd b = D.householderQr().solve(v);
  DenseOls out;
  for (std::size_t j = 0; j < J; ++j) out.mu.push_back(b[static_cast<Eigen::Index>(j)]);
  out.lambda.push_back(0.0);
  for (std::size_t t = 1; t < T; ++t) out.lambda.push_back(b[static_cast<Eigen::Index>(J + t - 1)]);
  for (std::size_t c = 0; c < P; ++c) out.gamma.push_back(b[static_cast<Eigen::Index>(J + T - 1 + c)]);
  return out;
}

ProjectedPanel masked_panel(const Grid<double>& y, const Grid<std::uint8_t>& mask) {
  ProjectedPanel p;
  p.ids = named('p', y.rows());
  p.periods = PeriodRange(1, y.cols());
  p.outcomes = y;
  p.spillover = Grid<double>(y.rows(), y.cols(), 0.0);
  p.exposed = Grid<std::uint8_t>(y.rows(), y.cols(), 0);
  p.is_control = mask;
  return p;
}

// Random mask with ~frac cells removed but every row and column kept.
Grid<std::uint8_t> random_mask(std::size_t J, std::size_t T, double frac, std::mt19937_64& rng) {
  std::bernoulli_distribution drop(frac);
  Grid<std::uint8_t> m(J, T, 1);
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t t = 0; t < T; ++t)
      if (j != t % J && t != j % T && drop(rng)) m(j, t) = 0;
  return m;
}

}  // namespace

TEST(Stage1, RecoversNoiselessTwoWay) {
  Grid<double> y(2, 3);
  const double mu[2] = {1, 2}, lam[3] = {0, 1, 2};
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t t = 0; t < 3; ++t) y(j, t) = mu[j] + lam[t];
  auto fit = fit_stage1(masked_panel(y, Grid<std::uint8_t>(2, 3, 1)));
  EXPECT_NEAR(fit.mu[0], 1.0, 1e-12);
  EXPECT_NEAR(fit.mu[1], 2.0, 1e-12);
  EXPECT_EQ(fit.lambda[0], 0.0);
  EXPECT_NEAR(fit.lambda[1], 1.0, 1e-12);
  EXPECT_NEAR(fit.lambda[2], 2.0, 1e-12);
  EXPECT_EQ(fit.n_obs_used, 6u);
}

TEST(Stage1, ConstantOutcome) {
  auto fit = fit_stage1(masked_panel(Grid<double>(3, 4, 4.25), Grid<std::uint8_t>(3, 4, 1)));
  for (double m : fit.mu) EXPECT_NEAR(m, 4.25, 1e-12);
  for (double l : fit.lambda) EXPECT_NEAR(l, 0.0, 1e-12);
}

TEST(Stage1, MatchesDenseOlsOnMaskedPanel) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> z(0.0, 3.0);
  for (int rep = 0; rep < 25; ++rep) {
    Grid<double> y(5, 4);
    for (auto& v : y.data()) v = z(rng);
    auto mask = random_mask(5, 4, 0.3, rng);
    auto panel = masked_panel(y, mask);
    auto fit = fit_stage1(panel);
    auto oracle = dense_ols(y, mask);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(fit.mu[j], oracle.mu[j], 1e-8);
    for (std::size_t t = 0; t < 4; ++t) EXPECT_NEAR(fit.lambda[t], oracle.lambda[t], 1e-8);
    auto r = residualize(panel, fit);
    for (std::size_t j = 0; j < 5; ++j)
      for (std::size_t t = 0; t < 4; ++t)
        EXPECT_NEAR(r(j, t), y(j, t) - oracle.mu[j] - oracle.lambda[t], 1e-8);
  }
}

TEST(Stage1, CovariatesMatchDenseOls) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z(0.0, 1.0);
  Grid<double> y(6, 5), x1(6, 5), x2(6, 5);
  for (std::size_t k = 0; k < y.size(); ++k) {
    x1.data()[k] = z(rng);
    x2.data()[k] = z(rng);
    y.data()[k] = 2.0 * x1.data()[k] - 0.5 * x2.data()[k] + z(rng);
  }
  auto mask = random_mask(6, 5, 0.25, rng);
  auto panel = masked_panel(y, mask);
  panel.covariate_names = {"x1", "x2"};
  panel.covariates = {x1, x2};
  auto fit = fit_stage1(panel);
  auto oracle = dense_ols(y, mask, {x1, x2});
  ASSERT_EQ(fit.gamma.size(), 2u);
  EXPECT_NEAR(fit.gamma[0], oracle.gamma[0], 1e-8);
  EXPECT_NEAR(fit.gamma[1], oracle.gamma[1], 1e-8);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(fit.mu[j], oracle.mu[j], 1e-8);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_NEAR(fit.lambda[t], oracle.lambda[t], 1e-8);
}

TEST(Stage1, MissingControlSupportIsAnError) {
  Grid<std::uint8_t> mask(3, 3, 1);
  mask(1, 0) = mask(1, 1) = mask(1, 2) = 0;
  try {
    fit_stage1(masked_panel(Grid<double>(3, 3, 1.0), mask));
    FAIL();
  } catch (const IdentificationError& e) {
    EXPECT_NE(std::string(e.what()).find("p2"), std::string::npos);
  }
  Grid<std::uint8_t> no_period(3, 3, 1);
  no_period(0, 2) = no_period(1, 2) = no_period(2, 2) = 0;
  EXPECT_THROW(fit_stage1(masked_panel(Grid<double>(3, 3, 1.0), no_period)), IdentificationError);
}

TEST(Stage1, DisconnectedControlsAreAnError) {
  // Units {1,2} only in periods {1,2}, unit 3 only in period 3.
  Grid<std::uint8_t> mask(3, 3, 0);
  mask(0, 0) = mask(0, 1) = mask(1, 0) = mask(1, 1) = mask(2, 2) = 1;
  EXPECT_THROW(fit_stage1(masked_panel(Grid<double>(3, 3, 1.0), mask)), IdentificationError);
}

TEST(Stage1, DenseFallbackAgreesWithIteration) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> z;
  Grid<double> y(8, 6);
  for (auto& v : y.data()) v = z(rng);
  auto mask = random_mask(8, 6, 0.4, rng);
  auto iter = fit_two_way(y, mask);
  TwoWayOptions starve;
  starve.max_iterations = 1;
  auto dense = fit_two_way(y, mask, starve);
  EXPECT_TRUE(dense.used_dense);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(iter.unit[j], dense.unit[j], 1e-8);
  for (std::size_t t = 0; t < 6; ++t) EXPECT_NEAR(iter.period[t], dense.period[t], 1e-8);
  starve.dense_limit = 0;
  EXPECT_THROW(fit_two_way(y, mask, starve), NonConvergenceError);
}

TEST(Residualize, ControlsZeroTreatedKeepEffect) {
  auto tr = treatment_of(named('p', 3), PeriodRange(1, 4), {3, 0, 0});
  Grid<double> y(3, 4);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t t = 0; t < 4; ++t) y(j, t) = 10.0 * j + 1.5 * t + (tr.treated(j, t) ? -5.0 : 0.0);
  auto panel = panel_of(y, tr);
  auto r = residualize(panel, fit_stage1(panel));
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t t = 0; t < 4; ++t) EXPECT_NEAR(r(j, t), tr.treated(j, t) ? -5.0 : 0.0, 1e-10);
}

TEST(Stage2, HandExample) {
  auto tr = treatment_of(named('p', 2), PeriodRange(1, 3), {2, 0});
  Grid<double> y(2, 3);
  const double lam[3] = {0.0, 0.7, 1.9};
  for (std::size_t t = 0; t < 3; ++t) {
    y(0, t) = 3.0 + lam[t] + (t >= 1 ? -5.0 : 0.0);
    y(1, t) = 8.0 + lam[t];
  }
  auto res = estimate_event_study(panel_of(y, tr), tr, EventWindow{1, 1});
  EXPECT_NEAR(*res.at(0).estimate, -5.0, 1e-10);
  EXPECT_NEAR(*res.at(1).estimate, -5.0, 1e-10);
  EXPECT_NEAR(*res.at(-1).estimate, 0.0, 1e-10);  // plant 1 at t = 1
  EXPECT_EQ(res.at(-1).n_obs, 1u);
  auto wide = estimate_event_study(panel_of(y, tr), tr, EventWindow{2, 2});
  EXPECT_FALSE(wide.at(-2).estimate.has_value());
  EXPECT_FALSE(wide.at(2).estimate.has_value());
  EXPECT_EQ(wide.at(2).n_obs, 0u);
  EXPECT_EQ(res.n_control_obs, 4u);
}

TEST(Stage2, CoefficientIsCellMeanAndOutOfWindowExcluded) {
  auto tr = treatment_of(named('p', 3), PeriodRange(1, 5), {2, 3, 0});
  Grid<double> r(3, 5, 0.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  for (auto& v : r.data()) v = z(rng);
  auto res = fit_stage2(r, tr, EventWindow{1, 1});
  EXPECT_NEAR(*res.at(0).estimate, (r(0, 1) + r(1, 2)) / 2.0, 1e-15);
  EXPECT_NEAR(*res.at(1).estimate, (r(0, 2) + r(1, 3)) / 2.0, 1e-15);
  EXPECT_NEAR(*res.at(-1).estimate, (r(0, 0) + r(1, 1)) / 2.0, 1e-15);
  EXPECT_EQ(res.at(0).n_obs, 2u);

  auto zero = fit_stage2(Grid<double>(3, 5, 0.0), tr, EventWindow{1, 2});
  for (const auto& c : zero.coefficients) EXPECT_EQ(*c.estimate, 0.0);
}

TEST(Stage2, InvariantToLevelAndPeriodShifts) {
  DgpConfig cfg;
  cfg.J = 15;
  cfg.N = 60;
  cfg.T = 7;
  cfg.effects.profile = {-1.0, -2.0};
  cfg.master_seed = 3;
  auto sim = generate(cfg);
  AnalysisSettings s;
  s.window = {2, 3};
  auto base = run_analysis(sim.network, sim.treatment, sim.factual, s);

  auto shifted = base.projected;
  for (std::size_t j = 0; j < shifted.units(); ++j)
    for (std::size_t t = 0; t < shifted.periods.size(); ++t)
      shifted.outcomes(j, t) += 100.0 + 3.0 * static_cast<double>(t * t);
  auto again = estimate_event_study(shifted, sim.treatment, s.window);
  for (std::size_t k = 0; k < base.result.coefficients.size(); ++k) {
    const auto& a = base.result.coefficients[k];
    const auto& b = again.coefficients[k];
    ASSERT_EQ(a.estimate.has_value(), b.estimate.has_value());
    if (a.estimate) {
      EXPECT_NEAR(*a.estimate, *b.estimate, 1e-8);
    }
  }
}

TEST(Bootstrap, DeterministicAndThreadIndependent) {
  DgpConfig cfg;
  cfg.J = 20;
  cfg.N = 80;
  cfg.T = 6;
  cfg.network.edge_density = 0.005;
  cfg.adoption.never_treated_fraction = 0.4;
  cfg.effects.profile = {-1.0};
  auto sim = generate(cfg);
  AnalysisSettings s;
  s.window = {2, 2};
  auto out = run_analysis(sim.network, sim.treatment, sim.factual, s);
  BootstrapConfig b;
  b.n_replicates = 60;
  b.master_seed = 17;
  auto r1 = bootstrap_ci(out.projected, sim.treatment, s.window, b);
  auto r2 = bootstrap_ci(out.projected, sim.treatment, s.window, b);
  b.threads = 3;
  auto r3 = bootstrap_ci(out.projected, sim.treatment, s.window, b);
  for (std::size_t k = 0; k < r1.coefficients.size(); ++k) {
    EXPECT_EQ(r1.coefficients[k].ci_low, r2.coefficients[k].ci_low);
    EXPECT_EQ(r1.coefficients[k].ci_high, r2.coefficients[k].ci_high);
    EXPECT_EQ(r1.coefficients[k].std_error, r3.coefficients[k].std_error);
    EXPECT_EQ(r1.coefficients[k].ci_high, r3.coefficients[k].ci_high);
  }
  b.master_seed = 18;
  auto r4 = bootstrap_ci(out.projected, sim.treatment, s.window, b);
  EXPECT_NE(r1.at(0).ci_low, r4.at(0).ci_low);
}

TEST(Bootstrap, SingleReplicateGivesDegenerateInterval) {
  DgpConfig cfg;
  cfg.J = 20;
  cfg.N = 80;
  cfg.T = 6;
  cfg.network.edge_density = 0.005;
  cfg.adoption.never_treated_fraction = 0.4;
  cfg.effects.profile = {-1.0};
  auto sim = generate(cfg);
  AnalysisSettings s;
  s.window = {1, 1};
  auto out = run_analysis(sim.network, sim.treatment, sim.factual, s);
  BootstrapConfig b;
  b.n_replicates = 1;
  b.master_seed = 5;
  auto r = bootstrap_ci(out.projected, sim.treatment, s.window, b);
  auto rep = detail::bootstrap_replicate(out.projected, sim.treatment, s.window, derive_seed(5, 0), {});
  ASSERT_TRUE(rep.has_value());
  for (std::size_t k = 0; k < r.coefficients.size(); ++k) {
    if (!(*rep)[k]) continue;
    EXPECT_EQ(r.coefficients[k].ci_low, *(*rep)[k]);
    EXPECT_EQ(r.coefficients[k].ci_high, *(*rep)[k]);
    EXPECT_EQ(r.coefficients[k].std_error, 0.0);
  }
}

TEST(Bootstrap, TooManyDiscardsIsAnError) {
  // One never-treated unit supplies every late-period control; replicates
  // that miss it lose those periods.
  auto tr = treatment_of(named('p', 4), PeriodRange(1, 4), {2, 2, 3, 0});
  Grid<double> y(4, 4);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z;
  for (auto& v : y.data()) v = z(rng);
  BootstrapConfig b;
  b.n_replicates = 50;
  EXPECT_THROW(bootstrap_ci(panel_of(y, tr), tr, EventWindow{1, 2}, b), BootstrapError);
}

TEST(Rescale, HandExample) {
  // Z^k = {p1}; w column for p1 = (0.5, 0.25).
  auto net = dense_network({{1.0, 1.0}, {1.0, 3.0}}, 3);
  auto w = normalize_weights(net);
  auto tr = treatment_of(net.interventions(), net.periods(), {3, 0});
  auto e = rescale_factor(w, tr, 0);
  EXPECT_EQ(e.n_treated_obs, 1u);
  EXPECT_DOUBLE_EQ(e.sum_ell, 0.75);
  EXPECT_DOUBLE_EQ(e.factor, 1.0 / 0.75);

  EventStudyResult r;
  r.window = {0, 0};
  r.coefficients = {EventCoefficient{0, 1, -3.0}};
  EXPECT_DOUBLE_EQ(rescale_to_outcome_level(r, w, tr, 0), -4.0);
  EXPECT_THROW(rescale_factor(w, tr, 2), std::invalid_argument);
}

TEST(Rescale, FullWeightGivesUnitFactor) {
  auto net = dense_network({{2.0, 0.0}, {0.0, 1.0}}, 2);
  auto tr = treatment_of(net.interventions(), net.periods(), {2, 2});
  EXPECT_DOUBLE_EQ(rescale_factor(normalize_weights(net), tr, 0).factor, 1.0);
}

TEST(LevelAgreement, HoldsOnRandomInstances) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    DgpConfig cfg;
    cfg.J = 10;
    cfg.N = 50;
    cfg.T = 6;
    cfg.network.edge_density = 0.2;
    cfg.network.time_constant = seed % 2 == 0;
    cfg.effects.profile = {-1.0, -3.0, -2.0};
    cfg.effects.heterogeneity_sd = 0.5;
    cfg.effects.spillover_scale = 0.7;
    cfg.master_seed = seed;
    auto sim = generate(cfg);
    auto w = normalize_weights(sim.network);
    for (int k = -4; k <= 4; ++k) {
      bool any = false;
      for (std::size_t j = 0; j < cfg.J; ++j)
        for (std::size_t t = 0; t < cfg.T; ++t) any = any || sim.treatment.event_dummy(j, t, k);
      if (!any) continue;
      EXPECT_LE(proposition1_identity_check(w, sim.factual, sim.counterfactual, sim.treatment, k), 1e-10);
    }
  }
}

TEST(LevelAgreement, BothSidesZeroWithoutEffects) {
  DgpConfig cfg;
  cfg.J = 6;
  cfg.N = 20;
  cfg.T = 4;
  auto sim = generate(cfg);
  EXPECT_EQ(proposition1_identity_check(normalize_weights(sim.network), sim.factual, sim.counterfactual,
                                        sim.treatment, 0),
            0.0);
}

TEST(Baselines, StaticTwfeRecoversConstantEffect) {
  auto tr = treatment_of(named('p', 4), PeriodRange(1, 5), {3, 4, 0, 0});
  Grid<double> y(4, 5);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t t = 0; t < 5; ++t) y(j, t) = 2.0 * j + 0.3 * t + (tr.treated(j, t) ? -2.5 : 0.0);
  EXPECT_NEAR(baseline_static_twfe(panel_of(y, tr), tr), -2.5, 1e-8);
  auto none = treatment_of(named('p', 4), PeriodRange(1, 5), {0, 0, 0, 0});
  EXPECT_THROW(baseline_static_twfe(panel_of(y, none), none), IdentificationError);
}

TEST(Baselines, DynamicTwfeRecoversProfileWithoutSpillover) {
  auto tr = treatment_of(named('p', 6), PeriodRange(1, 6), {3, 4, 5, 3, 0, 0});
  Grid<double> y(6, 6);
  const double beta[3] = {-1.0, -2.0, -4.0};
  for (std::size_t j = 0; j < 6; ++j)
    for (std::size_t t = 0; t < 6; ++t) {
      y(j, t) = 1.0 * j + 0.5 * t;
      auto K = tr.event_time_at(j, t);
      if (K.is_finite() && K.value() >= 0) y(j, t) += beta[std::min(K.value(), 2)];
    }
  auto r = baseline_dynamic_twfe(panel_of(y, tr), tr, EventWindow{2, 3});
  ASSERT_TRUE(r.reference.has_value());
  EXPECT_EQ(*r.reference, -1);
  EXPECT_NEAR(*r.beta.at(0), -1.0, 1e-8);
  EXPECT_NEAR(*r.beta.at(1), -2.0, 1e-8);
  EXPECT_NEAR(*r.beta.at(2), -4.0, 1e-8);
  EXPECT_NEAR(*r.beta.at(-2), 0.0, 1e-8);
}
