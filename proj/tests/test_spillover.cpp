#include "helpers.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace bnidid;
using namespace testing_helpers;

namespace {

// g_j' = sum_i h_ij' sum_{j != j'} h_ij a_j, literally.
std::vector<double> spillover_dense(const std::vector<std::vector<double>>& h, const std::vector<int>& a) {
  const std::size_t N = h.size(), J = h[0].size();
  std::vector<double> g(J, 0.0);
  for (std::size_t jp = 0; jp < J; ++jp)
    for (std::size_t i = 0; i < N; ++i) {
      double m = 0.0;
      for (std::size_t j = 0; j < J; ++j)
        if (j != jp) m += h[i][j] * a[j];
      g[jp] += h[i][jp] * m;
    }
  return g;
}

}  // namespace

TEST(Spillover, WorkedExample) {
  auto net = dense_network({{1.0, 1.0}, {1.0, 3.0}}, 2);
  auto tr = treatment_of(net.interventions(), net.periods(), {0, 2});
  auto g = spillover_values(net, tr, 1);
  EXPECT_DOUBLE_EQ(g[0], 4.0);
  EXPECT_DOUBLE_EQ(g[1], 0.0);
  auto g0 = spillover_values(net, tr, 0);
  EXPECT_EQ(g0[0], 0.0);
  EXPECT_EQ(g0[1], 0.0);
}

TEST(Spillover, AllTreatedIsSymmetricUnderColumnSwap) {
  std::vector<std::vector<double>> h{{1.0, 2.0}, {0.5, 3.0}, {4.0, 0.0}};
  std::vector<std::vector<double>> s{{2.0, 1.0}, {3.0, 0.5}, {0.0, 4.0}};
  auto a = dense_network(h, 2), b = dense_network(s, 2);
  auto tr = treatment_of(a.interventions(), a.periods(), {2, 2});
  auto ga = spillover_values(a, tr, 1), gb = spillover_values(b, tr, 1);
  EXPECT_DOUBLE_EQ(ga[0], 1.0 * 2.0 + 0.5 * 3.0);
  EXPECT_DOUBLE_EQ(ga[0], gb[1]);
  EXPECT_DOUBLE_EQ(ga[1], gb[0]);
}

TEST(Spillover, MatchesDoubleLoopOracle) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 40; ++rep) {
    const std::size_t N = 2 + rng() % 14, J = 2 + rng() % 14, T = 2 + rng() % 3;
    auto h = random_dense(N, J, T, 0.5, rng);
    auto net = dense_network_tv(h);
    std::vector<int> first(J);
    for (auto& f : first) f = static_cast<int>(rng() % (T + 1));  // 0 = never, 1 is allowed here
    auto tr = treatment_of(net.interventions(), net.periods(), first);
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<int> a(J);
      for (std::size_t j = 0; j < J; ++j) a[j] = tr.treated(j, t);
      auto want = spillover_dense(h[t], a);
      auto got = spillover_values(net, tr, t);
      for (std::size_t j = 0; j < J; ++j) {
        EXPECT_NEAR(got[j], want[j], 1e-12);
        EXPECT_GE(got[j], 0.0);
      }
    }
  }
}

TEST(Spillover, OwnTreatmentIsExcluded) {
  // Plant 1 alone on its zip: treating it cannot expose it.
  auto net = dense_network({{5.0, 0.0}, {0.0, 1.0}}, 2);
  auto tr = treatment_of(net.interventions(), net.periods(), {2, 0});
  auto g = spillover_values(net, tr, 1);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
}

TEST(Spillover, MonotoneInTreatmentAndScaleEquivariant) {
  std::mt19937_64 rng(5);
  auto h = random_dense(10, 6, 1, 0.5, rng);
  auto net = dense_network_tv(h);
  std::vector<int> first(6, 0);
  auto prev = spillover_values(net, treatment_of(net.interventions(), net.periods(), first), 0);
  for (std::size_t j = 0; j < 6; ++j) {
    first[j] = 1;
    auto g = spillover_values(net, treatment_of(net.interventions(), net.periods(), first), 0);
    for (std::size_t q = 0; q < 6; ++q)
      if (q != j) {
        EXPECT_GE(g[q], prev[q] - 1e-12);
      }
    prev = g;
  }
  auto h2 = h;
  for (auto& row : h2[0])
    for (auto& x : row) x *= 3.0;
  auto g1 = spillover_values(net, treatment_of(net.interventions(), net.periods(), first), 0);
  auto g3 = spillover_values(dense_network_tv(h2), treatment_of(net.interventions(), net.periods(), first), 0);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(g3[j], 9.0 * g1[j], 1e-10);
}

TEST(Threshold, NearestRankSemantics) {
  Grid<double> g(4, 1);
  g(0, 0) = 0;
  g(1, 0) = 2;
  g(2, 0) = 5;
  g(3, 0) = 9;
  SpilloverConfig c;
  c.threshold_percentile = 25;
  auto r = threshold_spillover(g, c);
  EXPECT_EQ(r.threshold[0], 0.0);
  EXPECT_EQ(r.exposed(0, 0), 0);
  EXPECT_EQ(r.exposed(1, 0) + r.exposed(2, 0) + r.exposed(3, 0), 3);
  c.threshold_percentile = 100;
  r = threshold_spillover(g, c);
  for (auto e : r.exposed.data()) EXPECT_EQ(e, 0);
}

TEST(Threshold, TiesAreUnexposed) {
  Grid<double> g(5, 2, 3.0);
  for (double p : {0.0, 25.0, 60.0, 100.0}) {
    SpilloverConfig c;
    c.threshold_percentile = p;
    const auto r = threshold_spillover(g, c);
    for (auto e : r.exposed.data()) EXPECT_EQ(e, 0);
  }
}

TEST(Threshold, PerPeriodAndPooled) {
  Grid<double> g(2, 2);
  g(0, 0) = 1;
  g(1, 0) = 2;
  g(0, 1) = 10;
  g(1, 1) = 20;
  SpilloverConfig c;
  c.threshold_percentile = 50;
  auto per = threshold_spillover(g, c);
  EXPECT_EQ(per.threshold[0], 1.0);
  EXPECT_EQ(per.threshold[1], 10.0);
  c.per_period = false;
  auto pooled = threshold_spillover(g, c);
  EXPECT_EQ(pooled.threshold[0], 2.0);
  EXPECT_EQ(pooled.exposed(0, 1), 1);
  EXPECT_EQ(pooled.exposed(1, 0), 0);
}

TEST(Threshold, UntreatedOnlyPopulation) {
  Grid<double> g(4, 2);
  const double vals[4] = {100, 1, 2, 3};
  for (std::size_t j = 0; j < 4; ++j) g(j, 0) = g(j, 1) = vals[j];
  auto tr = treatment_of(named('p', 4), PeriodRange(1, 2), {2, 0, 0, 0});
  SpilloverConfig c;
  c.threshold_percentile = 100;
  c.population = ThresholdPopulation::untreated_only;
  auto r = threshold_spillover(g, c, &tr);
  EXPECT_EQ(r.threshold[0], 100.0);
  EXPECT_EQ(r.threshold[1], 3.0);
  EXPECT_THROW(threshold_spillover(g, c), std::invalid_argument);
}

TEST(Sparsify, AbsoluteCutoff) {
  auto net = dense_network({{0.1, 5.0}, {0.2, 7.0}});
  SpilloverConfig c;
  c.method = SpilloverMethod::network_sparsify;
  c.edge_cutoff = {1.0, false};
  auto s = sparsify_network(net, c);
  ASSERT_EQ(s.layer(0).nnz(), 2u);
  for (const auto& e : s.layer(0).edges()) EXPECT_EQ(e.intervention, 1u);
}

TEST(Sparsify, ZeroCutoffIsIdentity) {
  auto net = dense_network({{0.1, 5.0}, {0.2, 7.0}});
  SpilloverConfig c;
  c.edge_cutoff = {0.0, false};
  EXPECT_EQ(sparsify_network(net, c).layer(0).nnz(), 4u);
}

TEST(Sparsify, PercentileCutoff) {
  auto net = dense_network({{0.1, 5.0}, {0.2, 7.0}});
  SpilloverConfig c;
  c.edge_cutoff = {50.0, true};
  auto s = sparsify_network(net, c);
  EXPECT_EQ(s.layer(0).nnz(), 3u);
  for (const auto& e : s.layer(0).edges()) EXPECT_NE(e.weight, 0.1);
}

TEST(Sparsify, RemovingEverythingIsAnError) {
  auto net = dense_network({{0.1, 5.0}, {0.2, 7.0}});
  SpilloverConfig c;
  c.edge_cutoff = {100.0, false};
  EXPECT_THROW(sparsify_network(net, c), std::invalid_argument);
}

TEST(Sparsify, ExposureMeansPositiveSpilloverOnSparseNetwork) {
  // z1 carries a weak link from p1 to p2; dropping it unexposes p2.
  auto net = dense_network({{0.1, 5.0}, {3.0, 0.0}}, 2);
  auto tr = treatment_of(net.interventions(), net.periods(), {2, 0});
  SpilloverConfig c;
  c.method = SpilloverMethod::network_sparsify;
  c.edge_cutoff = {1.0, false};
  auto ex = compute_exposure(net, tr, c);
  EXPECT_EQ(ex.exposed(1, 1), 0);
  EXPECT_EQ(ex.is_control(1, 1), 1);
  c.edge_cutoff = {0.0, false};
  ex = compute_exposure(net, tr, c);
  EXPECT_EQ(ex.exposed(1, 1), 1);
  EXPECT_EQ(ex.is_control(1, 1), 0);
}

TEST(Controls, Flags) {
  auto tr = treatment_of(named('p', 3), PeriodRange(1, 6), {0, 2, 6});
  Grid<std::uint8_t> exposed(3, 6, 0);
  exposed(0, 5) = 1;
  auto c = flag_controls(tr, exposed);
  EXPECT_EQ(c(0, 0), 1);  // untreated, unexposed
  EXPECT_EQ(c(0, 5), 0);  // exposed
  EXPECT_EQ(c(1, 3), 0);  // treated
  EXPECT_EQ(c(2, 3), 1);  // not yet treated at t = 4
  EXPECT_EQ(c(2, 5), 0);
}
