#pragma once

#include "bnidid/bnidid.hpp"

#include <random>
#include <string>
#include <vector>

namespace testing_helpers {

using namespace bnidid;

inline IdIndexPtr named(char prefix, std::size_t n) {
  std::vector<std::string> v;
  for (std::size_t k = 0; k < n; ++k) v.push_back(std::string(1, prefix) + std::to_string(k + 1));
  return make_ids(std::move(v));
}

/// Dense outcome x intervention matrix (zeros absent) shared by every period.
inline InterferenceNetwork dense_network(const std::vector<std::vector<double>>& h,
                                         std::size_t T = 1, int first = 1) {
  const std::size_t N = h.size(), J = h.front().size();
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < J; ++j)
      if (h[i][j] != 0.0)
        edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), h[i][j]});
  std::vector<SparseLayer> layers;
  layers.emplace_back(N, J, std::move(edges));
  return InterferenceNetwork(named('p', J), named('z', N), PeriodRange(first, T), std::move(layers),
                             true);
}

/// Per-period dense matrices.
inline InterferenceNetwork dense_network_tv(const std::vector<std::vector<std::vector<double>>>& h,
                                            int first = 1) {
  const std::size_t N = h.front().size(), J = h.front().front().size();
  std::vector<SparseLayer> layers;
  for (const auto& m : h) {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < J; ++j)
        if (m[i][j] != 0.0)
          edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), m[i][j]});
    layers.emplace_back(N, J, std::move(edges));
  }
  return InterferenceNetwork(named('p', J), named('z', N), PeriodRange(first, h.size()),
                             std::move(layers), false);
}

/// Random dense matrices with roughly `density` nonzeros; every row and
/// column gets at least one edge.
inline std::vector<std::vector<std::vector<double>>> random_dense(std::size_t N, std::size_t J,
                                                                  std::size_t T, double density,
                                                                  std::mt19937_64& rng) {
  std::uniform_real_distribution<double> w(0.1, 3.0);
  std::bernoulli_distribution keep(density);
  std::vector<std::vector<std::vector<double>>> h(T, std::vector<std::vector<double>>(N, std::vector<double>(J, 0.0)));
  for (auto& m : h) {
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < J; ++j)
        if (keep(rng)) m[i][j] = w(rng);
    for (std::size_t i = 0; i < N; ++i) m[i][i % J] = w(rng);
    for (std::size_t j = 0; j < J; ++j) m[j % N][j] = w(rng);
  }
  return h;
}

inline TreatmentPanel treatment_of(const IdIndexPtr& ids, PeriodRange periods,
                                   const std::vector<int>& first) {  // 0 = never
  std::vector<FirstTreated> f;
  for (int p : first) f.push_back(p ? FirstTreated::at(p) : FirstTreated::never());
  return TreatmentPanel(ids, periods, std::move(f));
}

/// Projected panel with every cell a control except treated ones.
inline ProjectedPanel panel_of(const Grid<double>& y, const TreatmentPanel& tr) {
  ProjectedPanel p;
  p.ids = tr.ids();
  p.periods = tr.periods();
  p.outcomes = y;
  p.spillover = Grid<double>(y.rows(), y.cols(), 0.0);
  p.exposed = Grid<std::uint8_t>(y.rows(), y.cols(), 0);
  p.is_control = flag_controls(tr, p.exposed);
  return p;
}

}  // namespace testing_helpers
