#pragma once

// Receptor-share weights and the mapping of outcome-unit panels onto
// intervention units: Y_jt = sum_i w_ijt Y_it with w_ijt = h_ijt / sum_k h_ikt.

#include "bnidid/core.hpp"
#include "bnidid/network.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace bnidid {

struct DegenerateUnit {
  std::size_t outcome = 0;  // outcome unit index
  int period = 0;
};

/// Per-period row-normalized copy of the network. Same sparsity pattern as H.
struct NormalizedWeights {
  InterferenceNetwork weights;
  /// Outcome units with an empty neighbourhood; they feed no intervention unit.
  std::vector<DegenerateUnit> degenerate;
};

inline NormalizedWeights normalize_weights(const InterferenceNetwork& network) {
  NormalizedWeights out;
  std::vector<SparseLayer> layers;
  layers.reserve(network.layers().size());
  for (std::size_t l = 0; l < network.layers().size(); ++l) {
    const auto& layer = network.layers()[l];
    std::vector<Edge> edges;
    edges.reserve(layer.nnz());
    for (std::size_t i = 0; i < layer.outcome_count(); ++i) {
      auto row = layer.row(i);
      if (row.empty()) {
        if (network.time_constant()) {
          for (std::size_t t = 0; t < network.periods().size(); ++t)
            out.degenerate.push_back({i, network.periods().label(t)});
        } else {
          out.degenerate.push_back({i, network.periods().label(l)});
        }
        continue;
      }
      double total = 0.0;
      for (const auto& e : row) total += e.weight;
      for (const auto& e : row) edges.push_back({e.outcome, e.intervention, e.weight / total});
    }
    layers.emplace_back(layer.outcome_count(), layer.intervention_count(), std::move(edges));
  }
  out.weights = InterferenceNetwork(network.interventions(), network.outcomes(),
                                    network.periods(), std::move(layers),
                                    network.time_constant());
  return out;
}

namespace detail {

/// Maps network outcome index -> row of `panel`; every network receptor must
/// be present in the panel, and periods must coincide.
inline std::vector<std::size_t> receptor_rows(const NormalizedWeights& w,
                                              const OutcomePanel& panel) {
  if (!(w.weights.periods() == panel.periods()))
    throw std::invalid_argument("projection: network and outcome periods differ");
  const auto& net_ids = *w.weights.outcomes();
  std::vector<std::size_t> rows(net_ids.size());
  for (std::size_t i = 0; i < net_ids.size(); ++i) {
    auto r = panel.ids()->find(net_ids[i]);
    if (!r) throw std::invalid_argument("projection: outcome unit '" + net_ids[i] +
                                        "' in network but not in outcome panel");
    rows[i] = *r;
  }
  return rows;
}

inline void require_connected(const NormalizedWeights& w) {
  for (std::size_t t = 0; t < w.weights.periods().size(); ++t) {
    auto deg = w.weights.layer(t).column_degrees();
    for (std::size_t j = 0; j < deg.size(); ++j)
      if (deg[j] == 0)
        throw std::invalid_argument("projection: intervention unit '" +
                                    (*w.weights.interventions())[j] +
                                    "' has no connected outcome units in period " +
                                    std::to_string(w.weights.periods().label(t)) +
                                    "; its projected outcome is undefined");
  }
}

/// Sums in ascending outcome index per intervention unit.
inline Grid<double> project_grid(const NormalizedWeights& w, const Grid<double>& values,
                                 const std::vector<std::size_t>& rows) {
  const std::size_t J = w.weights.interventions()->size();
  const std::size_t T = w.weights.periods().size();
  Grid<double> out(J, T, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    for (const auto& e : w.weights.layer(t).edges())
      out(e.intervention, t) += e.weight * values(rows[e.outcome], t);
  return out;
}

}  // namespace detail

/// Intervention-level outcomes Y_jt. Throws if any intervention unit has an
/// empty neighbourhood in some period.
inline Grid<double> project_outcomes(const NormalizedWeights& weights,
                                     const OutcomePanel& outcomes) {
  detail::require_connected(weights);
  auto rows = detail::receptor_rows(weights, outcomes);
  return detail::project_grid(weights, outcomes.values(), rows);
}

/// Same mapping applied to each covariate independently.
inline std::vector<Grid<double>> project_covariates(const NormalizedWeights& weights,
                                                    const OutcomePanel& outcomes) {
  detail::require_connected(weights);
  auto rows = detail::receptor_rows(weights, outcomes);
  std::vector<Grid<double>> out;
  out.reserve(outcomes.covariate_count());
  for (std::size_t c = 0; c < outcomes.covariate_count(); ++c)
    out.push_back(detail::project_grid(weights, outcomes.covariate(c), rows));
  return out;
}

}  // namespace bnidid
