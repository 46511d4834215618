#pragma once

// Spillover exposure of each intervention unit to other units' treatment,
// exposure thresholding, network sparsification, and control flags.

#include "bnidid/core.hpp"
#include "bnidid/network.hpp"
#include "bnidid/stats.hpp"

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace bnidid {

enum class SpilloverMethod { spillover_value, network_sparsify };

/// Which units' g values define the threshold.
enum class ThresholdPopulation { all_units, untreated_only };

struct EdgeCutoff {
  double value = 0.0;
  bool is_percentile = false;  // value in [0, 100] when true
};

struct SpilloverConfig {
  SpilloverMethod method = SpilloverMethod::spillover_value;
  double threshold_percentile = 25.0;
  EdgeCutoff edge_cutoff{};
  bool per_period = true;
  ThresholdPopulation population = ThresholdPopulation::all_units;

  void validate() const {
    if (!(threshold_percentile >= 0.0 && threshold_percentile <= 100.0))
      throw std::invalid_argument("threshold percentile must be in [0, 100]");
    if (!(edge_cutoff.value >= 0.0))
      throw std::invalid_argument("edge cutoff must be nonnegative");
    if (edge_cutoff.is_percentile && edge_cutoff.value > 100.0)
      throw std::invalid_argument("edge cutoff percentile must be in [0, 100]");
  }
};

/// g_j' = sum_i h_ij't * m_ij't with m_ij't = sum_{j != j'} h_ijt a_jt, on raw
/// weights. Indexed by intervention unit. `t` is a period index.
inline std::vector<double> spillover_values(const InterferenceNetwork& network,
                                            const TreatmentPanel& treatment, std::size_t t) {
  const auto& layer = network.layer(t);
  const std::size_t J = layer.intervention_count();
  if (treatment.units() != J)
    throw std::invalid_argument("spillover: treatment and network unit counts differ");
  std::vector<double> g(J, 0.0);
  for (std::size_t i = 0; i < layer.outcome_count(); ++i) {
    auto row = layer.row(i);
    double treated_load = 0.0;  // sum_j h_ijt a_jt
    for (const auto& e : row)
      if (treatment.treated(e.intervention, t)) treated_load += e.weight;
    if (treated_load == 0.0) continue;
    for (const auto& e : row) {
      const double others =
          treatment.treated(e.intervention, t) ? treated_load - e.weight : treated_load;
      g[e.intervention] += e.weight * others;
    }
  }
  // Cancellation in treated_load - e.weight can leave tiny negatives.
  for (auto& x : g)
    if (x < 0.0) x = 0.0;
  return g;
}

/// g for every (unit, period index).
inline Grid<double> spillover_grid(const InterferenceNetwork& network,
                                   const TreatmentPanel& treatment) {
  const std::size_t J = network.interventions()->size();
  const std::size_t T = network.periods().size();
  Grid<double> g(J, T);
  for (std::size_t t = 0; t < T; ++t) {
    auto col = spillover_values(network, treatment, t);
    for (std::size_t j = 0; j < J; ++j) g(j, t) = col[j];
  }
  return g;
}

struct ThresholdResult {
  Grid<std::uint8_t> exposed;
  std::vector<double> threshold;  // per period (repeated when pooled)
};

/// exposed = g > tau, tau the nearest-rank percentile of g within each period
/// (or pooled over periods). `treatment` is required for untreated_only.
inline ThresholdResult threshold_spillover(const Grid<double>& g, const SpilloverConfig& config,
                                           const TreatmentPanel* treatment = nullptr) {
  config.validate();
  if (g.size() == 0) throw std::invalid_argument("threshold_spillover: empty spillover map");
  const bool untreated_only = config.population == ThresholdPopulation::untreated_only;
  if (untreated_only && !treatment)
    throw std::invalid_argument("threshold_spillover: untreated_only needs the treatment panel");

  auto eligible = [&](std::size_t j, std::size_t t) {
    return !untreated_only || !treatment->treated(j, t);
  };

  const std::size_t J = g.rows(), T = g.cols();
  ThresholdResult out{Grid<std::uint8_t>(J, T, 0), std::vector<double>(T, 0.0)};

  auto tau_over = [&](std::size_t t0, std::size_t t1) {
    std::vector<double> pool;
    for (std::size_t t = t0; t < t1; ++t)
      for (std::size_t j = 0; j < J; ++j)
        if (eligible(j, t)) pool.push_back(g(j, t));
    // No eligible units: nobody falls below the threshold.
    if (pool.empty()) return -std::numeric_limits<double>::infinity();
    return nearest_rank_percentile(pool, config.threshold_percentile);
  };

  if (config.per_period) {
    for (std::size_t t = 0; t < T; ++t) out.threshold[t] = tau_over(t, t + 1);
  } else {
    std::fill(out.threshold.begin(), out.threshold.end(), tau_over(0, T));
  }
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t t = 0; t < T; ++t) out.exposed(j, t) = g(j, t) > out.threshold[t] ? 1 : 0;
  return out;
}

/// Drops edges with h < cutoff. A percentile cutoff is taken over positive
/// edges per period, or pooled over stored layers when per_period is false.
inline InterferenceNetwork sparsify_network(const InterferenceNetwork& network,
                                            const SpilloverConfig& config) {
  config.validate();
  const auto& layers = network.layers();
  std::vector<double> cutoffs(layers.size(), config.edge_cutoff.value);
  if (config.edge_cutoff.is_percentile) {
    auto weights_of = [](const SparseLayer& l, std::vector<double>& out) {
      for (const auto& e : l.edges()) out.push_back(e.weight);
    };
    if (config.per_period) {
      for (std::size_t l = 0; l < layers.size(); ++l) {
        std::vector<double> w;
        weights_of(layers[l], w);
        if (w.empty()) throw std::invalid_argument("sparsify_network: empty layer");
        cutoffs[l] = nearest_rank_percentile(w, config.edge_cutoff.value);
      }
    } else {
      std::vector<double> w;
      for (const auto& l : layers) weights_of(l, w);
      if (w.empty()) throw std::invalid_argument("sparsify_network: empty network");
      std::fill(cutoffs.begin(), cutoffs.end(), nearest_rank_percentile(w, config.edge_cutoff.value));
    }
  }
  std::vector<SparseLayer> kept;
  kept.reserve(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::vector<Edge> edges;
    for (const auto& e : layers[l].edges())
      if (!(e.weight < cutoffs[l])) edges.push_back(e);
    if (edges.empty()) {
      const int label = network.time_constant() ? network.periods().first()
                                                : network.periods().label(l);
      throw std::invalid_argument("sparsify_network: cutoff removes every edge of period " +
                                  std::to_string(label));
    }
    kept.emplace_back(layers[l].outcome_count(), layers[l].intervention_count(),
                      std::move(edges));
  }
  return InterferenceNetwork(network.interventions(), network.outcomes(), network.periods(),
                             std::move(kept), network.time_constant());
}

/// Observation-level control flag: untreated and unexposed.
inline Grid<std::uint8_t> flag_controls(const TreatmentPanel& treatment,
                                        const Grid<std::uint8_t>& exposed) {
  if (exposed.rows() != treatment.units() || exposed.cols() != treatment.periods().size())
    throw std::invalid_argument("flag_controls: grids cover different (unit, period) sets");
  Grid<std::uint8_t> control(exposed.rows(), exposed.cols(), 0);
  for (std::size_t j = 0; j < exposed.rows(); ++j)
    for (std::size_t t = 0; t < exposed.cols(); ++t)
      control(j, t) = (!treatment.treated(j, t) && !exposed(j, t)) ? 1 : 0;
  return control;
}

/// Everything the exposure stage produces.
struct ExposureResult {
  InterferenceNetwork network;  // network used downstream (sparsified or not)
  Grid<double> spillover;
  Grid<std::uint8_t> exposed;
  std::vector<double> threshold;
  Grid<std::uint8_t> is_control;

  std::vector<std::size_t> controls_per_period() const {
    std::vector<std::size_t> n(is_control.cols(), 0);
    for (std::size_t j = 0; j < is_control.rows(); ++j)
      for (std::size_t t = 0; t < is_control.cols(); ++t) n[t] += is_control(j, t);
    return n;
  }
};

/// spillover_value: threshold g computed on the raw network.
/// network_sparsify: sparsify H, then exposed means g > 0 on the sparse network.
inline ExposureResult compute_exposure(const InterferenceNetwork& network,
                                       const TreatmentPanel& treatment,
                                       const SpilloverConfig& config) {
  config.validate();
  ExposureResult out;
  if (config.method == SpilloverMethod::spillover_value) {
    out.network = network;
    out.spillover = spillover_grid(network, treatment);
    auto thr = threshold_spillover(out.spillover, config, &treatment);
    out.exposed = std::move(thr.exposed);
    out.threshold = std::move(thr.threshold);
  } else {
    out.network = sparsify_network(network, config);
    out.spillover = spillover_grid(out.network, treatment);
    out.exposed = Grid<std::uint8_t>(out.spillover.rows(), out.spillover.cols(), 0);
    for (std::size_t k = 0; k < out.spillover.size(); ++k)
      out.exposed.data()[k] = out.spillover.data()[k] > 0.0 ? 1 : 0;
    out.threshold.assign(out.spillover.cols(), 0.0);
  }
  out.is_control = flag_controls(treatment, out.exposed);
  return out;
}

}  // namespace bnidid
