#pragma once

// Time-indexed sparse bipartite weight matrices linking intervention units
// (sources) to outcome units (receptors).

#include "bnidid/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bnidid {

struct Edge {
  std::uint32_t outcome = 0;       // row: outcome unit index
  std::uint32_t intervention = 0;  // column: intervention unit index
  double weight = 0.0;
};

/// One period's matrix in compressed-row form, rows = outcome units, entries
/// within a row sorted by intervention index. Only strictly positive weights
/// are stored.
class SparseLayer {
 public:
  SparseLayer() = default;

  SparseLayer(std::size_t n_outcomes, std::size_t n_interventions, std::vector<Edge> edges)
      : n_outcomes_(n_outcomes), n_interventions_(n_interventions), edges_(std::move(edges)) {
    std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
      return a.outcome != b.outcome ? a.outcome < b.outcome : a.intervention < b.intervention;
    });
    row_start_.assign(n_outcomes_ + 1, 0);
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      const Edge& x = edges_[e];
      if (x.outcome >= n_outcomes_ || x.intervention >= n_interventions_)
        throw std::out_of_range("edge index outside network dimensions");
      if (!(x.weight > 0.0) || !std::isfinite(x.weight))
        throw std::invalid_argument("edge weights must be finite and strictly positive");
      if (e > 0 && edges_[e - 1].outcome == x.outcome &&
          edges_[e - 1].intervention == x.intervention)
        throw std::invalid_argument("duplicate edge (outcome " + std::to_string(x.outcome) +
                                    ", intervention " + std::to_string(x.intervention) + ")");
      ++row_start_[x.outcome + 1];
    }
    for (std::size_t i = 0; i < n_outcomes_; ++i) row_start_[i + 1] += row_start_[i];
  }

  std::size_t outcome_count() const noexcept { return n_outcomes_; }
  std::size_t intervention_count() const noexcept { return n_interventions_; }
  std::size_t nnz() const noexcept { return edges_.size(); }

  std::span<const Edge> edges() const noexcept { return edges_; }

  /// M_it: intervention units with nonzero weight on outcome unit i.
  std::span<const Edge> row(std::size_t i) const {
    return std::span<const Edge>(edges_).subspan(row_start_[i], row_start_[i + 1] - row_start_[i]);
  }

  /// |N_jt| for every intervention unit.
  std::vector<std::size_t> column_degrees() const {
    std::vector<std::size_t> deg(n_interventions_, 0);
    for (const auto& e : edges_) ++deg[e.intervention];
    return deg;
  }

  /// Column sums, accumulated in ascending outcome order.
  std::vector<double> column_sums() const {
    std::vector<double> s(n_interventions_, 0.0);
    for (const auto& e : edges_) s[e.intervention] += e.weight;
    return s;
  }

  /// N_jt with weights: (outcome index, weight) pairs in ascending outcome order.
  std::vector<std::vector<std::pair<std::uint32_t, double>>> columns() const {
    std::vector<std::vector<std::pair<std::uint32_t, double>>> cols(n_interventions_);
    for (const auto& e : edges_) cols[e.intervention].emplace_back(e.outcome, e.weight);
    return cols;
  }

 private:
  std::size_t n_outcomes_ = 0;
  std::size_t n_interventions_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> row_start_;
};

/// H_t for every period, or one matrix shared by all periods.
class InterferenceNetwork {
 public:
  InterferenceNetwork() = default;

  InterferenceNetwork(IdIndexPtr interventions, IdIndexPtr outcomes, PeriodRange periods,
                      std::vector<SparseLayer> layers, bool time_constant)
      : interventions_(std::move(interventions)),
        outcomes_(std::move(outcomes)),
        periods_(periods),
        layers_(std::move(layers)),
        time_constant_(time_constant) {
    if (!interventions_ || !outcomes_) throw std::invalid_argument("network: null id index");
    const std::size_t want = time_constant_ ? 1 : periods_.size();
    if (layers_.size() != want)
      throw std::invalid_argument("network: expected " + std::to_string(want) +
                                  " layer(s), got " + std::to_string(layers_.size()));
    for (const auto& l : layers_)
      if (l.outcome_count() != outcomes_->size() ||
          l.intervention_count() != interventions_->size())
        throw std::invalid_argument("network: layer dimensions inconsistent with unit ids");
  }

  const IdIndexPtr& interventions() const noexcept { return interventions_; }
  const IdIndexPtr& outcomes() const noexcept { return outcomes_; }
  const PeriodRange& periods() const noexcept { return periods_; }
  bool time_constant() const noexcept { return time_constant_; }
  UnitIds unit_ids() const { return {interventions_, outcomes_, periods_}; }

  /// H_t for period index t.
  const SparseLayer& layer(std::size_t t) const {
    if (t >= periods_.size()) throw std::out_of_range("network: period index out of range");
    return time_constant_ ? layers_.front() : layers_[t];
  }

  /// Stored layers (one when time-constant).
  const std::vector<SparseLayer>& layers() const noexcept { return layers_; }

 private:
  IdIndexPtr interventions_;
  IdIndexPtr outcomes_;
  PeriodRange periods_;
  std::vector<SparseLayer> layers_;
  bool time_constant_ = false;
};

/// Network restricted to intervention units not in `excluded` (ids absent
/// from the network are ignored by the caller's choice; see pipeline).
inline InterferenceNetwork drop_interventions(const InterferenceNetwork& net,
                                              const std::vector<std::string>& excluded) {
  std::vector<std::int64_t> remap(net.interventions()->size(), -1);
  std::vector<std::string> kept;
  for (std::size_t j = 0; j < net.interventions()->size(); ++j) {
    const auto& id = (*net.interventions())[j];
    if (std::find(excluded.begin(), excluded.end(), id) != excluded.end()) continue;
    remap[j] = static_cast<std::int64_t>(kept.size());
    kept.push_back(id);
  }
  std::vector<SparseLayer> layers;
  for (const auto& l : net.layers()) {
    std::vector<Edge> edges;
    for (const auto& e : l.edges())
      if (remap[e.intervention] >= 0)
        edges.push_back({e.outcome, static_cast<std::uint32_t>(remap[e.intervention]), e.weight});
    layers.emplace_back(l.outcome_count(), kept.size(), std::move(edges));
  }
  return InterferenceNetwork(make_ids(std::move(kept)), net.outcomes(), net.periods(),
                             std::move(layers), net.time_constant());
}

}  // namespace bnidid
