#pragma once

// In-memory orchestration: exposure -> projection -> two-stage estimation ->
// optional bootstrap -> outcome-level rescaling.

#include "bnidid/core.hpp"
#include "bnidid/estimator.hpp"
#include "bnidid/network.hpp"
#include "bnidid/projection.hpp"
#include "bnidid/spillover.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace bnidid {

/// Error raised by run_analysis / run_pipeline, tagged with the failing stage.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

template <class F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

struct AnalysisSettings {
  SpilloverConfig spillover{};
  EventWindow window{5, 8};
  std::optional<BootstrapConfig> bootstrap{};
  TwoWayOptions solver{};
};

struct AnalysisResult {
  ExposureResult exposure;
  NormalizedWeights weights;
  ProjectedPanel projected;
  EventStudyResult result;
};

inline AnalysisResult run_analysis(const InterferenceNetwork& network,
                                   const TreatmentPanel& treatment, const OutcomePanel& outcomes,
                                   const AnalysisSettings& settings) {
  AnalysisResult out;
  run_stage("validate", [&] {
    if (!(*network.interventions() == *treatment.ids()))
      throw std::invalid_argument("treatment units differ from network intervention units");
    if (!(network.periods() == treatment.periods()))
      throw std::invalid_argument("treatment periods differ from network periods");
    if (auto r = check_absorbing(treatment); !r.ok())
      throw std::invalid_argument("treatment violates absorbing/untreated-at-start: " + r.summary());
    if (auto r = check_balanced(outcomes, network.unit_ids()); !r.ok())
      throw std::invalid_argument("outcome panel is not balanced: " + r.summary());
    settings.window.validate();
    settings.spillover.validate();
  });
  out.exposure = run_stage("spillover",
                           [&] { return compute_exposure(network, treatment, settings.spillover); });
  out.weights = run_stage("projection", [&] { return normalize_weights(out.exposure.network); });
  run_stage("projection", [&] {
    auto& p = out.projected;
    p.ids = network.interventions();
    p.periods = network.periods();
    p.outcomes = project_outcomes(out.weights, outcomes);
    p.covariate_names = outcomes.covariate_names();
    p.covariates = project_covariates(out.weights, outcomes);
    p.spillover = out.exposure.spillover;
    p.exposed = out.exposure.exposed;
    p.is_control = out.exposure.is_control;
  });
  out.result = run_stage("estimate", [&] {
    if (settings.bootstrap)
      return bootstrap_ci(out.projected, treatment, settings.window, *settings.bootstrap,
                          settings.solver);
    return estimate_event_study(out.projected, treatment, settings.window, settings.solver);
  });
  run_stage("rescale", [&] { attach_rescaling(out.result, out.weights, treatment); });
  return out;
}

}  // namespace bnidid
