#pragma once

// File-driven end-to-end run: read inputs, run the analysis, write the
// projected panel, spillover table, event-study table, rescaling table and a
// run manifest into the output directory.

#include "bnidid/analysis.hpp"
#include "bnidid/io.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace bnidid {

inline constexpr const char* kVersion = "0.3.0";

struct PipelineConfig {
  std::string network_path;
  std::string treatment_path;
  std::string outcomes_path;
  std::optional<std::string> covariates_path;
  bool network_time_constant = false;
  AnalysisSettings analysis{};
  std::string output_dir = "out";
  std::vector<std::string> exclusions;
};

struct PipelineInputs {
  InterferenceNetwork network;
  TreatmentPanel treatment;
  OutcomePanel outcomes;
};

/// Reads and filters the inputs named in `config`.
inline PipelineInputs load_inputs(const PipelineConfig& config) {
  PipelineInputs in;
  in.outcomes = run_stage("read_outcomes", [&] {
    auto o = io::read_outcomes(config.outcomes_path);
    if (config.covariates_path) io::merge_covariates(o, *config.covariates_path);
    return o;
  });
  auto full = run_stage("read_network", [&] {
    return io::read_network(config.network_path,
                            {config.network_time_constant, in.outcomes.periods()});
  });
  auto treatment = run_stage("read_treatment", [&] {
    return io::read_treatment(config.treatment_path, full.interventions(), full.periods());
  });
  run_stage("exclude", [&] {
    for (const auto& id : config.exclusions)
      if (!full.interventions()->contains(id))
        throw std::invalid_argument("excluded unit '" + id + "' is not in the network");
    in.network = drop_interventions(full, config.exclusions);
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < treatment.units(); ++j)
      if (in.network.interventions()->contains((*treatment.ids())[j])) keep.push_back(j);
    in.treatment = treatment.select(keep, in.network.interventions());
  });
  return in;
}

namespace detail {

inline std::string method_name(SpilloverMethod m) {
  return m == SpilloverMethod::spillover_value ? "spillover_value" : "network_sparsify";
}

inline std::vector<std::pair<std::string, std::string>> manifest_entries(
    const PipelineConfig& config, const PipelineInputs& in, const AnalysisResult& out) {
  using io::format_double;
  const auto& a = config.analysis;
  std::vector<std::pair<std::string, std::string>> m;
  m.emplace_back("version", kVersion);
  m.emplace_back("network", config.network_path);
  m.emplace_back("treatment", config.treatment_path);
  m.emplace_back("outcomes", config.outcomes_path);
  m.emplace_back("covariates", config.covariates_path.value_or(""));
  m.emplace_back("network_time_constant", config.network_time_constant ? "1" : "0");
  m.emplace_back("spillover_method", method_name(a.spillover.method));
  m.emplace_back("threshold_percentile", format_double(a.spillover.threshold_percentile));
  m.emplace_back("threshold_per_period", a.spillover.per_period ? "1" : "0");
  m.emplace_back("threshold_population", a.spillover.population == ThresholdPopulation::all_units
                                             ? "all"
                                             : "untreated");
  m.emplace_back("edge_cutoff", format_double(a.spillover.edge_cutoff.value));
  m.emplace_back("edge_cutoff_is_percentile", a.spillover.edge_cutoff.is_percentile ? "1" : "0");
  m.emplace_back("window_leads", std::to_string(a.window.leads));
  m.emplace_back("window_lags", std::to_string(a.window.lags));
  if (a.bootstrap) {
    m.emplace_back("bootstrap_replicates", std::to_string(a.bootstrap->n_replicates));
    m.emplace_back("master_seed", std::to_string(a.bootstrap->master_seed));
    m.emplace_back("ci_level", format_double(a.bootstrap->ci_level));
  } else {
    m.emplace_back("bootstrap_replicates", "0");
  }
  std::string excl;
  for (const auto& e : config.exclusions) excl += (excl.empty() ? "" : ";") + e;
  m.emplace_back("exclusions", excl);
  m.emplace_back("J", std::to_string(in.network.interventions()->size()));
  m.emplace_back("N", std::to_string(in.network.outcomes()->size()));
  m.emplace_back("T", std::to_string(in.network.periods().size()));
  m.emplace_back("first_period", std::to_string(in.network.periods().first()));
  m.emplace_back("last_period", std::to_string(in.network.periods().last()));
  m.emplace_back("degenerate_outcome_cells", std::to_string(out.weights.degenerate.size()));
  m.emplace_back("n_control_obs", std::to_string(out.result.n_control_obs));
  const auto per = out.exposure.controls_per_period();
  for (std::size_t t = 0; t < per.size(); ++t) {
    const auto label = std::to_string(in.network.periods().label(t));
    m.emplace_back("controls_" + label, std::to_string(per[t]));
    m.emplace_back("threshold_" + label, format_double(out.exposure.threshold[t]));
  }
  m.emplace_back("bootstrap_used", std::to_string(out.result.bootstrap_used));
  m.emplace_back("bootstrap_discarded", std::to_string(out.result.bootstrap_discarded));
  m.emplace_back("pretrend_n", std::to_string(out.result.diagnostics.n_pre));
  m.emplace_back("pretrend_mean", format_double(out.result.diagnostics.mean_estimate));
  m.emplace_back("pretrend_max_abs", format_double(out.result.diagnostics.max_abs_estimate));
  m.emplace_back("pretrend_ci_excluding_zero",
                 std::to_string(out.result.diagnostics.n_ci_excluding_zero));
  return m;
}

}  // namespace detail

struct PipelineOutput {
  AnalysisResult analysis;
  std::vector<std::pair<std::string, std::string>> manifest;
};

inline PipelineOutput run_pipeline(const PipelineConfig& config) {
  const auto in = load_inputs(config);
  PipelineOutput out;
  out.analysis = run_analysis(in.network, in.treatment, in.outcomes, config.analysis);
  out.manifest = detail::manifest_entries(config, in, out.analysis);
  run_stage("write", [&] {
    const std::filesystem::path dir(config.output_dir);
    std::filesystem::create_directories(dir);
    io::write_projected((dir / "projected.csv").string(), out.analysis.projected);
    io::write_spillover((dir / "spillover.csv").string(), out.analysis.projected);
    io::write_event_study((dir / "event_study.csv").string(), out.analysis.result);
    io::write_rescale((dir / "rescale.csv").string(), out.analysis.result);
    io::write_manifest((dir / "manifest.csv").string(), out.manifest);
  });
  return out;
}

}  // namespace bnidid
