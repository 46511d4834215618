// bnidid: command-line front end.
//
//   bnidid simulate  --out DIR [dgp options]
//   bnidid project   --network F --outcomes F --out F
//   bnidid spillover --network F --treatment F --out F
//   bnidid estimate  --projected F --treatment F --out F [--network F]
//   bnidid pipeline  --network F --treatment F --outcomes F --out-dir DIR
//   bnidid coverage  --outer N --out F [dgp options]
//
// Any option may also come from an INI/TOML file given with --config;
// command-line flags take precedence over the file.

#include "bnidid/bnidid.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace bnidid;

struct SpilloverFlags {
  std::string method = "spillover_value";
  double percentile = 25.0;
  bool pooled = false;
  std::string population = "all";
  double edge_cutoff = 0.0;
  bool edge_cutoff_percentile = false;

  SpilloverConfig to_config() const {
    SpilloverConfig c;
    if (method == "spillover_value") {
      c.method = SpilloverMethod::spillover_value;
    } else if (method == "network_sparsify") {
      c.method = SpilloverMethod::network_sparsify;
    } else {
      throw std::invalid_argument("unknown spillover method '" + method + "'");
    }
    c.threshold_percentile = percentile;
    c.per_period = !pooled;
    if (population == "all") {
      c.population = ThresholdPopulation::all_units;
    } else if (population == "untreated") {
      c.population = ThresholdPopulation::untreated_only;
    } else {
      throw std::invalid_argument("unknown threshold population '" + population + "'");
    }
    c.edge_cutoff = {edge_cutoff, edge_cutoff_percentile};
    c.validate();
    return c;
  }
};

void add_spillover_flags(CLI::App* app, SpilloverFlags& f) {
  app->add_option("--method", f.method, "spillover_value | network_sparsify")
      ->check(CLI::IsMember({"spillover_value", "network_sparsify"}));
  app->add_option("--threshold-percentile", f.percentile, "nearest-rank percentile of g")
      ->check(CLI::Range(0.0, 100.0));
  app->add_flag("--pooled", f.pooled, "one threshold over all periods instead of per period");
  app->add_option("--threshold-population", f.population, "all | untreated")
      ->check(CLI::IsMember({"all", "untreated"}));
  app->add_option("--edge-cutoff", f.edge_cutoff, "network_sparsify: drop edges below this");
  app->add_flag("--edge-cutoff-percentile", f.edge_cutoff_percentile,
                "interpret --edge-cutoff as a percentile of positive edges");
}

struct WindowFlags {
  int leads = 5;
  int lags = 8;
};

void add_window_flags(CLI::App* app, WindowFlags& w) {
  app->add_option("--leads", w.leads, "event window lower end L (k >= -L)")->check(CLI::NonNegativeNumber);
  app->add_option("--lags", w.lags, "event window upper end M (k <= M)")->check(CLI::NonNegativeNumber);
}

struct BootstrapFlags {
  std::size_t replicates = 999;
  std::uint64_t seed = 20240101;
  double ci_level = 0.95;
  unsigned threads = 1;

  std::optional<BootstrapConfig> to_config() const {
    if (replicates == 0) return std::nullopt;
    BootstrapConfig c;
    c.n_replicates = replicates;
    c.master_seed = seed;
    c.ci_level = ci_level;
    c.threads = threads;
    c.validate();
    return c;
  }
};

void add_bootstrap_flags(CLI::App* app, BootstrapFlags& b) {
  app->add_option("--replicates", b.replicates, "bootstrap replicates (0 disables CIs)");
  app->add_option("--seed", b.seed, "bootstrap master seed");
  app->add_option("--ci-level", b.ci_level, "confidence level")->check(CLI::Range(0.0, 1.0));
  app->add_option("--threads", b.threads, "bootstrap worker threads");
}

void add_dgp_flags(CLI::App* app, DgpConfig& d) {
  app->add_option("--J", d.J, "intervention units");
  app->add_option("--N", d.N, "outcome units");
  app->add_option("--T", d.T, "periods");
  app->add_option("--first-period", d.first_period, "label of the first period");
  app->add_option("--edge-density", d.network.edge_density, "probability of each cross edge");
  app->add_option("--meanlog", d.network.meanlog, "log-normal edge weight meanlog");
  app->add_option("--sdlog", d.network.sdlog, "log-normal edge weight sdlog");
  app->add_option("--home-boost", d.network.home_boost, "meanlog shift of home edges");
  app->add_flag("--time-varying{false},--time-constant{true}", d.network.time_constant,
                "one network for all periods (default) or a jittered network per period");
  app->add_option("--never-fraction", d.adoption.never_treated_fraction, "never-treated share");
  app->add_option("--earliest", d.adoption.earliest, "earliest adoption period");
  app->add_option("--latest", d.adoption.latest, "latest adoption period (0 = last)");
  app->add_option("--cohort-probabilities", d.adoption.cohort_probabilities,
                  "adoption probabilities over [earliest, latest]");
  app->add_option("--profile", d.effects.profile, "effect profile beta_0 beta_1 ...");
  app->add_option("--spillover-scale", d.effects.spillover_scale,
                  "effect multiplier along non-home edges");
  app->add_option("--heterogeneity-sd", d.effects.heterogeneity_sd, "per-unit effect multiplier sd");
  app->add_option("--noise-sd", d.noise_sd, "outcome noise sd");
  app->add_option("--unit-mean", d.fe.unit_mean, "unit fixed effect mean");
  app->add_option("--unit-sd", d.fe.unit_sd, "unit fixed effect sd");
  app->add_option("--trend-slope", d.fe.trend_slope, "period effect slope");
  app->add_option("--time-sd", d.fe.time_sd, "period effect noise sd");
  app->add_option("--receptor-sd", d.fe.receptor_sd, "outcome-unit heterogeneity sd");
  app->add_option("--covariates", d.n_covariates, "number of simulated covariates");
  app->add_option("--covariate-coef", d.covariate_coef, "covariate coefficient");
  app->add_option("--dgp-seed", d.master_seed, "simulation master seed");
}

std::string join_path(const std::string& dir, const char* name) {
  return (std::filesystem::path(dir) / name).string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Difference-in-differences under bipartite network interference"};
  app.set_config("--config", "", "INI/TOML file with option defaults");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // simulate
  // Defaults leave enough unexposed controls in every period for the pipeline.
  DgpConfig sim_cfg;
  sim_cfg.J = 60;
  sim_cfg.N = 300;
  sim_cfg.T = 10;
  sim_cfg.network.edge_density = 0.005;
  sim_cfg.adoption.never_treated_fraction = 0.4;
  sim_cfg.effects.profile = {-2.0, -4.0, -5.0, -5.0};
  std::string sim_out = "sim";
  auto* simulate = app.add_subcommand("simulate", "write a synthetic dataset with oracle effects");
  add_dgp_flags(simulate, sim_cfg);
  simulate->add_option("--out", sim_out, "output directory");

  // project
  std::string pr_network, pr_outcomes, pr_out = "projected_outcomes.csv";
  std::optional<std::string> pr_covariates;
  bool pr_time_constant = false;
  std::vector<std::string> pr_exclude;
  auto* project = app.add_subcommand("project", "project outcome-unit outcomes onto intervention units");
  project->add_option("--network", pr_network)->required();
  project->add_option("--outcomes", pr_outcomes)->required();
  project->add_option("--covariates", pr_covariates);
  project->add_flag("--time-constant", pr_time_constant, "network file holds one period for all");
  project->add_option("--exclude", pr_exclude, "intervention units to drop");
  project->add_option("--out", pr_out);

  // spillover
  std::string sp_network, sp_treatment, sp_out = "spillover.csv";
  bool sp_time_constant = false;
  std::optional<int> sp_first, sp_last;
  std::vector<std::string> sp_exclude;
  SpilloverFlags sp_flags;
  auto* spill = app.add_subcommand("spillover", "spillover values, exposure and control flags");
  spill->add_option("--network", sp_network)->required();
  spill->add_option("--treatment", sp_treatment)->required();
  spill->add_flag("--time-constant", sp_time_constant);
  spill->add_option("--first-period", sp_first, "period range for a time-constant network");
  spill->add_option("--last-period", sp_last);
  spill->add_option("--exclude", sp_exclude);
  spill->add_option("--out", sp_out);
  add_spillover_flags(spill, sp_flags);

  // estimate
  std::string es_projected, es_treatment, es_out = "event_study.csv";
  std::optional<std::string> es_network;
  bool es_time_constant = false;
  WindowFlags es_window;
  BootstrapFlags es_boot;
  auto* estimate = app.add_subcommand("estimate", "two-stage event study on a projected panel");
  estimate->add_option("--projected", es_projected, "projected.csv from the pipeline")->required();
  estimate->add_option("--treatment", es_treatment)->required();
  estimate->add_option("--network", es_network, "network for outcome-level rescaling");
  estimate->add_flag("--time-constant", es_time_constant);
  estimate->add_option("--out", es_out);
  add_window_flags(estimate, es_window);
  add_bootstrap_flags(estimate, es_boot);

  // pipeline
  PipelineConfig pl;
  SpilloverFlags pl_spill;
  WindowFlags pl_window;
  BootstrapFlags pl_boot;
  auto* pipeline = app.add_subcommand("pipeline", "full run from input files to event-study table");
  pipeline->add_option("--network", pl.network_path)->required();
  pipeline->add_option("--treatment", pl.treatment_path)->required();
  pipeline->add_option("--outcomes", pl.outcomes_path)->required();
  pipeline->add_option("--covariates", pl.covariates_path);
  pipeline->add_flag("--time-constant", pl.network_time_constant);
  pipeline->add_option("--exclude", pl.exclusions, "intervention units to drop");
  pipeline->add_option("--out-dir", pl.output_dir);
  add_spillover_flags(pipeline, pl_spill);
  add_window_flags(pipeline, pl_window);
  add_bootstrap_flags(pipeline, pl_boot);

  // coverage
  DgpConfig cv_cfg = sim_cfg;
  cv_cfg.effects.profile.clear();
  std::size_t cv_outer = 200;
  std::string cv_out = "coverage.csv";
  bool cv_twfe = false;
  SpilloverFlags cv_spill;
  WindowFlags cv_window;
  BootstrapFlags cv_boot;
  cv_boot.replicates = 199;
  auto* coverage = app.add_subcommand("coverage", "Monte-Carlo bias / RMSE / coverage study");
  add_dgp_flags(coverage, cv_cfg);
  coverage->add_option("--outer", cv_outer, "Monte-Carlo replicates")->check(CLI::Range(2, 1000000));
  coverage->add_option("--out", cv_out);
  coverage->add_flag("--twfe", cv_twfe, "also report the dynamic TWFE baseline");
  add_spillover_flags(coverage, cv_spill);
  add_window_flags(coverage, cv_window);
  add_bootstrap_flags(coverage, cv_boot);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      auto sim = run_stage("simulate", [&] { return generate(sim_cfg); });
      run_stage("write", [&] {
        io::write_simulation(sim_out, sim);
        io::write_manifest(join_path(sim_out, "sim_manifest.csv"),
                           {{"version", kVersion},
                            {"dgp_seed", std::to_string(sim_cfg.master_seed)},
                            {"J", std::to_string(sim_cfg.J)},
                            {"N", std::to_string(sim_cfg.N)},
                            {"T", std::to_string(sim_cfg.T)},
                            {"network_time_constant", sim_cfg.network.time_constant ? "1" : "0"}});
      });
      std::cout << "wrote simulated dataset to " << sim_out
                << (sim_cfg.network.time_constant ? " (network is time-constant: pass --time-constant)" : "")
                << "\n";
    } else if (*project) {
      auto outcomes = run_stage("read_outcomes", [&] {
        auto o = io::read_outcomes(pr_outcomes);
        if (pr_covariates) io::merge_covariates(o, *pr_covariates);
        return o;
      });
      auto net = run_stage("read_network", [&] {
        return drop_interventions(io::read_network(pr_network, {pr_time_constant, outcomes.periods()}),
                                  pr_exclude);
      });
      run_stage("projection", [&] {
        if (auto r = check_balanced(outcomes, net.unit_ids()); !r.ok())
          throw std::invalid_argument("outcome panel is not balanced: " + r.summary());
        auto w = normalize_weights(net);
        auto y = project_outcomes(w, outcomes);
        auto x = project_covariates(w, outcomes);
        io::CsvWriter out(pr_out);
        std::vector<std::string> header{"intervention_id", "period", "outcome"};
        for (const auto& n : outcomes.covariate_names()) header.push_back(n);
        out.row(header);
        for (std::size_t j = 0; j < y.rows(); ++j)
          for (std::size_t t = 0; t < y.cols(); ++t) {
            std::vector<std::string> row{(*net.interventions())[j],
                                         std::to_string(net.periods().label(t)),
                                         io::format_double(y(j, t))};
            for (const auto& c : x) row.push_back(io::format_double(c(j, t)));
            out.row(row);
          }
        if (!w.degenerate.empty())
          std::cerr << "warning: " << w.degenerate.size()
                    << " outcome-unit cell(s) have no connected intervention unit and were dropped\n";
      });
    } else if (*spill) {
      std::optional<PeriodRange> range;
      if (sp_first && sp_last) range = PeriodRange(*sp_first, static_cast<std::size_t>(*sp_last - *sp_first + 1));
      auto full = run_stage("read_network", [&] { return io::read_network(sp_network, {sp_time_constant, range}); });
      auto treatment = run_stage("read_treatment", [&] {
        return io::read_treatment(sp_treatment, full.interventions(), full.periods());
      });
      auto net = drop_interventions(full, sp_exclude);
      std::vector<std::size_t> keep;
      for (std::size_t j = 0; j < treatment.units(); ++j)
        if (net.interventions()->contains((*treatment.ids())[j])) keep.push_back(j);
      treatment = treatment.select(keep, net.interventions());
      run_stage("spillover", [&] {
        auto ex = compute_exposure(net, treatment, sp_flags.to_config());
        io::write_spillover(sp_out, *net.interventions(), net.periods(), ex.spillover, ex.exposed,
                            ex.is_control);
      });
    } else if (*estimate) {
      auto projected = run_stage("read_projected", [&] { return io::read_projected(es_projected); });
      auto treatment = run_stage("read_treatment", [&] {
        return io::read_treatment(es_treatment, projected.ids, projected.periods);
      });
      const EventWindow window{es_window.leads, es_window.lags};
      auto result = run_stage("estimate", [&] {
        auto boot = es_boot.to_config();
        return boot ? bootstrap_ci(projected, treatment, window, *boot)
                    : estimate_event_study(projected, treatment, window);
      });
      if (es_network) {
        run_stage("rescale", [&] {
          auto net = io::read_network(*es_network, {es_time_constant, projected.periods});
          std::vector<std::string> drop;
          for (const auto& id : net.interventions()->ids())
            if (!projected.ids->contains(id)) drop.push_back(id);
          net = drop_interventions(net, drop);
          attach_rescaling(result, normalize_weights(net), treatment);
        });
      }
      run_stage("write", [&] {
        io::write_event_study(es_out, result);
        auto rescale_path = std::filesystem::path(es_out).replace_filename(
            std::filesystem::path(es_out).stem().string() + "_rescale.csv");
        if (!result.rescale.empty()) io::write_rescale(rescale_path.string(), result);
      });
    } else if (*pipeline) {
      pl.analysis.spillover = pl_spill.to_config();
      pl.analysis.window = {pl_window.leads, pl_window.lags};
      pl.analysis.bootstrap = pl_boot.to_config();
      auto out = run_pipeline(pl);
      std::cout << "J=" << out.analysis.projected.units()
                << " control_obs=" << out.analysis.result.n_control_obs << " -> "
                << pl.output_dir << "\n";
    } else if (*coverage) {
      CoverageSettings s;
      s.analysis.spillover = cv_spill.to_config();
      s.analysis.window = {cv_window.leads, cv_window.lags};
      s.analysis.bootstrap = cv_boot.to_config();
      s.with_dynamic_twfe = cv_twfe;
      auto rep = run_stage("coverage", [&] { return coverage_study(cv_cfg, s, cv_outer); });
      run_stage("write", [&] { io::write_coverage(cv_out, rep); });
      std::cout << "outer=" << rep.n_outer << " failed=" << rep.n_failed << " -> " << cv_out << "\n";
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: [config] " << e.what() << "\n";
    return 2;
  }
  return 0;
}
