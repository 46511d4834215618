#pragma once

// Comma-separated long-format readers/writers. Every file has a header row.
// Doubles are written in shortest round-trip form, so write -> read is exact.
// Identifiers may not contain commas; no quoting is supported.

#include "bnidid/core.hpp"
#include "bnidid/estimator.hpp"
#include "bnidid/network.hpp"
#include "bnidid/simulator.hpp"
#include "bnidid/spillover.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace bnidid::io {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s == "NA" || s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
  if (s == "Inf" || s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-Inf" || s == "-inf") return -std::numeric_limits<double>::infinity();
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  long long v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

/// Header-indexed rows of a delimited file.
class CsvTable {
 public:
  struct Row {
    std::size_t line;
    std::vector<std::string> cells;
  };

  static CsvTable read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    CsvTable table;
    table.path_ = path;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
      ++lineno;
      auto view = trim(line);
      if (view.empty()) continue;
      auto cells = split(view);
      if (!have_header) {
        if (lineno == 1 && cells.front().rfind("\xEF\xBB\xBF", 0) == 0)
          cells.front().erase(0, 3);
        table.header_ = std::move(cells);
        have_header = true;
        continue;
      }
      if (cells.size() != table.header_.size())
        throw ParseError(path, lineno, "expected " + std::to_string(table.header_.size()) +
                                           " fields, found " + std::to_string(cells.size()));
      table.rows_.push_back({lineno, std::move(cells)});
    }
    if (!have_header) throw ParseError(path, 0, "missing header row");
    return table;
  }

  const std::string& path() const noexcept { return path_; }
  const std::vector<std::string>& header() const noexcept { return header_; }
  const std::vector<Row>& rows() const noexcept { return rows_; }

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t c = 0; c < header_.size(); ++c)
      if (header_[c] == name) return c;
    return std::nullopt;
  }
  std::size_t require(std::string_view name) const {
    auto c = column(name);
    if (!c) throw ParseError(path_, 1, "missing required column '" + std::string(name) + "'");
    return *c;
  }

  double number(const Row& r, std::size_t c) const {
    auto v = parse_double(r.cells[c]);
    if (!v) throw ParseError(path_, r.line, "column '" + header_[c] + "': not a number: '" +
                                                r.cells[c] + "'");
    return *v;
  }
  int integer(const Row& r, std::size_t c) const {
    auto v = parse_int(r.cells[c]);
    if (!v || *v < std::numeric_limits<int>::min() || *v > std::numeric_limits<int>::max())
      throw ParseError(path_, r.line, "column '" + header_[c] + "': not an integer: '" +
                                          r.cells[c] + "'");
    return static_cast<int>(*v);
  }

 private:
  static std::vector<std::string> split(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      auto pos = s.find(',', start);
      out.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
    return out;
  }

  std::string path_;
  std::vector<std::string> header_;
  std::vector<Row> rows_;
};

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path), path_(path) {
    if (!out_) throw std::runtime_error("cannot write '" + path + "'");
  }
  CsvWriter& row(const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) out_ << (c ? "," : "") << cells[c];
    out_ << '\n';
    return *this;
  }
  ~CsvWriter() { out_.flush(); }

 private:
  std::ofstream out_;
  std::string path_;
};

struct NetworkReadOptions {
  /// The file holds one period that applies to every period of `periods`.
  bool time_constant = false;
  std::optional<PeriodRange> periods;
};

/// period, intervention_id, outcome_id, weight. Ids are sorted; weights must
/// be strictly positive; duplicate edges are errors.
inline InterferenceNetwork read_network(const std::string& path,
                                        const NetworkReadOptions& options = {}) {
  const auto table = CsvTable::read(path);
  const auto cp = table.require("period"), cj = table.require("intervention_id"),
             ci = table.require("outcome_id"), cw = table.require("weight");
  std::set<std::string> src, rec;
  std::set<int> labels;
  std::map<std::tuple<int, std::string, std::string>, std::size_t> seen;
  for (const auto& r : table.rows()) {
    const int p = table.integer(r, cp);
    const double w = table.number(r, cw);
    if (!(w > 0.0) || !std::isfinite(w))
      throw ParseError(path, r.line, "weight must be finite and > 0 (zeros are omitted), got '" +
                                         r.cells[cw] + "'");
    if (r.cells[cj].empty() || r.cells[ci].empty())
      throw ParseError(path, r.line, "empty identifier");
    auto [it, fresh] = seen.emplace(std::make_tuple(p, r.cells[cj], r.cells[ci]), r.line);
    if (!fresh)
      throw ParseError(path, r.line, "duplicate edge (period " + std::to_string(p) + ", " +
                                         r.cells[cj] + ", " + r.cells[ci] +
                                         "), first seen on line " + std::to_string(it->second));
    src.insert(r.cells[cj]);
    rec.insert(r.cells[ci]);
    labels.insert(p);
  }
  if (table.rows().empty()) throw ParseError(path, 1, "network has no edges");
  auto sources = make_ids({src.begin(), src.end()});
  auto receptors = make_ids({rec.begin(), rec.end()});
  const auto file_periods = PeriodRange::from_labels({labels.begin(), labels.end()});

  PeriodRange periods = file_periods;
  if (options.time_constant) {
    if (labels.size() != 1)
      throw ParseError(path, 1, "time-constant network must contain exactly one period");
    if (options.periods) periods = *options.periods;
  } else if (options.periods && !(*options.periods == file_periods)) {
    throw ParseError(path, 1, "network periods [" + std::to_string(file_periods.first()) + ", " +
                                  std::to_string(file_periods.last()) +
                                  "] differ from outcome periods");
  }
  std::vector<std::vector<Edge>> edges(options.time_constant ? 1 : periods.size());
  for (const auto& r : table.rows()) {
    const std::size_t l = options.time_constant ? 0 : file_periods.at(table.integer(r, cp));
    edges[l].push_back({static_cast<std::uint32_t>(*receptors->find(r.cells[ci])),
                        static_cast<std::uint32_t>(*sources->find(r.cells[cj])),
                        table.number(r, cw)});
  }
  std::vector<SparseLayer> layers;
  for (auto& e : edges) layers.emplace_back(receptors->size(), sources->size(), std::move(e));
  return InterferenceNetwork(sources, receptors, periods, std::move(layers), options.time_constant);
}

inline void write_network(const std::string& path, const InterferenceNetwork& net) {
  CsvWriter w(path);
  w.row({"period", "intervention_id", "outcome_id", "weight"});
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const int label = net.periods().label(l);
    for (const auto& e : net.layers()[l].edges())
      w.row({std::to_string(label), (*net.interventions())[e.intervention],
             (*net.outcomes())[e.outcome], format_double(e.weight)});
  }
}

/// intervention_id, first_treated_period (integer or NEVER). Every unit of
/// `units` must appear exactly once; unknown ids are errors.
inline TreatmentPanel read_treatment(const std::string& path, const IdIndexPtr& units,
                                     const PeriodRange& periods) {
  const auto table = CsvTable::read(path);
  const auto cj = table.require("intervention_id"), cf = table.require("first_treated_period");
  std::vector<std::optional<FirstTreated>> first(units->size());
  for (const auto& r : table.rows()) {
    auto j = units->find(r.cells[cj]);
    if (!j)
      throw ParseError(path, r.line, "intervention unit '" + r.cells[cj] + "' is not in the network");
    if (first[*j]) throw ParseError(path, r.line, "duplicate unit '" + r.cells[cj] + "'");
    std::string f = r.cells[cf];
    std::transform(f.begin(), f.end(), f.begin(), [](unsigned char c) { return std::toupper(c); });
    if (f == "NEVER") {
      first[*j] = FirstTreated::never();
      continue;
    }
    const int p = table.integer(r, cf);
    if (p <= periods.first())
      throw ParseError(path, r.line, "unit '" + r.cells[cj] + "' first treated in period " +
                                         std::to_string(p) +
                                         "; every unit must be untreated in the first period " +
                                         std::to_string(periods.first()) +
                                         " (absorbing treatment, untreated at start)");
    if (p > periods.last())
      throw ParseError(path, r.line, "unit '" + r.cells[cj] + "' first treated after the last period " +
                                         std::to_string(periods.last()) + "; use NEVER");
    first[*j] = FirstTreated::at(p);
  }
  std::vector<FirstTreated> out;
  out.reserve(first.size());
  for (std::size_t j = 0; j < first.size(); ++j) {
    if (!first[j])
      throw ParseError(path, 0, "intervention unit '" + (*units)[j] + "' missing from treatment file");
    out.push_back(*first[j]);
  }
  return TreatmentPanel(units, periods, std::move(out));
}

inline void write_treatment(const std::string& path, const TreatmentPanel& treatment) {
  CsvWriter w(path);
  w.row({"intervention_id", "first_treated_period"});
  for (std::size_t j = 0; j < treatment.units(); ++j) {
    auto f = treatment.first_treated(j);
    w.row({(*treatment.ids())[j], f.is_never() ? "NEVER" : std::to_string(f.period())});
  }
}

/// outcome_id, period, value[, covariate columns...]. Cells missing from the
/// file stay absent; run check_balanced before estimation.
inline OutcomePanel read_outcomes(const std::string& path) {
  const auto table = CsvTable::read(path);
  const auto ci = table.require("outcome_id"), cp = table.require("period"),
             cv = table.require("value");
  std::vector<std::size_t> cov_cols;
  for (std::size_t c = 0; c < table.header().size(); ++c)
    if (c != ci && c != cp && c != cv) cov_cols.push_back(c);
  std::set<std::string> ids;
  std::set<int> labels;
  for (const auto& r : table.rows()) {
    ids.insert(r.cells[ci]);
    labels.insert(table.integer(r, cp));
  }
  if (table.rows().empty()) throw ParseError(path, 1, "outcome file has no rows");
  auto index = make_ids({ids.begin(), ids.end()});
  const auto periods = PeriodRange::from_labels({labels.begin(), labels.end()});
  OutcomePanel panel(index, periods);
  for (auto c : cov_cols) panel.add_covariate(table.header()[c]);
  for (const auto& r : table.rows()) {
    const auto i = *index->find(r.cells[ci]);
    const auto t = periods.at(table.integer(r, cp));
    if (panel.present(i, t))
      throw ParseError(path, r.line, "duplicate cell (" + r.cells[ci] + ", " + r.cells[cp] + ")");
    panel.set(i, t, table.number(r, cv));
    for (std::size_t k = 0; k < cov_cols.size(); ++k)
      panel.set_covariate(k, i, t, table.number(r, cov_cols[k]));
  }
  return panel;
}

/// Merges an outcome_id, period, <covariates...> file into `panel`.
inline void merge_covariates(OutcomePanel& panel, const std::string& path) {
  const auto table = CsvTable::read(path);
  const auto ci = table.require("outcome_id"), cp = table.require("period");
  std::vector<std::pair<std::size_t, std::size_t>> cols;  // file column, panel covariate
  for (std::size_t c = 0; c < table.header().size(); ++c)
    if (c != ci && c != cp) cols.emplace_back(c, panel.add_covariate(table.header()[c]));
  for (const auto& r : table.rows()) {
    auto i = panel.ids()->find(r.cells[ci]);
    if (!i) throw ParseError(path, r.line, "outcome unit '" + r.cells[ci] + "' not in outcome file");
    auto t = panel.periods().index(table.integer(r, cp));
    if (!t) throw ParseError(path, r.line, "period " + r.cells[cp] + " not in outcome file");
    for (auto [fc, pc] : cols) panel.set_covariate(pc, *i, *t, table.number(r, fc));
  }
}

inline void write_outcomes(const std::string& path, const OutcomePanel& panel) {
  CsvWriter w(path);
  std::vector<std::string> header{"outcome_id", "period", "value"};
  for (const auto& n : panel.covariate_names()) header.push_back(n);
  w.row(header);
  for (std::size_t i = 0; i < panel.units(); ++i)
    for (std::size_t t = 0; t < panel.periods().size(); ++t) {
      if (!panel.present(i, t)) continue;
      std::vector<std::string> row{(*panel.ids())[i], std::to_string(panel.periods().label(t)),
                                   format_double(panel.value(i, t))};
      for (std::size_t c = 0; c < panel.covariate_count(); ++c)
        row.push_back(format_double(panel.covariate(c)(i, t)));
      w.row(row);
    }
}

/// intervention_id, period, outcome, <covariates...>, spillover, exposed, is_control
inline void write_projected(const std::string& path, const ProjectedPanel& p) {
  CsvWriter w(path);
  std::vector<std::string> header{"intervention_id", "period", "outcome"};
  for (const auto& n : p.covariate_names) header.push_back(n);
  header.insert(header.end(), {"spillover", "exposed", "is_control"});
  w.row(header);
  for (std::size_t j = 0; j < p.units(); ++j)
    for (std::size_t t = 0; t < p.periods.size(); ++t) {
      std::vector<std::string> row{(*p.ids)[j], std::to_string(p.periods.label(t)),
                                   format_double(p.outcomes(j, t))};
      for (const auto& c : p.covariates) row.push_back(format_double(c(j, t)));
      row.push_back(format_double(p.spillover(j, t)));
      row.push_back(p.exposed(j, t) ? "1" : "0");
      row.push_back(p.is_control(j, t) ? "1" : "0");
      w.row(row);
    }
}

inline ProjectedPanel read_projected(const std::string& path) {
  const auto table = CsvTable::read(path);
  const auto cj = table.require("intervention_id"), cp = table.require("period"),
             cy = table.require("outcome"), cg = table.require("spillover"),
             ce = table.require("exposed"), cc = table.require("is_control");
  std::vector<std::size_t> cov_cols;
  for (std::size_t c = cy + 1; c < cg; ++c) cov_cols.push_back(c);
  std::set<std::string> ids;
  std::set<int> labels;
  for (const auto& r : table.rows()) {
    ids.insert(r.cells[cj]);
    labels.insert(table.integer(r, cp));
  }
  if (table.rows().empty()) throw ParseError(path, 1, "projected panel has no rows");
  ProjectedPanel p;
  p.ids = make_ids({ids.begin(), ids.end()});
  p.periods = PeriodRange::from_labels({labels.begin(), labels.end()});
  const std::size_t J = p.ids->size(), T = p.periods.size();
  p.outcomes = Grid<double>(J, T, kNaN);
  p.spillover = Grid<double>(J, T, 0.0);
  p.exposed = Grid<std::uint8_t>(J, T, 0);
  p.is_control = Grid<std::uint8_t>(J, T, 0);
  for (auto c : cov_cols) {
    p.covariate_names.push_back(table.header()[c]);
    p.covariates.emplace_back(J, T, kNaN);
  }
  Grid<std::uint8_t> seen(J, T, 0);
  auto flag = [&](const CsvTable::Row& r, std::size_t c) -> std::uint8_t {
    const int v = table.integer(r, c);
    if (v != 0 && v != 1) throw ParseError(path, r.line, "flag column '" + table.header()[c] + "' must be 0 or 1");
    return static_cast<std::uint8_t>(v);
  };
  for (const auto& r : table.rows()) {
    const auto j = *p.ids->find(r.cells[cj]);
    const auto t = p.periods.at(table.integer(r, cp));
    if (seen(j, t)) throw ParseError(path, r.line, "duplicate cell");
    seen(j, t) = 1;
    p.outcomes(j, t) = table.number(r, cy);
    for (std::size_t k = 0; k < cov_cols.size(); ++k) p.covariates[k](j, t) = table.number(r, cov_cols[k]);
    p.spillover(j, t) = table.number(r, cg);
    p.exposed(j, t) = flag(r, ce);
    p.is_control(j, t) = flag(r, cc);
  }
  for (std::size_t j = 0; j < J; ++j)
    for (std::size_t t = 0; t < T; ++t)
      if (!seen(j, t))
        throw ParseError(path, 0, "projected panel is missing cell (" + (*p.ids)[j] + ", " +
                                      std::to_string(p.periods.label(t)) + ")");
  return p;
}

/// period, intervention_id, g, exposed, is_control
inline void write_spillover(const std::string& path, const IdIndex& ids, const PeriodRange& periods,
                            const Grid<double>& g, const Grid<std::uint8_t>& exposed,
                            const Grid<std::uint8_t>& is_control) {
  CsvWriter w(path);
  w.row({"period", "intervention_id", "g", "exposed", "is_control"});
  for (std::size_t t = 0; t < periods.size(); ++t)
    for (std::size_t j = 0; j < ids.size(); ++j)
      w.row({std::to_string(periods.label(t)), ids[j], format_double(g(j, t)),
             exposed(j, t) ? "1" : "0", is_control(j, t) ? "1" : "0"});
}

inline void write_spillover(const std::string& path, const ProjectedPanel& p) {
  write_spillover(path, *p.ids, p.periods, p.spillover, p.exposed, p.is_control);
}

/// k, estimate, se, ci_low, ci_high, n_obs, rescaled_estimate (NA when absent)
inline void write_event_study(const std::string& path, const EventStudyResult& r) {
  CsvWriter w(path);
  w.row({"k", "estimate", "se", "ci_low", "ci_high", "n_obs", "rescaled_estimate"});
  for (const auto& c : r.coefficients) {
    auto rs = r.rescale.find(c.k);
    w.row({std::to_string(c.k), c.estimate ? format_double(*c.estimate) : "NA",
           format_double(c.std_error), format_double(c.ci_low), format_double(c.ci_high),
           std::to_string(c.n_obs),
           rs != r.rescale.end() ? format_double(rs->second.outcome_level_estimate) : "NA"});
  }
}

/// Reads the table written by write_event_study (rescale factors are not
/// part of that table; rescaled estimates land in `rescale[k].outcome_level_estimate`).
inline EventStudyResult read_event_study(const std::string& path) {
  const auto table = CsvTable::read(path);
  const auto ck = table.require("k"), ce = table.require("estimate"), cs = table.require("se"),
             cl = table.require("ci_low"), ch = table.require("ci_high"),
             cn = table.require("n_obs"), cr = table.require("rescaled_estimate");
  EventStudyResult r;
  std::vector<int> ks;
  for (const auto& row : table.rows()) ks.push_back(table.integer(row, ck));
  if (ks.empty()) throw ParseError(path, 1, "empty event-study table");
  r.window = EventWindow{-ks.front(), ks.back()};
  r.window.validate();
  if (ks.size() != r.window.size()) throw ParseError(path, 1, "event times are not consecutive");
  for (const auto& row : table.rows()) {
    EventCoefficient c;
    c.k = table.integer(row, ck);
    const double est = table.number(row, ce);
    if (!std::isnan(est)) c.estimate = est;
    c.std_error = table.number(row, cs);
    c.ci_low = table.number(row, cl);
    c.ci_high = table.number(row, ch);
    c.n_obs = static_cast<std::size_t>(table.integer(row, cn));
    const double rs = table.number(row, cr);
    if (!std::isnan(rs)) r.rescale[c.k].outcome_level_estimate = rs;
    r.coefficients.push_back(c);
  }
  return r;
}

/// k, n_treated_obs, sum_ell, factor, outcome_level_estimate, ci_low, ci_high
inline void write_rescale(const std::string& path, const EventStudyResult& r) {
  CsvWriter w(path);
  w.row({"k", "n_treated_obs", "sum_ell", "factor", "outcome_level_estimate", "ci_low", "ci_high"});
  for (const auto& [k, e] : r.rescale)
    w.row({std::to_string(k), std::to_string(e.n_treated_obs), format_double(e.sum_ell),
           format_double(e.factor), format_double(e.outcome_level_estimate),
           format_double(e.ci_low), format_double(e.ci_high)});
}

inline void write_oracle(const std::string& path, const std::map<int, OracleCell>& oracle) {
  CsvWriter w(path);
  w.row({"k", "oracle_ttt", "n_obs"});
  for (const auto& [k, c] : oracle)
    w.row({std::to_string(k), format_double(c.ttt), std::to_string(c.n_obs)});
}

inline void write_coverage(const std::string& path, const CoverageReport& rep) {
  CsvWriter w(path);
  w.row({"k", "n_ok", "mean_oracle", "mean_estimate", "mean_bias", "mc_se", "rmse", "coverage",
         "mean_dynamic_twfe", "dynamic_twfe_bias"});
  for (const auto& r : rep.rows)
    w.row({std::to_string(r.k), std::to_string(r.n_ok), format_double(r.mean_oracle),
           format_double(r.mean_estimate), format_double(r.mean_bias), format_double(r.mc_se),
           format_double(r.rmse), format_double(r.coverage), format_double(r.mean_twfe),
           format_double(r.twfe_mean_bias)});
}

/// key, value pairs in insertion order.
inline void write_manifest(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>& entries) {
  CsvWriter w(path);
  w.row({"key", "value"});
  for (const auto& [k, v] : entries) w.row({k, v});
}

inline std::vector<std::pair<std::string, std::string>> read_manifest(const std::string& path) {
  const auto table = CsvTable::read(path);
  const auto ck = table.require("key"), cv = table.require("value");
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& r : table.rows()) out.emplace_back(r.cells[ck], r.cells[cv]);
  return out;
}

/// Writes a simulated dataset in the formats the readers accept:
/// network.csv, treatment.csv, outcomes.csv, outcomes_counterfactual.csv, oracle.csv.
inline void write_simulation(const std::filesystem::path& dir, const SimulatedData& sim) {
  std::filesystem::create_directories(dir);
  write_network((dir / "network.csv").string(), sim.network);
  write_treatment((dir / "treatment.csv").string(), sim.treatment);
  write_outcomes((dir / "outcomes.csv").string(), sim.factual);
  write_outcomes((dir / "outcomes_counterfactual.csv").string(), sim.counterfactual);
  write_oracle((dir / "oracle.csv").string(), sim.oracle);
}

}  // namespace bnidid::io
