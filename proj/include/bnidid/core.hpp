#pragma once

// Domain types shared by every stage: identifier sets, the period axis,
// dense (unit x period) grids, treatment timing and outcome panels, plus the
// validation checks run on raw inputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace bnidid {

/// Ordered set of unique string identifiers with O(1) lookup by name.
class IdIndex {
 public:
  IdIndex() = default;

  explicit IdIndex(std::vector<std::string> ids) : ids_(std::move(ids)) {
    lookup_.reserve(ids_.size());
    for (std::size_t k = 0; k < ids_.size(); ++k) {
      if (!lookup_.emplace(ids_[k], k).second)
        throw std::invalid_argument("duplicate identifier '" + ids_[k] + "'");
    }
  }

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  const std::string& operator[](std::size_t k) const { return ids_[k]; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  std::optional<std::size_t> find(std::string_view id) const {
    auto it = lookup_.find(std::string(id));
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(std::string_view id) const { return find(id).has_value(); }

  friend bool operator==(const IdIndex& a, const IdIndex& b) {
    return a.ids_ == b.ids_;
  }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

using IdIndexPtr = std::shared_ptr<const IdIndex>;

inline IdIndexPtr make_ids(std::vector<std::string> ids) {
  return std::make_shared<const IdIndex>(std::move(ids));
}

/// Consecutive integer period labels first, first+1, ..., first+count-1.
/// Calendar labels (e.g. 2003) are allowed; only unit spacing matters.
class PeriodRange {
 public:
  PeriodRange() = default;
  PeriodRange(int first, std::size_t count) : first_(first), count_(count) {
    if (count == 0) throw std::invalid_argument("period range must be nonempty");
  }

  /// Validates that `labels` are strictly increasing with no gaps.
  static PeriodRange from_labels(const std::vector<int>& labels) {
    if (labels.empty()) throw std::invalid_argument("no periods given");
    for (std::size_t k = 1; k < labels.size(); ++k) {
      if (labels[k] != labels[k - 1] + 1)
        throw std::invalid_argument("periods must be consecutive integers; gap or disorder at " +
                                    std::to_string(labels[k - 1]) + " -> " +
                                    std::to_string(labels[k]));
    }
    return PeriodRange(labels.front(), labels.size());
  }

  int first() const noexcept { return first_; }
  int last() const noexcept { return first_ + static_cast<int>(count_) - 1; }
  std::size_t size() const noexcept { return count_; }
  int label(std::size_t t) const noexcept { return first_ + static_cast<int>(t); }
  bool contains(int label) const noexcept { return label >= first_ && label <= last(); }

  std::optional<std::size_t> index(int label) const noexcept {
    if (!contains(label)) return std::nullopt;
    return static_cast<std::size_t>(label - first_);
  }

  std::size_t at(int label) const {
    if (!contains(label))
      throw std::out_of_range("period " + std::to_string(label) + " outside panel [" +
                              std::to_string(first_) + ", " + std::to_string(last()) + "]");
    return static_cast<std::size_t>(label - first_);
  }

  friend bool operator==(const PeriodRange&, const PeriodRange&) = default;

 private:
  int first_ = 1;
  std::size_t count_ = 0;
};

/// The three identifier axes of a study.
struct UnitIds {
  IdIndexPtr interventions;
  IdIndexPtr outcomes;
  PeriodRange periods;
};

/// Row-major dense matrix, used for (unit x period) panels.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Period of treatment initiation, or never treated.
class FirstTreated {
 public:
  static constexpr FirstTreated never() noexcept { return FirstTreated(); }
  static constexpr FirstTreated at(int period) noexcept { return FirstTreated(period); }

  constexpr bool is_never() const noexcept { return !period_.has_value(); }
  constexpr int period() const {
    if (!period_) throw std::logic_error("period() on never-treated unit");
    return *period_;
  }

  friend constexpr bool operator==(const FirstTreated&, const FirstTreated&) = default;

 private:
  constexpr FirstTreated() = default;
  explicit constexpr FirstTreated(int p) : period_(p) {}
  std::optional<int> period_;
};

/// Periods since treatment initiation; minus infinity for never-treated units.
/// No arithmetic is defined on the infinite value.
class EventTime {
 public:
  static constexpr EventTime minus_infinity() noexcept { return EventTime(); }
  static constexpr EventTime finite(int k) noexcept { return EventTime(k); }

  constexpr bool is_finite() const noexcept { return value_.has_value(); }
  constexpr bool is_minus_infinity() const noexcept { return !value_.has_value(); }
  constexpr int value() const {
    if (!value_) throw std::logic_error("value() on infinite event time");
    return *value_;
  }
  constexpr bool equals(int k) const noexcept { return value_ && *value_ == k; }

  friend constexpr bool operator==(const EventTime&, const EventTime&) = default;

 private:
  constexpr EventTime() = default;
  explicit constexpr EventTime(int k) : value_(k) {}
  std::optional<int> value_;
};

/// K = t - F, or minus infinity for never-treated units.
/// Throws std::out_of_range when t is outside the panel.
inline EventTime event_time(FirstTreated first, int t, const PeriodRange& periods) {
  if (!periods.contains(t))
    throw std::out_of_range("period " + std::to_string(t) + " outside panel [" +
                            std::to_string(periods.first()) + ", " +
                            std::to_string(periods.last()) + "]");
  if (first.is_never()) return EventTime::minus_infinity();
  return EventTime::finite(t - first.period());
}

/// One problem found by a validation check.
struct Issue {
  std::string unit;
  int period = 0;
  std::string what;
};

struct ValidationReport {
  std::vector<Issue> issues;

  bool ok() const noexcept { return issues.empty(); }
  explicit operator bool() const noexcept { return ok(); }

  std::string summary(std::size_t max_items = 10) const {
    if (ok()) return "ok";
    std::string s = std::to_string(issues.size()) + " issue(s):";
    for (std::size_t k = 0; k < issues.size() && k < max_items; ++k)
      s += " [" + issues[k].unit + " @ " + std::to_string(issues[k].period) + ": " +
           issues[k].what + "]";
    if (issues.size() > max_items) s += " ...";
    return s;
  }
};

/// Absorbing treatment history stored as first-treated periods. Indicators,
/// event times and event dummies are derived on demand.
class TreatmentPanel {
 public:
  TreatmentPanel() = default;

  /// `first_treated[j]` aligns with `interventions`. Initiation before or at
  /// the first period is accepted here (check_absorbing reports it);
  /// initiation after the last period must be encoded as never.
  TreatmentPanel(IdIndexPtr interventions, PeriodRange periods,
                 std::vector<FirstTreated> first_treated)
      : ids_(std::move(interventions)), periods_(periods), first_(std::move(first_treated)) {
    if (!ids_) throw std::invalid_argument("treatment panel: null id index");
    if (first_.size() != ids_->size())
      throw std::invalid_argument("treatment panel: first_treated size does not match ids");
    for (std::size_t j = 0; j < first_.size(); ++j) {
      if (!first_[j].is_never() && first_[j].period() > periods_.last())
        throw std::invalid_argument("treatment panel: unit '" + (*ids_)[j] +
                                    "' first treated after the last period; encode as NEVER");
    }
  }

  const IdIndexPtr& ids() const noexcept { return ids_; }
  const PeriodRange& periods() const noexcept { return periods_; }
  std::size_t units() const noexcept { return first_.size(); }
  FirstTreated first_treated(std::size_t j) const { return first_[j]; }
  const std::vector<FirstTreated>& first_treated() const noexcept { return first_; }

  bool ever_treated(std::size_t j) const { return !first_[j].is_never(); }

  /// a_jt for period index t.
  bool treated(std::size_t j, std::size_t t) const {
    return !first_[j].is_never() && periods_.label(t) >= first_[j].period();
  }

  EventTime event_time_at(std::size_t j, std::size_t t) const {
    return event_time(first_[j], periods_.label(t), periods_);
  }

  /// Event dummy A_jt^k: ever-treated unit exactly k periods from initiation.
  bool event_dummy(std::size_t j, std::size_t t, int k) const {
    return event_time_at(j, t).equals(k);
  }

  Grid<std::uint8_t> status_grid() const {
    Grid<std::uint8_t> a(units(), periods_.size());
    for (std::size_t j = 0; j < units(); ++j)
      for (std::size_t t = 0; t < periods_.size(); ++t) a(j, t) = treated(j, t) ? 1 : 0;
    return a;
  }

  /// Panel restricted to the given unit rows (duplicates allowed; callers
  /// supply a fresh id index with matching size).
  TreatmentPanel select(const std::vector<std::size_t>& rows, IdIndexPtr new_ids) const {
    std::vector<FirstTreated> f;
    f.reserve(rows.size());
    for (auto r : rows) f.push_back(first_[r]);
    return TreatmentPanel(std::move(new_ids), periods_, std::move(f));
  }

 private:
  IdIndexPtr ids_;
  PeriodRange periods_;
  std::vector<FirstTreated> first_;
};

/// Externally supplied on/off treatment matrix, as found in raw data.
struct ExplicitTreatment {
  IdIndexPtr ids;
  PeriodRange periods;
  Grid<std::uint8_t> status;  // units x periods, 0/1
};

/// Absorbing-treatment audit: reports every switch-off and every unit that
/// is treated in the first period.
inline ValidationReport check_absorbing(const ExplicitTreatment& panel) {
  ValidationReport report;
  for (std::size_t j = 0; j < panel.status.rows(); ++j) {
    const std::string& id = (*panel.ids)[j];
    for (std::size_t t = 0; t < panel.status.cols(); ++t) {
      const bool now = panel.status(j, t) != 0;
      if (t == 0) {
        if (now) report.issues.push_back({id, panel.periods.label(t), "treated in first period"});
      } else if (!now && panel.status(j, t - 1) != 0) {
        report.issues.push_back({id, panel.periods.label(t), "treatment switched off"});
      }
    }
  }
  return report;
}

inline ValidationReport check_absorbing(const TreatmentPanel& panel) {
  ValidationReport report;
  for (std::size_t j = 0; j < panel.units(); ++j) {
    auto f = panel.first_treated(j);
    if (!f.is_never() && f.period() <= panel.periods().first())
      report.issues.push_back({(*panel.ids())[j], panel.periods().first(),
                               "treated in first period"});
  }
  return report;
}

/// Converts an audited explicit matrix into first-treated form.
inline TreatmentPanel to_treatment_panel(const ExplicitTreatment& panel) {
  if (auto report = check_absorbing(panel); !report.ok())
    throw std::invalid_argument("treatment is not absorbing: " + report.summary());
  std::vector<FirstTreated> first(panel.status.rows(), FirstTreated::never());
  for (std::size_t j = 0; j < panel.status.rows(); ++j)
    for (std::size_t t = 0; t < panel.status.cols(); ++t)
      if (panel.status(j, t)) {
        first[j] = FirstTreated::at(panel.periods.label(t));
        break;
      }
  return TreatmentPanel(panel.ids, panel.periods, std::move(first));
}

/// Outcome-unit panel. Cells may be missing while being assembled from raw
/// input; estimation requires a balanced panel (see check_balanced).
class OutcomePanel {
 public:
  OutcomePanel() = default;
  OutcomePanel(IdIndexPtr ids, PeriodRange periods)
      : ids_(std::move(ids)),
        periods_(periods),
        values_(ids_ ? ids_->size() : 0, periods.size(),
                std::numeric_limits<double>::quiet_NaN()),
        present_(ids_ ? ids_->size() : 0, periods.size(), 0) {
    if (!ids_) throw std::invalid_argument("outcome panel: null id index");
  }

  /// Balanced panel from a dense (units x periods) grid.
  OutcomePanel(IdIndexPtr ids, PeriodRange periods, Grid<double> values)
      : OutcomePanel(std::move(ids), periods) {
    if (values.rows() != ids_->size() || values.cols() != periods.size())
      throw std::invalid_argument("outcome panel: grid shape mismatch");
    values_ = std::move(values);
    std::fill(present_.data().begin(), present_.data().end(), std::uint8_t{1});
  }

  const IdIndexPtr& ids() const noexcept { return ids_; }
  const PeriodRange& periods() const noexcept { return periods_; }
  std::size_t units() const noexcept { return values_.rows(); }

  void set(std::size_t i, std::size_t t, double v) {
    values_(i, t) = v;
    present_(i, t) = 1;
  }
  bool present(std::size_t i, std::size_t t) const { return present_(i, t) != 0; }
  double value(std::size_t i, std::size_t t) const { return values_(i, t); }
  const Grid<double>& values() const noexcept { return values_; }

  /// Covariates share the outcome grid layout; missing cells are NaN.
  std::size_t add_covariate(std::string name) {
    for (const auto& c : covariate_names_)
      if (c == name) throw std::invalid_argument("duplicate covariate '" + name + "'");
    covariate_names_.push_back(std::move(name));
    covariates_.emplace_back(units(), periods_.size(), std::numeric_limits<double>::quiet_NaN());
    return covariates_.size() - 1;
  }
  void set_covariate(std::size_t c, std::size_t i, std::size_t t, double v) {
    covariates_[c](i, t) = v;
  }
  void set_covariate(std::size_t c, Grid<double> values) {
    if (values.rows() != units() || values.cols() != periods_.size())
      throw std::invalid_argument("covariate grid shape mismatch");
    covariates_[c] = std::move(values);
  }
  const std::vector<std::string>& covariate_names() const noexcept { return covariate_names_; }
  const Grid<double>& covariate(std::size_t c) const { return covariates_[c]; }
  std::size_t covariate_count() const noexcept { return covariates_.size(); }

 private:
  IdIndexPtr ids_;
  PeriodRange periods_;
  Grid<double> values_;
  Grid<std::uint8_t> present_;
  std::vector<std::string> covariate_names_;
  std::vector<Grid<double>> covariates_;
};

/// Every outcome unit in `ids` must have a finite value (and finite
/// covariates) in every period.
inline ValidationReport check_balanced(const OutcomePanel& outcomes, const UnitIds& ids) {
  ValidationReport report;
  const auto& want = *ids.outcomes;
  for (std::size_t u = 0; u < want.size(); ++u) {
    auto row = outcomes.ids()->find(want[u]);
    for (std::size_t t = 0; t < ids.periods.size(); ++t) {
      const int label = ids.periods.label(t);
      auto col = outcomes.periods().index(label);
      if (!row || !col || !outcomes.present(*row, *col)) {
        report.issues.push_back({want[u], label, "missing"});
        continue;
      }
      if (!std::isfinite(outcomes.value(*row, *col))) {
        report.issues.push_back({want[u], label, "non-finite value"});
        continue;
      }
      for (std::size_t c = 0; c < outcomes.covariate_count(); ++c)
        if (!std::isfinite(outcomes.covariate(c)(*row, *col)))
          report.issues.push_back(
              {want[u], label, "non-finite covariate '" + outcomes.covariate_names()[c] + "'"});
    }
  }
  return report;
}

/// Intervention-unit level panel consumed by the estimator.
struct ProjectedPanel {
  IdIndexPtr ids;
  PeriodRange periods;
  Grid<double> outcomes;                 // Y_jt
  std::vector<std::string> covariate_names;
  std::vector<Grid<double>> covariates;  // projected covariates
  Grid<double> spillover;                // g_j(A, H_t)
  Grid<std::uint8_t> exposed;
  Grid<std::uint8_t> is_control;

  std::size_t units() const noexcept { return outcomes.rows(); }

  /// Rows `rows` (duplicates allowed) relabelled with `new_ids`.
  ProjectedPanel select(const std::vector<std::size_t>& rows, IdIndexPtr new_ids) const {
    ProjectedPanel out;
    out.ids = std::move(new_ids);
    out.periods = periods;
    out.covariate_names = covariate_names;
    const std::size_t T = periods.size();
    auto take = [&](const auto& src) {
      std::remove_cvref_t<decltype(src)> dst(rows.size(), T);
      for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy_n(src.data().begin() + static_cast<std::ptrdiff_t>(rows[r] * T), T,
                    dst.data().begin() + static_cast<std::ptrdiff_t>(r * T));
      return dst;
    };
    out.outcomes = take(outcomes);
    for (const auto& c : covariates) out.covariates.push_back(take(c));
    out.spillover = take(spillover);
    out.exposed = take(exposed);
    out.is_control = take(is_control);
    return out;
  }
};

}  // namespace bnidid
