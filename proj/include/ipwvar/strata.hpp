#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ipwvar {

/// One covariate cell of the data-generating process.
///
/// `p` is the true propensity P(Z=1 | X=x). The outcome fields are the
/// potential-outcome moments in the cell, and `n_total` is the fixed cell
/// size. Under the forced-pair design one treated and one control unit are
/// guaranteed, so only `n_free()` units are assigned at random.
struct StratumSpec {
  std::string label;
  double p = 0.5;
  double mu1 = 0.0;
  double mu0 = 0.0;
  double var1 = 0.0;
  double var0 = 0.0;
  long n_total = 2;

  long n_free() const noexcept { return n_total - 2; }
  double q() const noexcept { return 1.0 - p; }
};

struct PopulationSpec {
  std::vector<StratumSpec> strata;

  long total_size() const noexcept;
  const StratumSpec* find(std::string_view label) const noexcept;
};

/// Realized counts and outcome sums of one stratum.
struct StratumSample {
  std::string label;
  long n1 = 0;
  long n0 = 0;
  double sum1 = 0.0;
  double sum0 = 0.0;

  long n_total() const noexcept { return n1 + n0; }
  double p_hat() const noexcept {
    return static_cast<double>(n1) / static_cast<double>(n1 + n0);
  }
  double mean1() const noexcept { return sum1 / static_cast<double>(n1); }
  double mean0() const noexcept { return sum0 / static_cast<double>(n0); }
};

struct Dataset {
  std::vector<StratumSample> samples;

  long total_size() const noexcept;
  const StratumSample* find(std::string_view label) const noexcept;
};

enum class WeightingScheme { TruePropensity, EstimatedPropensity, HybridCollapsed };

std::string_view to_string(WeightingScheme scheme) noexcept;
/// Accepts "true", "estimated", "hybrid". Throws std::invalid_argument otherwise.
WeightingScheme parse_scheme(std::string_view name);

struct Violation {
  std::string stratum;  // empty for population-level violations
  std::string kind;     // "positivity", "variance", "cell size", "duplicate label", "empty", "finite"
  std::string message;
};

using ValidationResult = std::vector<Violation>;

ValidationResult validate(const PopulationSpec& pop);

/// Throws std::invalid_argument carrying the first violation when `pop` is invalid.
void require_valid(const PopulationSpec& pop);

/// A set of original strata merged into one cell.
struct StratumGroup {
  std::string label;
  std::vector<std::string> members;
  std::vector<std::size_t> member_indices;  // positions in the original population
};

struct GroupingMap {
  std::vector<StratumGroup> groups;

  /// Merged label for an original label; throws std::out_of_range if unknown.
  const std::string& merged_label(std::string_view original) const;
  bool is_identity() const noexcept;
};

struct CollapsedPopulation {
  PopulationSpec population;
  GroupingMap grouping;
};

/// Merges strata whose true propensities are bit-identical.
///
/// Groups appear in order of their first member. A singleton keeps its label;
/// a merged group is labelled by its members joined with '+'. Merged means are
/// size-weighted and merged variances are mixture variances (within-cell plus
/// between-cell spread).
CollapsedPopulation collapse_by_propensity(const PopulationSpec& pop);

/// Adds counts and outcome sums within each group of `grouping`.
Dataset collapse_dataset(const Dataset& data, const GroupingMap& grouping);

}  // namespace ipwvar
