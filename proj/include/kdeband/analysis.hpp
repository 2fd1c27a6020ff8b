#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kdeband/forest.hpp"
#include "kdeband/history.hpp"
#include "kdeband/space.hpp"

namespace kdeband {

/// Spearman rank correlation: Pearson correlation of average ranks (ties
/// share the averaged rank). Throws on length mismatch, fewer than 3 pairs,
/// or an all-tied input.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

struct CorrelationEntry {
  double coefficient = 0.0;
  std::size_t sample_size = 0;
};

/// Pairwise rank correlations between budgets, over configurations with
/// successful results at both budgets of a pair. Entries with fewer than 3
/// shared configurations are absent.
struct CorrelationTable {
  std::vector<double> budgets;
  std::map<std::pair<std::size_t, std::size_t>, CorrelationEntry> entries;  // i < j

  std::optional<CorrelationEntry> at(std::size_t i, std::size_t j) const;
};

CorrelationTable budget_correlation_table(const RunHistory& history);

/// Trains the tree-ensemble surrogate on the successful observations at
/// `budget` (unit-space coordinates against losses). Requires at least 10.
RegressionForest fit_surrogate(const RunHistory& history, double budget,
                               const ForestParams& params = ForestParams{});

/// Fraction of predicted-performance variance explained by single parameters
/// and parameter pairs. `warning` is always set: the training sample comes
/// from an optimizer run, so it over-represents good configurations.
struct ImportanceReport {
  double budget = 0.0;
  double total_variance = 0.0;
  std::map<std::string, double> singles;
  std::map<std::pair<std::string, std::string>, double> pairs;
  std::string warning;
};

/// Exact per-tree variance decomposition over the leaf partition: marginal
/// means come from integrating each tree under the uniform measure, pair
/// contributions subtract their singles, fractions are averaged over trees
/// (0 when a tree has zero variance). The parallel and serial versions
/// return identical reports.
ImportanceReport fanova_importance(const RegressionForest& forest, const SearchSpace& space,
                                   int max_order = 2, double budget = 0.0);
ImportanceReport fanova_importance_serial(const RegressionForest& forest,
                                          const SearchSpace& space, int max_order = 2,
                                          double budget = 0.0);

/// Predicted mean loss along one parameter (or a pair), integrating all
/// other dimensions out under the uniform measure.
struct MarginalCurve {
  std::vector<std::string> params;                 // 1 or 2 names
  std::vector<std::vector<double>> grid_unit;      // per axis: query coords in unit space
  std::vector<std::vector<std::string>> grid_label;  // per axis: original-unit labels
  std::vector<std::vector<double>> values;         // [grid0][grid1]; single param: [grid0][1]
  std::optional<Configuration> best;               // annotation marker
};

MarginalCurve marginal_curve(const RegressionForest& forest, const SearchSpace& space,
                             const std::vector<std::string>& params, int grid_size,
                             std::optional<Configuration> best = std::nullopt);

/// 1-D marginal of a single tree at one query coordinate; the slow-but-sure
/// path used to cross-check the partition integration.
double tree_marginal_1d(const RegressionTree& tree, const SearchSpace& space, std::size_t dim,
                        double coord);

/// Exports. Column layouts (stable):
///   correlations: budget_low,budget_high,coefficient,sample_size
///   importance:   kind,param_1,param_2,fraction
///   trajectory:   time,trial_id,loss
///   marginal:     param_1,value_1,param_2,value_2,mean_loss
std::string correlation_table_to_csv(const CorrelationTable& table);
nlohmann::json correlation_table_to_json(const CorrelationTable& table);
std::string importance_to_csv(const ImportanceReport& report);
nlohmann::json importance_to_json(const ImportanceReport& report);
std::string trajectory_to_csv(const std::vector<IncumbentPoint>& points);
std::string marginal_to_csv(const MarginalCurve& curve);

}  // namespace kdeband
