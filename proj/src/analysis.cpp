#include "kdeband/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kdeband {
namespace {

std::vector<double> average_ranks(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t q = i; q <= j; ++q) ranks[order[q]] = shared;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw std::invalid_argument("rank correlation undefined for all-tied input");
  }
  return sxy / std::sqrt(sxx * syy);
}

std::string csv_number(double v) { return nlohmann::json(v).dump(); }

/// Cell structure along one dimension: numeric dims are cut at the tree's own
/// split thresholds, categorical dims have one cell per choice.
struct DimGrid {
  bool numeric = true;
  std::vector<double> bounds;  // numeric only; ascending, starts 0, ends 1
  std::size_t cells = 0;

  double cell_measure(std::size_t c) const {
    if (numeric) return bounds[c + 1] - bounds[c];
    return 1.0 / static_cast<double>(cells);
  }

  std::size_t index_of(double bound) const {
    const auto it = std::lower_bound(bounds.begin(), bounds.end(), bound);
    return static_cast<std::size_t>(it - bounds.begin());
  }
};

using Span = std::pair<std::size_t, std::size_t>;  // [start, end) cell indices

void append_spans(const DimGrid& grid, const RegressionTree::Box& box, std::size_t d,
                  std::vector<Span>& out) {
  out.clear();
  if (grid.numeric) {
    out.emplace_back(grid.index_of(box.lo[d]), grid.index_of(box.hi[d]));
    return;
  }
  for (std::size_t c = 0; c < grid.cells; ++c) {
    if ((box.mask[d] >> c) & 1ULL) out.emplace_back(c, c + 1);
  }
}

std::vector<DimGrid> build_grids(const RegressionTree& tree, const SearchSpace& space) {
  const std::size_t d = space.dimension();
  std::vector<DimGrid> grids(d);
  for (std::size_t i = 0; i < d; ++i) {
    if (space.parameter(i).is_numeric()) {
      grids[i].numeric = true;
      grids[i].bounds = {0.0, 1.0};
    } else {
      grids[i].numeric = false;
      grids[i].cells = space.parameter(i).cardinality();
    }
  }
  for (const TreeNode& node : tree.nodes()) {
    if (node.dim < 0) continue;
    const auto dim = static_cast<std::size_t>(node.dim);
    if (grids[dim].numeric) grids[dim].bounds.push_back(node.threshold);
  }
  for (auto& g : grids) {
    if (!g.numeric) continue;
    std::sort(g.bounds.begin(), g.bounds.end());
    g.bounds.erase(std::unique(g.bounds.begin(), g.bounds.end()), g.bounds.end());
    g.cells = g.bounds.size() - 1;
  }
  return grids;
}

double box_measure(const RegressionTree::Box& box, const std::vector<DimGrid>& grids,
                   std::size_t d) {
  if (grids[d].numeric) return box.hi[d] - box.lo[d];
  return static_cast<double>(std::popcount(box.mask[d])) / static_cast<double>(grids[d].cells);
}

struct TreeDecomposition {
  double variance = 0.0;
  std::vector<double> single_fraction;
  std::vector<double> pair_fraction;  // row-major over i < j
};

std::size_t pair_slot(std::size_t i, std::size_t j, std::size_t d) {
  return i * d - i * (i + 1) / 2 + (j - i - 1);
}

TreeDecomposition decompose_tree(const RegressionTree& tree, const SearchSpace& space,
                                 int max_order) {
  const std::size_t d = space.dimension();
  const auto boxes = tree.leaf_boxes(space);
  const auto grids = build_grids(tree, space);

  std::vector<double> measures(boxes.size() * d);
  std::vector<double> products(boxes.size());
  double f1 = 0.0, f2 = 0.0;
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    double p = 1.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double m = box_measure(boxes[b], grids, i);
      measures[b * d + i] = m;
      p *= m;
    }
    products[b] = p;
    f1 += boxes[b].value * p;
    f2 += boxes[b].value * boxes[b].value * p;
  }
  const double variance = std::max(0.0, f2 - f1 * f1);

  TreeDecomposition out;
  out.variance = variance;
  out.single_fraction.assign(d, 0.0);
  out.pair_fraction.assign(d * (d - 1) / 2, 0.0);

  const auto to_fraction = [&](double contribution) {
    if (variance <= 0.0) return 0.0;
    return std::clamp(contribution / variance, 0.0, 1.0);
  };

  std::vector<double> raw_single(d, 0.0);
  std::vector<Span> spans;
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<double> diff(grids[i].cells + 1, 0.0);
    for (std::size_t b = 0; b < boxes.size(); ++b) {
      const double w = boxes[b].value * products[b] / measures[b * d + i];
      append_spans(grids[i], boxes[b], i, spans);
      for (const Span& s : spans) {
        diff[s.first] += w;
        diff[s.second] -= w;
      }
    }
    double acc = 0.0, e2 = 0.0;
    for (std::size_t c = 0; c < grids[i].cells; ++c) {
      acc += diff[c];
      e2 += grids[i].cell_measure(c) * acc * acc;
    }
    raw_single[i] = e2 - f1 * f1;
    out.single_fraction[i] = to_fraction(raw_single[i]);
  }
  if (max_order < 2) return out;

  std::vector<Span> spans_j;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      const std::size_t ni = grids[i].cells, nj = grids[j].cells;
      std::vector<double> diff((ni + 1) * (nj + 1), 0.0);
      for (std::size_t b = 0; b < boxes.size(); ++b) {
        const double w =
            boxes[b].value * products[b] / (measures[b * d + i] * measures[b * d + j]);
        append_spans(grids[i], boxes[b], i, spans);
        append_spans(grids[j], boxes[b], j, spans_j);
        for (const Span& si : spans) {
          for (const Span& sj : spans_j) {
            diff[si.first * (nj + 1) + sj.first] += w;
            diff[si.first * (nj + 1) + sj.second] -= w;
            diff[si.second * (nj + 1) + sj.first] -= w;
            diff[si.second * (nj + 1) + sj.second] += w;
          }
        }
      }
      double e2 = 0.0;
      std::vector<double> column(nj, 0.0);
      for (std::size_t ci = 0; ci < ni; ++ci) {
        double row_acc = 0.0;
        for (std::size_t cj = 0; cj < nj; ++cj) {
          row_acc += diff[ci * (nj + 1) + cj];
          column[cj] += row_acc;
          e2 += grids[i].cell_measure(ci) * grids[j].cell_measure(cj) * column[cj] * column[cj];
        }
      }
      const double contribution = e2 - f1 * f1 - raw_single[i] - raw_single[j];
      out.pair_fraction[pair_slot(i, j, d)] = to_fraction(contribution);
    }
  }
  return out;
}

ImportanceReport importance_impl(const RegressionForest& forest, const SearchSpace& space,
                                 int max_order, double budget, bool parallel) {
  if (max_order < 1 || max_order > 2) {
    throw std::invalid_argument("max_order must be 1 or 2");
  }
  const auto& trees = forest.trees();
  if (trees.empty()) throw std::invalid_argument("importance needs a fitted surrogate");
  std::vector<TreeDecomposition> parts(trees.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(trees.size()); ++t) {
    parts[static_cast<std::size_t>(t)] =
        decompose_tree(trees[static_cast<std::size_t>(t)], space, max_order);
  }

  const std::size_t d = space.dimension();
  const double inv = 1.0 / static_cast<double>(trees.size());
  ImportanceReport report;
  report.budget = budget;
  std::vector<double> singles(d, 0.0);
  std::vector<double> pairs(d * (d - 1) / 2, 0.0);
  for (const TreeDecomposition& part : parts) {
    report.total_variance += part.variance * inv;
    for (std::size_t i = 0; i < d; ++i) singles[i] += part.single_fraction[i] * inv;
    for (std::size_t s = 0; s < pairs.size(); ++s) pairs[s] += part.pair_fraction[s] * inv;
  }
  for (std::size_t i = 0; i < d; ++i) report.singles[space.parameter(i).name] = singles[i];
  if (max_order >= 2) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i + 1; j < d; ++j) {
        report.pairs[{space.parameter(i).name, space.parameter(j).name}] =
            pairs[pair_slot(i, j, d)];
      }
    }
  }
  report.warning =
      "importance is estimated from optimizer-collected samples, which over-represent "
      "good configurations; treat fractions as exploratory";
  return report;
}

std::string axis_label(const ParameterSpec& p, double coord) {
  if (p.kind == ParamKind::categorical) {
    return p.choices.at(static_cast<std::size_t>(coord));
  }
  const double value = detail::from_unit_numeric(p, coord);
  if (p.kind == ParamKind::integer) {
    return nlohmann::json(static_cast<std::int64_t>(std::llround(value))).dump();
  }
  return csv_number(value);
}

/// Grid coordinates along one axis of a marginal plot.
std::vector<double> axis_grid(const ParameterSpec& p, int grid_size) {
  std::vector<double> coords;
  if (p.kind == ParamKind::categorical) {
    for (std::size_t c = 0; c < p.cardinality(); ++c) coords.push_back(static_cast<double>(c));
    return coords;
  }
  for (int g = 0; g < grid_size; ++g) {
    coords.push_back((static_cast<double>(g) + 0.5) / static_cast<double>(grid_size));
  }
  return coords;
}

bool box_covers(const RegressionTree::Box& box, const SearchSpace& space, std::size_t dim,
                double coord) {
  if (space.parameter(dim).is_numeric()) return box.lo[dim] <= coord && coord < box.hi[dim];
  return (box.mask[dim] >> static_cast<std::uint64_t>(coord)) & 1ULL;
}

}  // namespace

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) {
    throw std::invalid_argument("rank correlation needs equally long lists");
  }
  if (xs.size() < 3) throw std::invalid_argument("rank correlation needs at least 3 pairs");
  return pearson(average_ranks(xs), average_ranks(ys));
}

std::optional<CorrelationEntry> CorrelationTable::at(std::size_t i, std::size_t j) const {
  if (i > j) std::swap(i, j);
  const auto it = entries.find({i, j});
  if (it == entries.end()) return std::nullopt;
  return it->second;
}

CorrelationTable budget_correlation_table(const RunHistory& history) {
  std::map<double, std::map<TrialId, double>> by_budget;
  for (const Observation& o : history.observations()) {
    if (o.status != TrialStatus::success) continue;
    by_budget[o.budget][o.trial_id] = *o.loss;
  }
  CorrelationTable table;
  for (const auto& kv : by_budget) table.budgets.push_back(kv.first);
  for (std::size_t i = 0; i < table.budgets.size(); ++i) {
    const auto& low = by_budget.at(table.budgets[i]);
    for (std::size_t j = i + 1; j < table.budgets.size(); ++j) {
      const auto& high = by_budget.at(table.budgets[j]);
      std::vector<double> xs, ys;
      for (const auto& [trial, loss] : low) {
        const auto it = high.find(trial);
        if (it == high.end()) continue;
        xs.push_back(loss);
        ys.push_back(it->second);
      }
      if (xs.size() < 3) continue;
      try {
        const double coefficient = spearman(xs, ys);
        table.entries[{i, j}] = CorrelationEntry{coefficient, xs.size()};
      } catch (const std::invalid_argument&) {
        // all-tied losses on one side: coefficient undefined, entry stays absent
      }
    }
  }
  return table;
}

RegressionForest fit_surrogate(const RunHistory& history, double budget,
                               const ForestParams& params) {
  const auto successes = history.successes_at(budget);
  if (successes.size() < 10) {
    throw std::invalid_argument("surrogate needs at least 10 successful observations at budget");
  }
  std::vector<UnitVector> xs;
  std::vector<double> ys;
  xs.reserve(successes.size());
  ys.reserve(successes.size());
  for (const Observation* o : successes) {
    xs.push_back(history.space().to_unit(o->config));
    ys.push_back(*o->loss);
  }
  return RegressionForest::fit(history.space(), xs, ys, params);
}

ImportanceReport fanova_importance(const RegressionForest& forest, const SearchSpace& space,
                                   int max_order, double budget) {
  return importance_impl(forest, space, max_order, budget, true);
}

ImportanceReport fanova_importance_serial(const RegressionForest& forest,
                                          const SearchSpace& space, int max_order,
                                          double budget) {
  return importance_impl(forest, space, max_order, budget, false);
}

MarginalCurve marginal_curve(const RegressionForest& forest, const SearchSpace& space,
                             const std::vector<std::string>& params, int grid_size,
                             std::optional<Configuration> best) {
  if (params.empty() || params.size() > 2) {
    throw std::invalid_argument("marginal curves take 1 or 2 parameters");
  }
  if (grid_size < 1) throw std::invalid_argument("grid_size must be positive");
  if (forest.trees().empty()) throw std::invalid_argument("marginal needs a fitted surrogate");

  std::vector<std::size_t> dims;
  for (const std::string& name : params) dims.push_back(space.index_of(name));
  if (dims.size() == 2 && dims[0] == dims[1]) {
    throw std::invalid_argument("marginal parameters must be distinct");
  }

  MarginalCurve curve;
  curve.params = params;
  curve.best = std::move(best);
  for (std::size_t a = 0; a < dims.size(); ++a) {
    const ParameterSpec& p = space.parameter(dims[a]);
    curve.grid_unit.push_back(axis_grid(p, grid_size));
    std::vector<std::string> labels;
    for (double coord : curve.grid_unit.back()) labels.push_back(axis_label(p, coord));
    curve.grid_label.push_back(std::move(labels));
  }

  const std::size_t n0 = curve.grid_unit[0].size();
  const std::size_t n1 = dims.size() == 2 ? curve.grid_unit[1].size() : 1;
  curve.values.assign(n0, std::vector<double>(n1, 0.0));

  const std::size_t d = space.dimension();
  const double inv = 1.0 / static_cast<double>(forest.trees().size());
  for (const RegressionTree& tree : forest.trees()) {
    const auto grids = build_grids(tree, space);
    for (const auto& box : tree.leaf_boxes(space)) {
      double w = box.value;
      for (std::size_t i = 0; i < d; ++i) {
        if (i == dims[0] || (dims.size() == 2 && i == dims[1])) continue;
        w *= box_measure(box, grids, i);
      }
      for (std::size_t g0 = 0; g0 < n0; ++g0) {
        if (!box_covers(box, space, dims[0], curve.grid_unit[0][g0])) continue;
        for (std::size_t g1 = 0; g1 < n1; ++g1) {
          if (dims.size() == 2 && !box_covers(box, space, dims[1], curve.grid_unit[1][g1])) {
            continue;
          }
          curve.values[g0][g1] += w * inv;
        }
      }
    }
  }
  return curve;
}

double tree_marginal_1d(const RegressionTree& tree, const SearchSpace& space, std::size_t dim,
                        double coord) {
  const auto grids = build_grids(tree, space);
  double total = 0.0;
  for (const auto& box : tree.leaf_boxes(space)) {
    if (!box_covers(box, space, dim, coord)) continue;
    double w = box.value;
    for (std::size_t i = 0; i < space.dimension(); ++i) {
      if (i == dim) continue;
      w *= box_measure(box, grids, i);
    }
    total += w;
  }
  return total;
}

std::string correlation_table_to_csv(const CorrelationTable& table) {
  std::ostringstream out;
  out << "budget_low,budget_high,coefficient,sample_size\n";
  for (const auto& [key, entry] : table.entries) {
    out << csv_number(table.budgets[key.first]) << ',' << csv_number(table.budgets[key.second])
        << ',' << csv_number(entry.coefficient) << ',' << entry.sample_size << '\n';
  }
  return out.str();
}

nlohmann::json correlation_table_to_json(const CorrelationTable& table) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [key, entry] : table.entries) {
    entries.push_back({{"budget_low", table.budgets[key.first]},
                       {"budget_high", table.budgets[key.second]},
                       {"coefficient", entry.coefficient},
                       {"sample_size", entry.sample_size}});
  }
  return {{"budgets", table.budgets}, {"entries", entries}};
}

std::string importance_to_csv(const ImportanceReport& report) {
  std::ostringstream out;
  out << "kind,param_1,param_2,fraction\n";
  for (const auto& [name, fraction] : report.singles) {
    out << "single," << name << ",," << csv_number(fraction) << '\n';
  }
  for (const auto& [key, fraction] : report.pairs) {
    out << "pair," << key.first << ',' << key.second << ',' << csv_number(fraction) << '\n';
  }
  return out.str();
}

nlohmann::json importance_to_json(const ImportanceReport& report) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [key, fraction] : report.pairs) {
    pairs.push_back({{"param_1", key.first}, {"param_2", key.second}, {"fraction", fraction}});
  }
  return {{"budget", report.budget},
          {"total_variance", report.total_variance},
          {"singles", report.singles},
          {"pairs", pairs},
          {"warning", report.warning}};
}

std::string trajectory_to_csv(const std::vector<IncumbentPoint>& points) {
  std::ostringstream out;
  out << "time,trial_id,loss\n";
  for (const IncumbentPoint& p : points) {
    out << csv_number(p.time) << ',' << p.trial_id << ',' << csv_number(p.loss) << '\n';
  }
  return out.str();
}

std::string marginal_to_csv(const MarginalCurve& curve) {
  std::ostringstream out;
  out << "param_1,value_1,param_2,value_2,mean_loss\n";
  const bool paired = curve.params.size() == 2;
  for (std::size_t g0 = 0; g0 < curve.values.size(); ++g0) {
    for (std::size_t g1 = 0; g1 < curve.values[g0].size(); ++g1) {
      out << curve.params[0] << ',' << curve.grid_label[0][g0] << ',';
      if (paired) out << curve.params[1] << ',' << curve.grid_label[1][g1];
      else out << ',';
      out << ',' << csv_number(curve.values[g0][g1]) << '\n';
    }
  }
  return out.str();
}

}  // namespace kdeband
