#include "kdeband/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace kdeband {

void ForestParams::validate() const {
  if (num_trees < 1) throw std::invalid_argument("num_trees must be positive");
  if (!(bootstrap_fraction > 0.0 && bootstrap_fraction <= 1.0))
    throw std::invalid_argument("bootstrap_fraction must be in (0,1]");
  if (min_leaf < 1) throw std::invalid_argument("min_leaf must be positive");
  if (max_depth < 0) throw std::invalid_argument("max_depth must be non-negative");
}

namespace {

struct SplitChoice {
  bool found = false;
  int dim = -1;
  double threshold = 0.0;
  std::uint64_t left_mask = 0;
  double children_sse = std::numeric_limits<double>::infinity();
};

double subset_sse(double sum, double sum_sq, double n) {
  return std::max(0.0, sum_sq - sum * sum / n);
}

class TreeBuilder {
 public:
  TreeBuilder(const SearchSpace& space, const std::vector<UnitVector>& xs,
              const std::vector<double>& ys, const ForestParams& params)
      : space_(space), xs_(xs), ys_(ys), params_(params) {}

  std::vector<TreeNode> build(std::vector<std::size_t> rows) {
    nodes_.clear();
    grow(std::move(rows), 0);
    return std::move(nodes_);
  }

 private:
  int grow(std::vector<std::size_t> rows, int depth) {
    const int index = static_cast<int>(nodes_.size());
    nodes_.emplace_back();

    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t r : rows) {
      sum += ys_[r];
      sum_sq += ys_[r] * ys_[r];
    }
    const double mean = sum / static_cast<double>(rows.size());
    nodes_[static_cast<std::size_t>(index)].value = mean;

    const bool depth_ok = params_.max_depth == 0 || depth < params_.max_depth;
    if (!depth_ok || rows.size() < 2 * static_cast<std::size_t>(params_.min_leaf))
      return index;

    const SplitChoice split = best_split(rows);
    if (!split.found) return index;
    // require a strict variance reduction so pure and tied nodes stay leaves
    const double node_sse = subset_sse(sum, sum_sq, static_cast<double>(rows.size()));
    if (!(split.children_sse < node_sse - 1e-12 * std::max(1.0, node_sse))) return index;

    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows) {
      if (goes_left(split, xs_[r][static_cast<std::size_t>(split.dim)]))
        left_rows.push_back(r);
      else
        right_rows.push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    const int left = grow(std::move(left_rows), depth + 1);
    const int right = grow(std::move(right_rows), depth + 1);
    TreeNode& node = nodes_[static_cast<std::size_t>(index)];
    node.dim = split.dim;
    node.threshold = split.threshold;
    node.left_mask = split.left_mask;
    node.left = left;
    node.right = right;
    return index;
  }

  bool goes_left(const SplitChoice& split, double coord) const {
    if (space_.parameter(static_cast<std::size_t>(split.dim)).is_numeric())
      return coord < split.threshold;
    return (split.left_mask >> static_cast<std::uint64_t>(coord)) & 1ULL;
  }

  SplitChoice best_split(const std::vector<std::size_t>& rows) const {
    SplitChoice best;
    for (std::size_t d = 0; d < space_.dimension(); ++d) {
      if (space_.parameter(d).is_numeric())
        numeric_split(rows, d, best);
      else
        categorical_split(rows, d, best);
    }
    return best;
  }

  void numeric_split(const std::vector<std::size_t>& rows, std::size_t d,
                     SplitChoice& best) const {
    std::vector<std::pair<double, double>> pts;  // (coord, y)
    pts.reserve(rows.size());
    for (std::size_t r : rows) pts.emplace_back(xs_[r][d], ys_[r]);
    std::sort(pts.begin(), pts.end());

    double left_sum = 0.0, left_sq = 0.0;
    double total_sum = 0.0, total_sq = 0.0;
    for (const auto& [c, y] : pts) {
      total_sum += y;
      total_sq += y * y;
    }
    const std::size_t n = pts.size();
    const auto min_leaf = static_cast<std::size_t>(params_.min_leaf);
    for (std::size_t p = 1; p < n; ++p) {
      left_sum += pts[p - 1].second;
      left_sq += pts[p - 1].second * pts[p - 1].second;
      if (p < min_leaf || n - p < min_leaf) continue;
      if (!(pts[p - 1].first < pts[p].first)) continue;
      const double sse = subset_sse(left_sum, left_sq, static_cast<double>(p)) +
                         subset_sse(total_sum - left_sum, total_sq - left_sq,
                                    static_cast<double>(n - p));
      if (sse < best.children_sse) {
        best.found = true;
        best.dim = static_cast<int>(d);
        best.threshold = (pts[p - 1].first + pts[p].first) / 2.0;
        best.left_mask = 0;
        best.children_sse = sse;
      }
    }
  }

  void categorical_split(const std::vector<std::size_t>& rows, std::size_t d,
                         SplitChoice& best) const {
    const std::size_t k = space_.parameter(d).cardinality();
    if (k > 64) throw std::invalid_argument("categorical parameters support up to 64 choices");
    std::vector<double> sums(k, 0.0), sqs(k, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t r : rows) {
      const auto c = static_cast<std::size_t>(xs_[r][d]);
      sums[c] += ys_[r];
      sqs[c] += ys_[r] * ys_[r];
      ++counts[c];
    }
    std::vector<std::size_t> present;
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0) present.push_back(c);
    if (present.size() < 2) return;
    // order choices by their mean target; the best binary partition is then
    // some prefix of that order
    std::stable_sort(present.begin(), present.end(), [&](std::size_t a, std::size_t b) {
      return sums[a] / static_cast<double>(counts[a]) < sums[b] / static_cast<double>(counts[b]);
    });

    double total_sum = 0.0, total_sq = 0.0;
    std::size_t total_n = 0;
    for (std::size_t c : present) {
      total_sum += sums[c];
      total_sq += sqs[c];
      total_n += counts[c];
    }
    double left_sum = 0.0, left_sq = 0.0;
    std::size_t left_n = 0;
    std::uint64_t mask = 0;
    const auto min_leaf = static_cast<std::size_t>(params_.min_leaf);
    for (std::size_t q = 0; q + 1 < present.size(); ++q) {
      left_sum += sums[present[q]];
      left_sq += sqs[present[q]];
      left_n += counts[present[q]];
      mask |= 1ULL << present[q];
      if (left_n < min_leaf || total_n - left_n < min_leaf) continue;
      const double sse =
          subset_sse(left_sum, left_sq, static_cast<double>(left_n)) +
          subset_sse(total_sum - left_sum, total_sq - left_sq,
                     static_cast<double>(total_n - left_n));
      if (sse < best.children_sse) {
        best.found = true;
        best.dim = static_cast<int>(d);
        best.threshold = 0.0;
        best.left_mask = mask;
        best.children_sse = sse;
      }
    }
  }

  const SearchSpace& space_;
  const std::vector<UnitVector>& xs_;
  const std::vector<double>& ys_;
  const ForestParams& params_;
  std::vector<TreeNode> nodes_;
};

void check_training_data(const SearchSpace& space, const std::vector<UnitVector>& xs,
                         const std::vector<double>& ys) {
  if (xs.empty() || xs.size() != ys.size())
    throw std::invalid_argument("training data must be non-empty and aligned");
  for (const auto& u : xs)
    if (u.size() != space.dimension())
      throw std::invalid_argument("training point has wrong dimension");
}

std::vector<std::size_t> bootstrap_rows(std::size_t n, double fraction, Rng& rng) {
  const auto count = static_cast<std::size_t>(
      std::max(1.0, std::floor(fraction * static_cast<double>(n))));
  std::vector<std::size_t> rows(count);
  for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
  return rows;
}

}  // namespace

RegressionTree RegressionTree::fit(const SearchSpace& space, const std::vector<UnitVector>& xs,
                                   const std::vector<double>& ys, const ForestParams& params) {
  params.validate();
  check_training_data(space, xs, ys);
  std::vector<std::size_t> rows(xs.size());
  std::iota(rows.begin(), rows.end(), 0);
  RegressionTree tree;
  tree.nodes_ = TreeBuilder(space, xs, ys, params).build(std::move(rows));
  return tree;
}

RegressionTree RegressionTree::from_nodes(std::vector<TreeNode> nodes) {
  if (nodes.empty()) throw std::invalid_argument("a tree needs at least one node");
  RegressionTree tree;
  tree.nodes_ = std::move(nodes);
  return tree;
}

double RegressionTree::predict(const SearchSpace& space, const UnitVector& u) const {
  std::size_t i = 0;
  while (nodes_[i].dim >= 0) {
    const auto d = static_cast<std::size_t>(nodes_[i].dim);
    bool left;
    if (space.parameter(d).is_numeric())
      left = u[d] < nodes_[i].threshold;
    else
      left = (nodes_[i].left_mask >> static_cast<std::uint64_t>(u[d])) & 1ULL;
    i = static_cast<std::size_t>(left ? nodes_[i].left : nodes_[i].right);
  }
  return nodes_[i].value;
}

std::vector<RegressionTree::Box> RegressionTree::leaf_boxes(const SearchSpace& space) const {
  const std::size_t d = space.dimension();
  Box root;
  root.lo.assign(d, 0.0);
  root.hi.assign(d, 1.0);
  root.mask.assign(d, 0);
  for (std::size_t i = 0; i < d; ++i)
    if (!space.parameter(i).is_numeric())
      root.mask[i] = (space.parameter(i).cardinality() >= 64)
                         ? ~0ULL
                         : (1ULL << space.parameter(i).cardinality()) - 1;

  std::vector<Box> out;
  std::vector<std::pair<std::size_t, Box>> stack;
  stack.emplace_back(0, std::move(root));
  while (!stack.empty()) {
    auto [index, box] = std::move(stack.back());
    stack.pop_back();
    const TreeNode& node = nodes_[index];
    if (node.dim < 0) {
      box.value = node.value;
      out.push_back(std::move(box));
      continue;
    }
    const auto dim = static_cast<std::size_t>(node.dim);
    Box left = box;
    Box right = std::move(box);
    if (space.parameter(dim).is_numeric()) {
      left.hi[dim] = node.threshold;
      right.lo[dim] = node.threshold;
    } else {
      left.mask[dim] &= node.left_mask;
      right.mask[dim] &= ~node.left_mask;
    }
    stack.emplace_back(static_cast<std::size_t>(node.right), std::move(right));
    stack.emplace_back(static_cast<std::size_t>(node.left), std::move(left));
  }
  return out;
}

namespace {

RegressionForest fit_impl(const SearchSpace& space, const std::vector<UnitVector>& xs,
                          const std::vector<double>& ys, const ForestParams& params,
                          bool parallel) {
  params.validate();
  check_training_data(space, xs, ys);
  std::vector<RegressionTree> trees(static_cast<std::size_t>(params.num_trees));
  const auto n_trees = static_cast<std::int64_t>(params.num_trees);
  // per-tree streams keep the ensemble independent of the thread count
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::int64_t t = 0; t < n_trees; ++t) {
    Rng rng(splitmix64(params.seed ^ splitmix64(0x7265ULL + static_cast<std::uint64_t>(t))));
    std::vector<std::size_t> rows = bootstrap_rows(xs.size(), params.bootstrap_fraction, rng);
    trees[static_cast<std::size_t>(t)] =
        RegressionTree::from_nodes(TreeBuilder(space, xs, ys, params).build(std::move(rows)));
  }
  return RegressionForest::from_trees(std::move(trees));
}

}  // namespace

RegressionForest RegressionForest::fit(const SearchSpace& space,
                                       const std::vector<UnitVector>& xs,
                                       const std::vector<double>& ys,
                                       const ForestParams& params) {
  return fit_impl(space, xs, ys, params, true);
}

RegressionForest RegressionForest::fit_serial(const SearchSpace& space,
                                              const std::vector<UnitVector>& xs,
                                              const std::vector<double>& ys,
                                              const ForestParams& params) {
  return fit_impl(space, xs, ys, params, false);
}

RegressionForest RegressionForest::from_trees(std::vector<RegressionTree> trees) {
  if (trees.empty()) throw std::invalid_argument("a forest needs at least one tree");
  RegressionForest forest;
  forest.trees_ = std::move(trees);
  return forest;
}

double RegressionForest::predict(const SearchSpace& space, const UnitVector& u) const {
  double sum = 0.0;
  for (const auto& tree : trees_) sum += tree.predict(space, u);
  return sum / static_cast<double>(trees_.size());
}

}  // namespace kdeband
