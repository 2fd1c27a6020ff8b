#pragma once

#include <cstdint>
#include <vector>

#include "kdeband/rng.hpp"
#include "kdeband/space.hpp"

namespace kdeband {

struct ForestParams {
  int num_trees = 30;
  double bootstrap_fraction = 1.0;  // resampled with replacement
  int min_leaf = 2;
  int max_depth = 0;  // 0 = unlimited
  std::uint64_t seed = 0;

  void validate() const;
};

/// Axis-aligned split node. Numeric dims route left when coord < threshold;
/// categorical dims route left when the choice's bit is set in left_mask.
struct TreeNode {
  int dim = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::uint64_t left_mask = 0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf prediction
};

/// One regression tree over unit-space coordinates, grown by greedy variance
/// reduction with midpoint thresholds; categorical splits consider the
/// by-mean-ordered choice prefixes.
class RegressionTree {
 public:
  /// Deterministic fit on the given rows (no bootstrap here).
  static RegressionTree fit(const SearchSpace& space, const std::vector<UnitVector>& xs,
                            const std::vector<double>& ys, const ForestParams& params);

  /// Assemble a tree directly; test hook and deserialization path.
  static RegressionTree from_nodes(std::vector<TreeNode> nodes);

  double predict(const SearchSpace& space, const UnitVector& u) const;

  /// The partition induced by the leaves: per dim either an interval
  /// [lo, hi) of unit space or a choice subset, plus the leaf value.
  struct Box {
    std::vector<double> lo;
    std::vector<double> hi;
    std::vector<std::uint64_t> mask;  // categorical dims
    double value = 0.0;
  };
  std::vector<Box> leaf_boxes(const SearchSpace& space) const;

  const std::vector<TreeNode>& nodes() const { return nodes_; }

 private:
  std::vector<TreeNode> nodes_;
};

/// Bootstrap ensemble. Each tree draws its resample from an independent
/// per-tree stream, so the fit is identical however many threads build it.
class RegressionForest {
 public:
  static RegressionForest fit(const SearchSpace& space, const std::vector<UnitVector>& xs,
                              const std::vector<double>& ys, const ForestParams& params);
  static RegressionForest fit_serial(const SearchSpace& space,
                                     const std::vector<UnitVector>& xs,
                                     const std::vector<double>& ys, const ForestParams& params);

  static RegressionForest from_trees(std::vector<RegressionTree> trees);

  double predict(const SearchSpace& space, const UnitVector& u) const;

  const std::vector<RegressionTree>& trees() const { return trees_; }

 private:
  std::vector<RegressionTree> trees_;
};

}  // namespace kdeband
