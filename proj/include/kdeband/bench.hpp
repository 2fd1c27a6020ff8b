#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kdeband/engine.hpp"
#include "kdeband/scheduler.hpp"
#include "kdeband/space.hpp"

namespace kdeband {

/// The ten structural choices of the residual architecture family: a stem
/// width, and per main block a repeat count, a branch count, and a widening
/// factor.
struct ArchConfig {
  int filters0 = 8;
  std::array<int, 3> res_blocks{1, 1, 1};
  std::array<int, 3> res_branches{1, 1, 1};
  std::array<double, 3> widen_factors{1.0, 1.0, 1.0};

  void validate() const;
};

/// Channel widths (F0, F1, F2, F3): F0 is the stem width and each main block
/// widens by its factor, F_j = round(w_j * F_{j-1}), rounding half away from
/// zero, never below 1.
std::array<int, 4> filters_sequence(const ArchConfig& a);

/// Weight count of the realized network: 3x3 stem convolution with
/// batch-norm, residual branches of two 3x3 convolutions with batch-norm
/// each, a 1x1 projection shortcut only where the width changes, and a
/// biased linear classifier. Batch-norm counts scale and shift; convolutions
/// are bias-free.
std::int64_t count_parameters(const ArchConfig& a, int classes = 10);

/// Read an ArchConfig from the architecture parameters of a configuration
/// (filters_0, res_blocks_j, res_branches_j, widen_factor_j).
ArchConfig arch_from_configuration(const Configuration& config);

/// Tunable multi-fidelity test function on the unit cube:
///   loss = |u - optimum|^2
///        + fidelity_bias * (b_max/budget - 1) * g(u, seed)
///        + noise_scale * noise(u, budget, seed)
/// g is a smooth seeded direction field with values in [-1, 1], so cheap
/// evaluations are misleading in a controllable, reproducible way.
struct SyntheticBenchmark {
  std::size_t dimension = 2;
  std::vector<double> optimum;
  double fidelity_bias = 0.0;
  double noise_scale = 0.0;
  double b_max = 1.0;
};

double synthetic_eval(const SyntheticBenchmark& b, const UnitVector& u, double budget,
                      std::uint64_t seed);
double synthetic_eval(const SyntheticBenchmark& b, const SearchSpace& space,
                      const Configuration& config, double budget, std::uint64_t seed);

/// A ready-to-run objective: space, ladder, and an evaluation function
/// factory. The bundled set:
///   - "synthetic-2d": two continuous dims, mild fidelity bias; the sampler
///     efficacy benchmark.
///   - "corr-demo": three continuous dims with strong fidelity bias, so
///     neighbouring budgets rank alike while distant budgets decorrelate.
///   - "arch-demo": the full architecture + training space; loss is the
///     scaled log parameter count plus a synthetic fidelity bias, so runs
///     need no training.
struct NamedBenchmark {
  std::string name;
  SearchSpace space;
  BudgetLadder ladder;
  SyntheticBenchmark synthetic;

  /// Evaluation function for a run; `seed` fixes the bias field and noise.
  EvalFn make_eval(std::uint64_t seed) const;
};

NamedBenchmark bundled_benchmark(const std::string& name);
std::vector<std::string> bundled_benchmark_names();

}  // namespace kdeband
