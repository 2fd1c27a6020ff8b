#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "kdeband/rng.hpp"
#include "kdeband/space.hpp"

namespace kdeband {

struct Observation;  // history.hpp
class RunHistory;

struct SamplerParams {
  double gamma = 0.15;             // good-set fraction in (0,1)
  double random_fraction = 1.0 / 3.0;
  int n_candidates = 64;
  int min_points_per_model = 0;    // resolved to d+1 by defaults_for()
  double bandwidth_factor = 3.0;
  double min_bandwidth = 1e-3;
  double cat_smoothing = 0.2;      // probability mass spread off the stored choice

  static SamplerParams defaults_for(const SearchSpace& space);
  void validate() const;
};

/// One side (good or bad) of the density-ratio model: points in unit space
/// with per-dimension bandwidths. Categorical dims use a smoothing kernel
/// instead of a bandwidth.
struct KdeSide {
  std::vector<UnitVector> points;
  std::vector<double> bandwidths;     // numeric dims; unused entries are 0
  std::vector<double> cat_smoothing;  // categorical dims; unused entries are 0
};

struct KdeModel {
  double budget = 0.0;
  KdeSide good;
  KdeSide bad;
};

/// Product-kernel density at `u`, averaged over the side's points. Numeric
/// dims use a Gaussian truncated to [0,1] and renormalized to integrate to 1;
/// a categorical dim with k choices gives (1 - lambda) to the stored choice
/// and lambda/(k-1) to each other choice.
double kde_density(const KdeSide& side, const SearchSpace& space, const UnitVector& u);

/// log of kde_density; preferred for ratio comparisons.
double kde_log_density(const KdeSide& side, const SearchSpace& space, const UnitVector& u);

/// Fit the per-budget model from successful observations at exactly `budget`.
/// Returns nullopt until N_min + 2 such observations exist. The best
/// max(N_min, floor(gamma*N)) observations by (loss, submission order) form
/// the good set, the remainder the bad set. Bandwidths follow the normal
/// reference rule 1.06 * sigma * n^(-1/5), scaled by bandwidth_factor and
/// floored at min_bandwidth.
std::optional<KdeModel> fit_models(const RunHistory& history, const SearchSpace& space,
                                   double budget, const SamplerParams& params);

/// Largest budget whose successful-observation count meets the fit threshold.
std::optional<double> select_model_budget(const RunHistory& history, const SamplerParams& params);

/// Draw a configuration: uniform with probability random_fraction (or when no
/// model is available), otherwise the best of n_candidates KDE draws by
/// good/bad density ratio.
Configuration propose(const std::optional<KdeModel>& model, const SearchSpace& space,
                      const SamplerParams& params, Rng& rng);

/// Density-ratio scores log(good(u)) - log(bad(u)) for a batch of candidates.
/// The OpenMP path and the serial reference return identical values.
std::vector<double> kde_log_ratio_batch(const KdeModel& model, const SearchSpace& space,
                                        const std::vector<UnitVector>& candidates);
std::vector<double> kde_log_ratio_batch_serial(const KdeModel& model, const SearchSpace& space,
                                               const std::vector<UnitVector>& candidates);

/// Monte Carlo estimate of the integral of the side's density over the whole
/// space (numeric dims on [0,1], categorical dims summed). Deterministic for
/// a given seed independent of thread count.
double kde_integral_mc(const KdeSide& side, const SearchSpace& space, std::size_t n_points,
                       std::uint64_t seed);
double kde_integral_mc_serial(const KdeSide& side, const SearchSpace& space, std::size_t n_points,
                              std::uint64_t seed);

}  // namespace kdeband
