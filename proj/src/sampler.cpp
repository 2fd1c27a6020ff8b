#include "kdeband/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "kdeband/history.hpp"

namespace kdeband {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

/// log pdf of a Gaussian(mu, b) truncated to [0,1] and renormalized.
double truncated_gaussian_log_pdf(double x, double mu, double b) {
  const double z = (x - mu) / b;
  const double mass = normal_cdf((1.0 - mu) / b) - normal_cdf((0.0 - mu) / b);
  return -0.5 * z * z - kLogSqrt2Pi - std::log(b) - std::log(mass);
}

double sample_stddev(const std::vector<UnitVector>& points, std::size_t dim) {
  const std::size_t n = points.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (const auto& p : points) mean += p[dim];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (const auto& p : points) {
    const double d = p[dim] - mean;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(n - 1));
}

KdeSide make_side(std::vector<UnitVector> points, const SearchSpace& space,
                  const SamplerParams& params, double resolution_count) {
  KdeSide side;
  side.points = std::move(points);
  const std::size_t d = space.dimension();
  side.bandwidths.assign(d, 0.0);
  side.cat_smoothing.assign(d, 0.0);
  const double n = static_cast<double>(side.points.size());
  // the spread floor keeps a clump of near-duplicate points from collapsing
  // the kernel below the resolving power of the evidence: 1/(count+1) of the
  // unit range, never finer than 1/100
  const double spread_floor = 1.0 / std::min(100.0, resolution_count + 1.0);
  for (std::size_t i = 0; i < d; ++i) {
    if (space.parameter(i).is_numeric()) {
      const double sigma = sample_stddev(side.points, i);
      const double normal_reference = 1.06 * sigma * std::pow(n, -0.2);
      side.bandwidths[i] =
          std::min(1.0, std::max({params.min_bandwidth, spread_floor, normal_reference}));
    } else {
      side.cat_smoothing[i] = params.cat_smoothing;
    }
  }
  return side;
}

double log_density_impl(const KdeSide& side, const SearchSpace& space, const UnitVector& u) {
  if (side.points.empty()) throw std::invalid_argument("density of an empty point set");
  const std::size_t d = space.dimension();
  if (u.size() != d) throw std::invalid_argument("unit vector has wrong dimension");
  double max_log = -std::numeric_limits<double>::infinity();
  std::vector<double> logs;
  logs.reserve(side.points.size());
  for (const auto& point : side.points) {
    double lp = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const ParameterSpec& p = space.parameter(i);
      if (p.is_numeric()) {
        lp += truncated_gaussian_log_pdf(u[i], point[i], side.bandwidths[i]);
      } else {
        const double lambda = side.cat_smoothing[i];
        const double k = static_cast<double>(p.cardinality());
        lp += std::log(u[i] == point[i] ? (1.0 - lambda) : lambda / (k - 1.0));
      }
    }
    logs.push_back(lp);
    max_log = std::max(max_log, lp);
  }
  double sum = 0.0;
  for (double lp : logs) sum += std::exp(lp - max_log);
  return max_log + std::log(sum / static_cast<double>(side.points.size()));
}

}  // namespace

SamplerParams SamplerParams::defaults_for(const SearchSpace& space) {
  SamplerParams p;
  p.min_points_per_model = static_cast<int>(space.dimension()) + 1;
  p.validate();
  return p;
}

void SamplerParams::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in (0,1)");
  if (!(random_fraction >= 0.0 && random_fraction <= 1.0))
    throw std::invalid_argument("random_fraction must be in [0,1]");
  if (n_candidates < 1) throw std::invalid_argument("n_candidates must be positive");
  if (min_points_per_model < 1)
    throw std::invalid_argument("min_points_per_model must be positive");
  if (!(bandwidth_factor >= 1.0)) throw std::invalid_argument("bandwidth_factor must be >= 1");
  if (!(min_bandwidth > 0.0)) throw std::invalid_argument("min_bandwidth must be positive");
  if (!(cat_smoothing >= 0.0 && cat_smoothing < 1.0))
    throw std::invalid_argument("cat_smoothing must be in [0,1)");
}

double kde_density(const KdeSide& side, const SearchSpace& space, const UnitVector& u) {
  return std::exp(log_density_impl(side, space, u));
}

double kde_log_density(const KdeSide& side, const SearchSpace& space, const UnitVector& u) {
  return log_density_impl(side, space, u);
}

std::optional<KdeModel> fit_models(const RunHistory& history, const SearchSpace& space,
                                   double budget, const SamplerParams& params) {
  const int n_min = params.min_points_per_model;
  auto successes = history.successes_at(budget);
  const auto n = static_cast<int>(successes.size());
  if (n < n_min + 2) return std::nullopt;

  // rank by loss; ties keep submission order
  std::vector<std::size_t> order(successes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return *successes[a]->loss < *successes[b]->loss;
  });

  const auto n_good = static_cast<std::size_t>(
      std::max(n_min, static_cast<int>(std::floor(params.gamma * static_cast<double>(n)))));
  std::vector<UnitVector> good_points, bad_points;
  for (std::size_t r = 0; r < order.size(); ++r) {
    UnitVector u = space.to_unit(successes[order[r]]->config);
    if (r < n_good)
      good_points.push_back(std::move(u));
    else
      bad_points.push_back(std::move(u));
  }

  // models below the top rung resolve no finer than their own side's size:
  // their labels carry the fidelity gap, so overconfident kernels would lock
  // onto low-budget artifacts. The top-rung model's labels are exact, so its
  // kernels sharpen with the full success count at that budget.
  const auto& ladder = history.ladder();
  const auto rung = ladder.index_of(budget);
  const bool at_top = rung.has_value() && *rung + 1 == ladder.size();

  KdeModel model;
  model.budget = budget;
  const double good_count = at_top ? n : static_cast<double>(good_points.size());
  const double bad_count = at_top ? n : static_cast<double>(bad_points.size());
  model.good = make_side(std::move(good_points), space, params, good_count);
  model.bad = make_side(std::move(bad_points), space, params, bad_count);
  return model;
}

std::optional<double> select_model_budget(const RunHistory& history,
                                          const SamplerParams& params) {
  const auto& budgets = history.ladder().budgets;
  for (auto it = budgets.rbegin(); it != budgets.rend(); ++it) {
    const auto n = static_cast<int>(history.successes_at(*it).size());
    if (n >= params.min_points_per_model + 2) return *it;
  }
  return std::nullopt;
}

Configuration propose(const std::optional<KdeModel>& model, const SearchSpace& space,
                      const SamplerParams& params, Rng& rng) {
  if (!model.has_value()) return space.sample_uniform(rng);
  if (rng.uniform() < params.random_fraction) return space.sample_uniform(rng);

  const std::size_t d = space.dimension();
  std::vector<UnitVector> candidates;
  candidates.reserve(static_cast<std::size_t>(params.n_candidates));
  for (int c = 0; c < params.n_candidates; ++c) {
    const UnitVector& center = model->good.points[rng.below(model->good.points.size())];
    UnitVector u(d);
    for (std::size_t i = 0; i < d; ++i) {
      const ParameterSpec& p = space.parameter(i);
      if (p.is_numeric()) {
        // candidates are drawn from a widened kernel for exploration; the
        // selection ratio below still uses the fitted bandwidths
        const double b = params.bandwidth_factor * model->good.bandwidths[i];
        double x;
        int guard = 0;
        do {
          x = center[i] + b * rng.normal();
        } while ((x < 0.0 || x > 1.0) && ++guard < 1000);
        u[i] = std::clamp(x, 0.0, 1.0);
      } else {
        const double lambda = model->good.cat_smoothing[i];
        const auto k = p.cardinality();
        if (rng.uniform() < 1.0 - lambda) {
          u[i] = center[i];
        } else {
          auto other = rng.below(k - 1);
          if (static_cast<double>(other) >= center[i]) ++other;
          u[i] = static_cast<double>(other);
        }
      }
    }
    // snap through the configuration so integer dims score at the value
    // actually proposed
    candidates.push_back(space.to_unit(space.from_unit(u)));
  }

  const std::vector<double> scores = kde_log_ratio_batch(*model, space, candidates);
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return space.from_unit(candidates[best]);
}

std::vector<double> kde_log_ratio_batch_serial(const KdeModel& model, const SearchSpace& space,
                                               const std::vector<UnitVector>& candidates) {
  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    scores[i] = log_density_impl(model.good, space, candidates[i]) -
                log_density_impl(model.bad, space, candidates[i]);
  return scores;
}

std::vector<double> kde_log_ratio_batch(const KdeModel& model, const SearchSpace& space,
                                        const std::vector<UnitVector>& candidates) {
  std::vector<double> scores(candidates.size());
  const auto n = static_cast<std::int64_t>(candidates.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    scores[static_cast<std::size_t>(i)] =
        log_density_impl(model.good, space, candidates[static_cast<std::size_t>(i)]) -
        log_density_impl(model.bad, space, candidates[static_cast<std::size_t>(i)]);
  return scores;
}

namespace {

constexpr std::size_t kMcChunk = 4096;

/// Per-chunk partial sums with chunk-derived RNG streams: the result does not
/// depend on how chunks are distributed over threads.
double mc_chunk_sum(const KdeSide& side, const SearchSpace& space, std::size_t chunk_index,
                    std::size_t count, std::uint64_t seed) {
  Rng rng(splitmix64(seed ^ splitmix64(0xC0FFEEULL + chunk_index)));
  const std::size_t d = space.dimension();
  UnitVector u(d);
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const ParameterSpec& p = space.parameter(j);
      u[j] = p.is_numeric() ? rng.uniform() : static_cast<double>(rng.below(p.cardinality()));
    }
    sum += std::exp(log_density_impl(side, space, u));
  }
  return sum;
}

double mc_domain_measure(const SearchSpace& space) {
  double measure = 1.0;
  for (const auto& p : space.parameters())
    if (!p.is_numeric()) measure *= static_cast<double>(p.cardinality());
  return measure;
}

}  // namespace

double kde_integral_mc_serial(const KdeSide& side, const SearchSpace& space, std::size_t n_points,
                              std::uint64_t seed) {
  const std::size_t n_chunks = (n_points + kMcChunk - 1) / kMcChunk;
  double total = 0.0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    const std::size_t count = std::min(kMcChunk, n_points - c * kMcChunk);
    total += mc_chunk_sum(side, space, c, count, seed);
  }
  return total / static_cast<double>(n_points) * mc_domain_measure(space);
}

double kde_integral_mc(const KdeSide& side, const SearchSpace& space, std::size_t n_points,
                       std::uint64_t seed) {
  const std::size_t n_chunks = (n_points + kMcChunk - 1) / kMcChunk;
  std::vector<double> partial(n_chunks);
  const auto n = static_cast<std::int64_t>(n_chunks);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t c = 0; c < n; ++c) {
    const auto ci = static_cast<std::size_t>(c);
    const std::size_t count = std::min(kMcChunk, n_points - ci * kMcChunk);
    partial[ci] = mc_chunk_sum(side, space, ci, count, seed);
  }
  // fixed-order reduction keeps the estimate identical to the serial path
  double total = 0.0;
  for (double p : partial) total += p;
  return total / static_cast<double>(n_points) * mc_domain_measure(space);
}

}  // namespace kdeband
