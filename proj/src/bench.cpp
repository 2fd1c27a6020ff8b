#include "kdeband/bench.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "kdeband/rng.hpp"

namespace kdeband {

void ArchConfig::validate() const {
  if (filters0 < 8 || filters0 > 32)
    throw std::invalid_argument("filters0 must lie in [8, 32]");
  for (int r : res_blocks)
    if (r < 1 || r > 16) throw std::invalid_argument("res_blocks must lie in [1, 16]");
  for (int b : res_branches)
    if (b < 1 || b > 5) throw std::invalid_argument("res_branches must lie in [1, 5]");
  for (double w : widen_factors)
    if (!(w >= 0.5 && w <= 8.0))
      throw std::invalid_argument("widen_factors must lie in [0.5, 8.0]");
}

namespace {

int round_half_away(double x) {
  return static_cast<int>(x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

}  // namespace

std::array<int, 4> filters_sequence(const ArchConfig& a) {
  std::array<int, 4> f{};
  f[0] = a.filters0;
  for (int j = 0; j < 3; ++j)
    f[static_cast<std::size_t>(j) + 1] =
        std::max(1, round_half_away(a.widen_factors[static_cast<std::size_t>(j)] *
                                    f[static_cast<std::size_t>(j)]));
  return f;
}

std::int64_t count_parameters(const ArchConfig& a, int classes) {
  const auto f = filters_sequence(a);
  std::int64_t total = 3LL * f[0] * 9 + 2LL * f[0];  // stem conv + batch-norm
  for (std::size_t j = 0; j < 3; ++j) {
    const std::int64_t c_wide = f[j + 1];
    for (int block = 0; block < a.res_blocks[j]; ++block) {
      const std::int64_t c_in = block == 0 ? f[j] : c_wide;
      const std::int64_t branch =
          9 * c_in * c_wide + 2 * c_wide + 9 * c_wide * c_wide + 2 * c_wide;
      total += branch * a.res_branches[j];
      if (c_in != c_wide) total += c_in * c_wide + 2 * c_wide;  // projection shortcut
    }
  }
  total += static_cast<std::int64_t>(f[3]) * classes + classes;  // classifier
  return total;
}

namespace {

std::int64_t int_value(const Configuration& config, const std::string& name) {
  const auto it = config.values.find(name);
  if (it == config.values.end())
    throw std::invalid_argument("configuration misses parameter '" + name + "'");
  if (std::holds_alternative<std::int64_t>(it->second)) return std::get<std::int64_t>(it->second);
  if (std::holds_alternative<double>(it->second)) {
    const double v = std::get<double>(it->second);
    if (v != std::floor(v)) throw std::invalid_argument("parameter '" + name + "' is not whole");
    return static_cast<std::int64_t>(v);
  }
  throw std::invalid_argument("parameter '" + name + "' is not numeric");
}

double real_value(const Configuration& config, const std::string& name) {
  const auto it = config.values.find(name);
  if (it == config.values.end())
    throw std::invalid_argument("configuration misses parameter '" + name + "'");
  if (std::holds_alternative<double>(it->second)) return std::get<double>(it->second);
  if (std::holds_alternative<std::int64_t>(it->second))
    return static_cast<double>(std::get<std::int64_t>(it->second));
  throw std::invalid_argument("parameter '" + name + "' is not numeric");
}

}  // namespace

ArchConfig arch_from_configuration(const Configuration& config) {
  ArchConfig a;
  a.filters0 = static_cast<int>(int_value(config, "filters_0"));
  for (int j = 0; j < 3; ++j) {
    const std::string suffix = "_" + std::to_string(j + 1);
    a.res_blocks[static_cast<std::size_t>(j)] =
        static_cast<int>(int_value(config, "res_blocks" + suffix));
    a.res_branches[static_cast<std::size_t>(j)] =
        static_cast<int>(int_value(config, "res_branches" + suffix));
    a.widen_factors[static_cast<std::size_t>(j)] =
        real_value(config, "widen_factor" + suffix);
  }
  a.validate();
  return a;
}

namespace {

/// Smooth seeded field with range [-1, 1]: one sine wave across the cube
/// whose frequency vector and phase come from the seed.
double bias_field(const UnitVector& u, std::uint64_t seed) {
  Rng rng(splitmix64(seed ^ 0x9E3779B97F4A7C15ULL));
  double arg = rng.uniform(0.0, 6.283185307179586);
  for (double coord : u) arg += rng.uniform(2.0, 6.0) * coord;
  return std::sin(arg);
}

double noise_draw(const UnitVector& u, double budget, std::uint64_t seed) {
  std::uint64_t h = splitmix64(seed ^ 0xD1B54A32D192ED03ULL);
  for (double coord : u) {
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof coord);
    std::memcpy(&bits, &coord, sizeof bits);
    h = hash_combine(h, bits);
  }
  std::uint64_t budget_bits;
  std::memcpy(&budget_bits, &budget, sizeof budget_bits);
  h = hash_combine(h, budget_bits);
  Rng rng(h);
  return rng.normal();
}

}  // namespace

double synthetic_eval(const SyntheticBenchmark& b, const UnitVector& u, double budget,
                      std::uint64_t seed) {
  if (!(budget > 0.0)) throw std::invalid_argument("budget must be positive");
  if (u.size() != b.dimension || b.optimum.size() != b.dimension)
    throw std::invalid_argument("benchmark dimension mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - b.optimum[i];
    loss += d * d;
  }
  if (b.fidelity_bias > 0.0)
    loss += b.fidelity_bias * (b.b_max / budget - 1.0) * bias_field(u, seed);
  if (b.noise_scale > 0.0) loss += b.noise_scale * noise_draw(u, budget, seed);
  return loss;
}

double synthetic_eval(const SyntheticBenchmark& b, const SearchSpace& space,
                      const Configuration& config, double budget, std::uint64_t seed) {
  return synthetic_eval(b, space.to_unit(config), budget, seed);
}

namespace {

SearchSpace cube_space(std::size_t dims) {
  std::vector<ParameterSpec> params;
  params.reserve(dims);
  for (std::size_t i = 0; i < dims; ++i)
    params.push_back(ParameterSpec::make_continuous("x" + std::to_string(i), 0.0, 1.0, false));
  return SearchSpace(std::move(params));
}

}  // namespace

EvalFn NamedBenchmark::make_eval(std::uint64_t seed) const {
  if (name == "arch-demo") {
    const SyntheticBenchmark synth = synthetic;
    const SearchSpace s = space;
    return [synth, s, seed](const Configuration& config, double budget) {
      const ArchConfig arch = arch_from_configuration(config);
      const UnitVector u = s.to_unit(config);
      double loss = std::log10(static_cast<double>(count_parameters(arch))) / 8.0;
      if (synth.fidelity_bias > 0.0)
        loss += synth.fidelity_bias * (synth.b_max / budget - 1.0) * bias_field(u, seed);
      EvalResult r;
      r.loss = loss;
      return r;
    };
  }
  const SyntheticBenchmark synth = synthetic;
  const SearchSpace s = space;
  return [synth, s, seed](const Configuration& config, double budget) {
    EvalResult r;
    r.loss = synthetic_eval(synth, s, config, budget, seed);
    return r;
  };
}

NamedBenchmark bundled_benchmark(const std::string& name) {
  NamedBenchmark b;
  b.name = name;
  if (name == "synthetic-2d") {
    b.space = cube_space(2);
    b.ladder = geometric_budgets(1.0, 27.0, 3.0);
    b.synthetic.dimension = 2;
    b.synthetic.optimum = {0.95, 0.05};
    b.synthetic.fidelity_bias = 0.08;
    b.synthetic.noise_scale = 0.01;
    b.synthetic.b_max = b.ladder.max();
    return b;
  }
  if (name == "corr-demo") {
    b.space = cube_space(3);
    b.ladder = geometric_budgets(1.0, 27.0, 3.0);
    b.synthetic.dimension = 3;
    b.synthetic.optimum = {0.3, 0.6, 0.2};
    b.synthetic.fidelity_bias = 0.6;
    b.synthetic.noise_scale = 0.0;
    b.synthetic.b_max = b.ladder.max();
    return b;
  }
  if (name == "arch-demo") {
    b.space = joint_space();
    b.ladder = geometric_budgets(400.0, 10800.0, 3.0);
    b.synthetic.dimension = b.space.dimension();
    b.synthetic.optimum.assign(b.space.dimension(), 0.5);
    b.synthetic.fidelity_bias = 0.05;
    b.synthetic.noise_scale = 0.0;
    b.synthetic.b_max = b.ladder.max();
    return b;
  }
  throw std::invalid_argument("unknown benchmark '" + name + "'");
}

std::vector<std::string> bundled_benchmark_names() {
  return {"synthetic-2d", "corr-demo", "arch-demo"};
}

}  // namespace kdeband
