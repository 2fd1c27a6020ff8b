#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "kdeband/analysis.hpp"
#include "kdeband/forest.hpp"
#include "kdeband/rng.hpp"
#include "kdeband/sampler.hpp"
#include "kdeband/space.hpp"

namespace {

using kdeband::Rng;
using kdeband::SearchSpace;
using kdeband::UnitVector;

double time_seconds(const std::function<void()>& fn, int repeats) {
  fn();  // warm up
  const auto start = std::chrono::steady_clock::now();
  for (int r = 0; r < repeats; ++r) fn();
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  return elapsed.count() / repeats;
}

void report(const std::string& name, double serial, double parallel) {
  std::printf("%-24s serial %8.3f ms   parallel %8.3f ms   speedup %5.2fx\n", name.c_str(),
              serial * 1e3, parallel * 1e3, serial / parallel);
}

SearchSpace make_space(std::size_t dims) {
  std::vector<kdeband::ParameterSpec> params;
  for (std::size_t i = 0; i < dims; ++i) {
    params.push_back(kdeband::ParameterSpec::make_continuous("x" + std::to_string(i), 0, 1));
  }
  return SearchSpace(std::move(params));
}

UnitVector random_point(Rng& rng, std::size_t dims) {
  UnitVector u(dims);
  for (auto& v : u) v = rng.uniform();
  return u;
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads %d\n", omp_get_max_threads());
#else
  std::printf("OpenMP disabled; parallel paths run serially\n");
#endif

  const std::size_t dims = 8;
  const SearchSpace space = make_space(dims);
  Rng rng(42);

  kdeband::KdeModel model;
  model.budget = 1.0;
  for (int i = 0; i < 64; ++i) model.good.points.push_back(random_point(rng, dims));
  for (int i = 0; i < 192; ++i) model.bad.points.push_back(random_point(rng, dims));
  model.good.bandwidths.assign(dims, 0.08);
  model.good.cat_smoothing.assign(dims, 0.0);
  model.bad.bandwidths.assign(dims, 0.12);
  model.bad.cat_smoothing.assign(dims, 0.0);

  std::vector<UnitVector> queries;
  for (int i = 0; i < 4000; ++i) queries.push_back(random_point(rng, dims));
  report("kde_log_ratio_batch",
         time_seconds([&] { kdeband::kde_log_ratio_batch_serial(model, space, queries); }, 3),
         time_seconds([&] { kdeband::kde_log_ratio_batch(model, space, queries); }, 3));

  report("kde_integral_mc",
         time_seconds([&] { kdeband::kde_integral_mc_serial(model.good, space, 100000, 7); }, 3),
         time_seconds([&] { kdeband::kde_integral_mc(model.good, space, 100000, 7); }, 3));

  std::vector<UnitVector> xs;
  std::vector<double> ys;
  for (int i = 0; i < 600; ++i) {
    xs.push_back(random_point(rng, dims));
    double y = 0.0;
    for (std::size_t d = 0; d < dims; ++d) y += (d + 1) * xs.back()[d] * xs.back()[d];
    ys.push_back(y + 0.05 * rng.normal());
  }
  kdeband::ForestParams fp;
  fp.num_trees = 30;
  fp.seed = 9;
  report("forest_fit",
         time_seconds([&] { kdeband::RegressionForest::fit_serial(space, xs, ys, fp); }, 3),
         time_seconds([&] { kdeband::RegressionForest::fit(space, xs, ys, fp); }, 3));

  const auto forest = kdeband::RegressionForest::fit(space, xs, ys, fp);
  report("fanova_importance",
         time_seconds([&] { kdeband::fanova_importance_serial(forest, space, 2, 1.0); }, 3),
         time_seconds([&] { kdeband::fanova_importance(forest, space, 2, 1.0); }, 3));

  return 0;
}
