#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "kdeband/rng.hpp"
#include "kdeband/space.hpp"

using namespace kdeband;

TEST_CASE("parse_space reads documents in order and rejects bad ones") {
  const SearchSpace space = parse_space(R"({"parameters": [
    {"name": "x", "kind": "continuous", "low": 0, "high": 1, "log": false},
    {"name": "n", "kind": "integer", "low": 1, "high": 16, "log": true},
    {"name": "op", "kind": "categorical", "choices": ["a", "b", "c"]}
  ]})");
  REQUIRE(space.dimension() == 3);
  CHECK(space.parameter(0).name == "x");
  CHECK(space.parameter(1).kind == ParamKind::integer);
  CHECK(space.parameter(1).log_scale);
  CHECK(space.parameter(2).choices.size() == 3);
  CHECK(space.index_of("op") == 2);

  CHECK_THROWS_AS(parse_space("not a document"), std::invalid_argument);
  CHECK_THROWS_AS(parse_space(R"({"parameters": [
    {"name": "x", "kind": "continuous", "low": 1, "high": 1, "log": false}
  ]})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_space(R"({"parameters": [
    {"name": "x", "kind": "continuous", "low": 0, "high": 1, "log": true}
  ]})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_space(R"({"parameters": [
    {"name": "c", "kind": "categorical", "choices": ["only"]}
  ]})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_space(R"({"parameters": [
    {"name": "x", "kind": "continuous", "low": 0, "high": 1, "log": false},
    {"name": "x", "kind": "continuous", "low": 0, "high": 2, "log": false}
  ]})"),
                  std::invalid_argument);
}

TEST_CASE("unit transform maps bounds and log midpoints") {
  const SearchSpace space = parse_space(R"({"parameters": [
    {"name": "lr", "kind": "continuous", "low": 0.001, "high": 1.0, "log": true},
    {"name": "blocks", "kind": "integer", "low": 1, "high": 16, "log": true}
  ]})");

  Configuration lo;
  lo.values["lr"] = 0.001;
  lo.values["blocks"] = std::int64_t{4};
  UnitVector u = space.to_unit(lo);
  CHECK(u[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(u[1] == doctest::Approx(0.5).epsilon(1e-12));

  Configuration mid = lo;
  mid.values["lr"] = 0.0316227766;
  CHECK(space.to_unit(mid)[0] == doctest::Approx(0.5).epsilon(1e-8));

  const Configuration back = space.from_unit({0.0, 0.5});
  CHECK(std::get<double>(back.values.at("lr")) == doctest::Approx(0.001).epsilon(1e-12));
  CHECK(std::get<std::int64_t>(back.values.at("blocks")) == 4);

  CHECK_THROWS_AS(space.from_unit({1.5, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(space.from_unit({0.0}), std::invalid_argument);
}

TEST_CASE("from_unit/to_unit round trips") {
  const SearchSpace space = parse_space(R"({"parameters": [
    {"name": "a", "kind": "continuous", "low": 0.001, "high": 1.0, "log": true},
    {"name": "b", "kind": "continuous", "low": -5, "high": 5, "log": false},
    {"name": "n", "kind": "integer", "low": 1, "high": 100, "log": false},
    {"name": "c", "kind": "categorical", "choices": ["p", "q", "r"]}
  ]})");
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Configuration config = space.sample_uniform(rng);
    space.validate(config);
    const UnitVector u = space.to_unit(config);
    const UnitVector again = space.to_unit(space.from_unit(u));
    CHECK(again[0] == doctest::Approx(u[0]).epsilon(1e-9));
    CHECK(again[1] == doctest::Approx(u[1]).epsilon(1e-9));
    CHECK(space.from_unit(u) == config);
    for (std::size_t d = 0; d < 2; ++d) {
      CHECK(u[d] >= 0.0);
      CHECK(u[d] <= 1.0);
    }
  }
}

TEST_CASE("sample_uniform is uniform in the transformed scale") {
  const SearchSpace space = parse_space(R"({"parameters": [
    {"name": "lr", "kind": "continuous", "low": 0.001, "high": 1.0, "log": true},
    {"name": "pick", "kind": "categorical", "choices": ["left", "right"]}
  ]})");
  Rng rng(5);
  int left = 0, below_geo_mid = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Configuration config = space.sample_uniform(rng);
    if (std::get<std::string>(config.values.at("pick")) == "left") ++left;
    if (std::get<double>(config.values.at("lr")) < 0.0316227766) ++below_geo_mid;
  }
  CHECK(std::abs(left / double(n) - 0.5) < 0.02);
  CHECK(std::abs(below_geo_mid / double(n) - 0.5) < 0.02);
}

TEST_CASE("serialization round trip") {
  const SearchSpace space = joint_space();
  CHECK(parse_space(serialize_space(space)) == space);
}

TEST_CASE("built-in joint space matches its published shape") {
  const SearchSpace space = joint_space();
  REQUIRE(space.dimension() == 17);

  const ParameterSpec& batch = space.parameter(space.index_of("batch_size"));
  CHECK(batch.kind == ParamKind::integer);
  CHECK(batch.low == 32);
  CHECK(batch.high == 128);
  CHECK(batch.log_scale);

  const ParameterSpec& lr = space.parameter(space.index_of("learning_rate"));
  CHECK(lr.low == doctest::Approx(0.001));
  CHECK(lr.high == doctest::Approx(1.0));
  CHECK(lr.log_scale);

  CHECK(space.parameter(space.index_of("res_blocks_1")).high == 16);
  CHECK(space.parameter(space.index_of("widen_factor_2")).low == doctest::Approx(0.5));
  CHECK(space.parameter(space.index_of("filters_0")).low == 8);

  space.validate(joint_space_best_config());
}

TEST_CASE("cell space has 5 categoricals per block") {
  for (int b = 1; b <= 8; ++b) {
    CHECK(cell_space(b).dimension() == static_cast<std::size_t>(5 * b));
  }

  const SearchSpace one = cell_space(1);
  REQUIRE(one.dimension() == 5);
  CHECK(one.parameter(0).cardinality() == 2);
  CHECK(one.parameter(1).cardinality() == 2);
  CHECK(one.parameter(2).cardinality() == 13);
  CHECK(one.parameter(3).cardinality() == 13);
  CHECK(one.parameter(4).cardinality() == 2);

  const SearchSpace five = cell_space(5);
  double log_size = 0.0;
  for (const ParameterSpec& p : five.parameters()) {
    log_size += std::log2(static_cast<double>(p.cardinality()));
  }
  // product of cardinalities: (2*3*4*5*6)^2 * 13^10 * 2^5
  const double expected = 2.0 * std::log2(720.0) + 10.0 * std::log2(13.0) + 5.0;
  CHECK(log_size == doctest::Approx(expected).epsilon(1e-12));

  CHECK_THROWS_AS(cell_space(0), std::invalid_argument);
}

TEST_CASE("validate rejects incomplete, stray, and out-of-bounds configurations") {
  const SearchSpace space = parse_space(R"({"parameters": [
    {"name": "x", "kind": "continuous", "low": 0, "high": 1, "log": false},
    {"name": "c", "kind": "categorical", "choices": ["a", "b"]}
  ]})");
  Configuration good;
  good.values["x"] = 0.5;
  good.values["c"] = std::string("a");
  space.validate(good);

  Configuration missing = good;
  missing.values.erase("c");
  CHECK_THROWS_AS(space.validate(missing), std::invalid_argument);

  Configuration stray = good;
  stray.values["zzz"] = 1.0;
  CHECK_THROWS_AS(space.validate(stray), std::invalid_argument);

  Configuration out = good;
  out.values["x"] = 1.5;
  CHECK_THROWS_AS(space.validate(out), std::invalid_argument);

  Configuration badchoice = good;
  badchoice.values["c"] = std::string("nope");
  CHECK_THROWS_AS(space.validate(badchoice), std::invalid_argument);

  Configuration wrongtype = good;
  wrongtype.values["x"] = std::string("a");
  CHECK_THROWS_AS(space.validate(wrongtype), std::invalid_argument);
}
