#include <doctest.h>

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "kdeband/engine.hpp"
#include "kdeband/history.hpp"
#include "kdeband/scheduler.hpp"
#include "kdeband/space.hpp"

using namespace kdeband;

namespace {

SearchSpace line_space() {
  return SearchSpace({ParameterSpec::make_continuous("x", 0.0, 1.0)});
}

double x_of(const Configuration& c) { return std::get<double>(c.values.at("x")); }

EvalFn quadratic_eval() {
  return [](const Configuration& c, double) {
    EvalResult r;
    const double x = x_of(c);
    r.loss = (x - 0.7) * (x - 0.7);
    return r;
  };
}

Configuration dummy_config() {
  Configuration c;
  c.values["x"] = 0.5;
  return c;
}

std::map<double, int> budget_histogram(const RunHistory& h) {
  std::map<double, int> out;
  for (const auto& o : h.observations()) ++out[o.budget];
  return out;
}

/// Delegates to a local backend but drops the connection after a fixed
/// number of delivered results.
class FlakyBackend : public EvaluationBackend {
 public:
  FlakyBackend(EvalFn fn, std::size_t lanes, int deliver_before_failure)
      : inner_(std::move(fn), lanes), remaining_(deliver_before_failure) {}

  double now() const override { return inner_.now(); }
  std::size_t capacity() const override { return inner_.capacity(); }
  std::size_t in_flight() const override { return inner_.in_flight(); }
  void submit(TrialId trial_id, const Configuration& config, double budget,
              double deadline) override {
    inner_.submit(trial_id, config, budget, deadline);
  }
  CompletedJob next_result() override {
    if (remaining_ <= 0) throw EvaluatorError("connection lost");
    --remaining_;
    return inner_.next_result();
  }

 private:
  LocalBackend inner_;
  int remaining_;
};

}  // namespace

TEST_CASE("local backend delivers results in finish order, ties by submission") {
  int calls = 0;
  LocalBackend backend(
      [&](const Configuration&, double budget) {
        ++calls;
        EvalResult r;
        r.loss = 0.0;
        r.cost = budget;
        return r;
      },
      2);
  REQUIRE(backend.capacity() == 2);

  backend.submit(1, dummy_config(), 5.0, 1e9);  // lane 0: [0, 5]
  backend.submit(2, dummy_config(), 3.0, 1e9);  // lane 1: [0, 3]
  backend.submit(3, dummy_config(), 4.0, 1e9);  // lane 1 again: [3, 7]
  CHECK(backend.in_flight() == 3);
  CHECK(calls == 3);

  CompletedJob first = backend.next_result();
  CHECK(first.trial_id == 2);
  CHECK(first.finished_at == 3.0);
  CHECK(backend.now() == 3.0);
  CHECK(backend.next_result().trial_id == 1);
  CHECK(backend.next_result().trial_id == 3);
  CHECK(backend.now() == 7.0);
  CHECK_THROWS_AS(backend.next_result(), std::logic_error);

  // Equal finish times fall back to submission order.
  backend.submit(10, dummy_config(), 2.0, 1e9);
  backend.submit(11, dummy_config(), 2.0, 1e9);
  CHECK(backend.next_result().trial_id == 10);
  CHECK(backend.next_result().trial_id == 11);
}

TEST_CASE("local backend classifies failures, timeouts and bad losses") {
  LocalBackend backend(
      [](const Configuration& c, double budget) {
        const double x = x_of(c);
        EvalResult r;
        if (x < 0.25) throw std::runtime_error("diverged");
        if (x < 0.5) {
          r.cost = budget;
          return r;  // no loss reported
        }
        if (x < 0.75) {
          r.loss = std::nan("");
          r.cost = budget;
          return r;
        }
        r.loss = 0.125;
        r.cost = budget;
        return r;
      },
      1);

  Configuration c = dummy_config();
  c.values["x"] = 0.1;
  backend.submit(1, c, 1.0, 1e9);
  CompletedJob job = backend.next_result();
  CHECK(job.status == TrialStatus::failed);
  CHECK(job.info.at("error") == "diverged");

  c.values["x"] = 0.3;
  backend.submit(2, c, 1.0, 1e9);
  CHECK(backend.next_result().status == TrialStatus::failed);

  c.values["x"] = 0.6;
  backend.submit(3, c, 1.0, 1e9);
  job = backend.next_result();
  CHECK(job.status == TrialStatus::failed);
  CHECK(!job.loss.has_value());

  c.values["x"] = 0.9;
  backend.submit(4, c, 1.0, 1e9);
  job = backend.next_result();
  CHECK(job.status == TrialStatus::success);
  CHECK(job.loss == 0.125);

  // A job that would finish past its deadline fails at the deadline.
  c.values["x"] = 0.9;
  backend.submit(5, c, 100.0, backend.now() + 10.0);
  job = backend.next_result();
  CHECK(job.status == TrialStatus::failed);
  CHECK(job.info.at("timeout") == "1");
  CHECK(job.finished_at == doctest::Approx(4.0 + 10.0));

  CHECK_THROWS_AS(LocalBackend(quadratic_eval(), 0), std::invalid_argument);
}

TEST_CASE("engine runs one full bracket cycle with the expected populations") {
  const SearchSpace space = line_space();
  const BudgetLadder ladder = geometric_budgets(1.0, 9.0, 3.0);
  LocalBackend backend(quadratic_eval(), 1);
  Engine engine(space, ladder, SamplerParams::defaults_for(space), backend,
                StoppingCondition::max_total_budget(1e9), 17, 1);
  const RunHistory history = engine.run();

  // Brackets for s_max = 2: (9,3,1) at budgets (1,3,9), (5,1) at (3,9), (3) at (9).
  CHECK(history.observations().size() == 22);
  const auto hist = budget_histogram(history);
  CHECK(hist.at(1.0) == 9);
  CHECK(hist.at(3.0) == 8);
  CHECK(hist.at(9.0) == 5);
  CHECK(engine.completed_rungs() == 6);

  // Fresh trials get sequential ids starting at 1.
  TrialId max_id = 0;
  for (const auto& o : history.observations()) max_id = std::max(max_id, o.trial_id);
  CHECK(max_id == 9 + 5 + 3);

  // A trial only reaches a higher budget after succeeding at the lower one.
  std::map<TrialId, std::vector<const Observation*>> by_trial;
  for (const auto& o : history.observations()) by_trial[o.trial_id].push_back(&o);
  for (const auto& [id, obs] : by_trial) {
    for (std::size_t i = 1; i < obs.size(); ++i) {
      CHECK(obs[i]->budget > obs[i - 1]->budget);
      CHECK(obs[i - 1]->status == TrialStatus::success);
    }
  }
}

TEST_CASE("equal seeds give byte-identical runs, different seeds differ") {
  const SearchSpace space = line_space();
  const BudgetLadder ladder = geometric_budgets(1.0, 9.0, 3.0);
  const SamplerParams params = SamplerParams::defaults_for(space);

  auto run_once = [&](std::uint64_t seed) {
    LocalBackend backend(quadratic_eval(), 2);
    Engine engine(space, ladder, params, backend,
                  StoppingCondition::max_full_budget_equivalents(6.0), seed);
    return engine.run().save();
  };

  const std::string a = run_once(123);
  const std::string b = run_once(123);
  const std::string c = run_once(124);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(RunHistory::load(a).save() == a);
}

TEST_CASE("the line sink streams exactly the bytes save() returns") {
  const SearchSpace space = line_space();
  const BudgetLadder ladder = geometric_budgets(1.0, 9.0, 3.0);
  LocalBackend backend(quadratic_eval(), 2);
  Engine engine(space, ladder, SamplerParams::defaults_for(space), backend,
                StoppingCondition::max_iterations(2), 5);
  engine.meta()["note"] = "sink-test";

  std::string streamed;
  std::size_t chunks = 0;
  engine.set_line_sink([&](const std::string& chunk) {
    streamed += chunk;
    ++chunks;
  });
  const RunHistory history = engine.run();

  CHECK(streamed == history.save());
  CHECK(chunks == history.observations().size() + 1);
  CHECK(RunHistory::load(streamed).meta().at("note") == "sink-test");
}

TEST_CASE("stopping conditions cut the run at the right point") {
  const SearchSpace space = line_space();
  const BudgetLadder ladder = geometric_budgets(1.0, 9.0, 3.0);
  const SamplerParams params = SamplerParams::defaults_for(space);

  SUBCASE("max_iterations stops after the first resolved rung") {
    LocalBackend backend(quadratic_eval(), 1);
    Engine engine(space, ladder, params, backend, StoppingCondition::max_iterations(1), 3);
    const RunHistory h = engine.run();
    CHECK(h.observations().size() == 9);
    CHECK(budget_histogram(h).at(1.0) == 9);
    CHECK(engine.completed_rungs() == 1);
  }

  SUBCASE("max_total_budget counts charged budget") {
    LocalBackend backend(quadratic_eval(), 1);
    Engine engine(space, ladder, params, backend, StoppingCondition::max_total_budget(5.0), 3);
    const RunHistory h = engine.run();
    CHECK(h.observations().size() == 5);
    CHECK(full_budget_equivalents(h, 9.0) == doctest::Approx(5.0 / 9.0));
  }

  SUBCASE("max_full_budget_equivalents normalizes by the top budget") {
    LocalBackend backend(quadratic_eval(), 1);
    Engine engine(space, ladder, params, backend,
                  StoppingCondition::max_full_budget_equivalents(1.0 / 9.0), 3);
    CHECK(engine.run().observations().size() == 1);
  }

  SUBCASE("max_wall_clock reads the backend clock") {
    LocalBackend backend(quadratic_eval(), 1);
    Engine engine(space, ladder, params, backend, StoppingCondition::max_wall_clock(2.5), 3);
    const RunHistory h = engine.run();
    CHECK(h.observations().size() == 3);
    for (const auto& o : h.observations()) CHECK(o.finished_at <= 3.0);
  }

  CHECK_THROWS_AS(StoppingCondition::max_total_budget(0.0), std::invalid_argument);
  CHECK_THROWS_AS(StoppingCondition::max_iterations(-1), std::invalid_argument);
}

TEST_CASE("a stop mid-flight persists outstanding trials as pending") {
  const SearchSpace space = line_space();
  const BudgetLadder ladder = geometric_budgets(1.0, 9.0, 3.0);
  LocalBackend backend(quadratic_eval(), 2);
  Engine engine(space, ladder, SamplerParams::defaults_for(space), backend,
                StoppingCondition::max_total_budget(1.0), 3);
  const RunHistory h = engine.run();

  REQUIRE(h.observations().size() == 2);
  CHECK(h.observations()[0].status == TrialStatus::success);
  CHECK(h.observations()[1].status == TrialStatus::pending);
  CHECK(!h.observations()[1].loss.has_value());
  CHECK(full_budget_equivalents(h, 9.0) == doctest::Approx(1.0 / 9.0));
  CHECK(RunHistory::load(h.save()).save() == h.save());
}

TEST_CASE("evaluator transport errors persist pending trials and rethrow") {
  const SearchSpace space = line_space();
  const BudgetLadder ladder = geometric_budgets(1.0, 9.0, 3.0);
  FlakyBackend backend(quadratic_eval(), 2, 3);
  Engine engine(space, ladder, SamplerParams::defaults_for(space), backend,
                StoppingCondition::max_total_budget(1e9), 11, 1);

  std::string streamed;
  engine.set_line_sink([&](const std::string& chunk) { streamed += chunk; });
  CHECK_THROWS_AS(engine.run(), EvaluatorError);

  const RunHistory& h = engine.history();
  REQUIRE(h.observations().size() == 5);
  int pending = 0, success = 0;
  for (const auto& o : h.observations()) {
    if (o.status == TrialStatus::pending) ++pending;
    if (o.status == TrialStatus::success) ++success;
  }
  CHECK(success == 3);
  CHECK(pending == 2);

  // The streamed record is complete and loadable even after the crash.
  CHECK(streamed == h.save());
  CHECK(RunHistory::load(streamed).observations().size() == 5);
}

TEST_CASE("failed evaluations are recorded and never promoted") {
  const SearchSpace space = line_space();
  const BudgetLadder ladder = geometric_budgets(1.0, 9.0, 3.0);
  LocalBackend backend(
      [](const Configuration& c, double) {
        EvalResult r;
        const double x = x_of(c);
        if (x < 0.4) return r;  // fail the low region
        r.loss = x;
        return r;
      },
      1);
  Engine engine(space, ladder, SamplerParams::defaults_for(space), backend,
                StoppingCondition::max_total_budget(1e9), 29, 1);
  const RunHistory h = engine.run();

  int failed = 0;
  for (const auto& o : h.observations()) {
    REQUIRE(o.status != TrialStatus::pending);
    if (o.status == TrialStatus::failed) {
      ++failed;
      CHECK(!o.loss.has_value());
    }
  }
  CHECK(failed > 0);

  std::map<TrialId, std::vector<const Observation*>> by_trial;
  for (const auto& o : h.observations()) by_trial[o.trial_id].push_back(&o);
  for (const auto& [id, obs] : by_trial)
    for (std::size_t i = 1; i < obs.size(); ++i)
      CHECK(obs[i - 1]->status == TrialStatus::success);
}

TEST_CASE("max_cycles repeats the bracket sequence") {
  const SearchSpace space = line_space();
  const BudgetLadder ladder = geometric_budgets(1.0, 3.0, 3.0);
  LocalBackend backend(quadratic_eval(), 1);
  Engine engine(space, ladder, SamplerParams::defaults_for(space), backend,
                StoppingCondition::max_total_budget(1e9), 13, 2);
  const RunHistory h = engine.run();

  // One cycle of s_max = 1 is (3,1) at (1,3) plus (2) at (3): 6 evaluations.
  CHECK(h.observations().size() == 12);
  CHECK(engine.completed_rungs() == 6);
}

TEST_CASE("the run wrapper matches a hand-built engine") {
  const SearchSpace space = line_space();
  const BudgetLadder ladder = geometric_budgets(1.0, 9.0, 3.0);
  const SamplerParams params = SamplerParams::defaults_for(space);

  LocalBackend b1(quadratic_eval(), 1);
  const std::string via_wrapper =
      run(space, ladder, params, b1, StoppingCondition::max_iterations(3), 99).save();

  LocalBackend b2(quadratic_eval(), 1);
  Engine engine(space, ladder, params, b2, StoppingCondition::max_iterations(3), 99);
  CHECK(engine.run().save() == via_wrapper);
}
