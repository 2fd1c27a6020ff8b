#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kdeband/history.hpp"
#include "kdeband/scheduler.hpp"
#include "kdeband/space.hpp"

using namespace kdeband;

namespace {

SearchSpace small_space() {
  return SearchSpace({
      ParameterSpec::make_continuous("lr", 1e-3, 1.0, true),
      ParameterSpec::make_integer("width", 1, 16, true),
      ParameterSpec::make_categorical("opt", {"sgd", "adam", "rmsprop"}),
  });
}

Configuration config_for(double lr, std::int64_t width, const std::string& opt) {
  Configuration c;
  c.values["lr"] = lr;
  c.values["width"] = width;
  c.values["opt"] = opt;
  return c;
}

RunHistory fresh_history() {
  return RunHistory(small_space(), geometric_budgets(400.0, 10800.0, 3.0), 42,
                    SamplerParams::defaults_for(small_space()));
}

Observation success_obs(TrialId id, double budget, double loss, double submitted,
                        double finished) {
  Observation o;
  o.trial_id = id;
  o.config = config_for(0.01, 8, "adam");
  o.budget = budget;
  o.loss = loss;
  o.status = TrialStatus::success;
  o.submitted_at = submitted;
  o.finished_at = finished;
  return o;
}

}  // namespace

TEST_CASE("history serializes one header line plus one line per observation") {
  RunHistory h = fresh_history();
  h.meta()["host"] = "unit-test";
  h.append(success_obs(0, 400.0, 0.5, 0.0, 1.0));
  Observation failed;
  failed.trial_id = 1;
  failed.config = config_for(0.1, 2, "sgd");
  failed.budget = 400.0;
  failed.status = TrialStatus::failed;
  failed.submitted_at = 0.5;
  failed.finished_at = 2.0;
  failed.info["error"] = "diverged";
  h.append(failed);

  const std::string text = h.save();
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    REQUIRE(nl != std::string::npos);
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  REQUIRE(lines.size() == 3);

  const auto header = nlohmann::json::parse(lines[0]);
  CHECK(header.at("type") == "header");
  CHECK(header.at("seed") == 42);
  CHECK(header.at("ladder").at("budgets").size() == 4);
  CHECK(header.at("meta").at("host") == "unit-test");

  const auto first = nlohmann::json::parse(lines[1]);
  CHECK(first.at("type") == "observation");
  CHECK(first.at("status") == "success");
  CHECK(first.at("loss") == 0.5);

  const auto second = nlohmann::json::parse(lines[2]);
  CHECK(second.at("status") == "failed");
  CHECK(!second.contains("loss"));
  CHECK(second.at("info").at("error") == "diverged");
}

TEST_CASE("save then load then save is byte identical and lossless") {
  RunHistory h = fresh_history();
  h.meta()["run"] = "demo";
  h.append(success_obs(0, 400.0, 0.1 + 0.2, 0.0, 1.25));
  h.append(success_obs(1, 400.0, 1e-9, 0.1, 2.5));
  Observation failed;
  failed.trial_id = 2;
  failed.config = config_for(0.5, 16, "rmsprop");
  failed.budget = 1200.0;
  failed.status = TrialStatus::failed;
  failed.submitted_at = 1.0;
  failed.finished_at = 3.0;
  h.append(failed);
  Observation pending;
  pending.trial_id = 3;
  pending.config = config_for(0.002, 1, "sgd");
  pending.budget = 3600.0;
  pending.status = TrialStatus::pending;
  pending.submitted_at = 3.5;
  pending.finished_at = 3.5;
  pending.info["worker"] = "w7";
  h.append(pending);

  const std::string first = h.save();
  RunHistory reloaded = RunHistory::load(first);
  CHECK(reloaded.save() == first);

  CHECK(reloaded.space() == h.space());
  CHECK(reloaded.ladder().budgets == h.ladder().budgets);
  CHECK(reloaded.ladder().eta == h.ladder().eta);
  CHECK(reloaded.seed() == h.seed());
  CHECK(reloaded.sampler_params().gamma == h.sampler_params().gamma);
  CHECK(reloaded.meta() == h.meta());
  REQUIRE(reloaded.observations().size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    const Observation& a = reloaded.observations()[i];
    const Observation& b = h.observations()[i];
    CHECK(a.trial_id == b.trial_id);
    CHECK(a.config == b.config);
    CHECK(a.budget == b.budget);
    CHECK(a.loss == b.loss);
    CHECK(a.status == b.status);
    CHECK(a.submitted_at == b.submitted_at);
    CHECK(a.finished_at == b.finished_at);
    CHECK(a.info == b.info);
  }
}

TEST_CASE("append rejects inconsistent observations") {
  RunHistory h = fresh_history();

  Observation no_loss = success_obs(0, 400.0, 0.5, 0.0, 1.0);
  no_loss.loss.reset();
  CHECK_THROWS_AS(h.append(no_loss), std::invalid_argument);

  Observation nan_loss = success_obs(0, 400.0, std::nan(""), 0.0, 1.0);
  CHECK_THROWS_AS(h.append(nan_loss), std::invalid_argument);

  Observation failed_with_loss = success_obs(0, 400.0, 0.5, 0.0, 1.0);
  failed_with_loss.status = TrialStatus::failed;
  CHECK_THROWS_AS(h.append(failed_with_loss), std::invalid_argument);

  Observation backwards = success_obs(0, 400.0, 0.5, 2.0, 1.0);
  CHECK_THROWS_AS(h.append(backwards), std::invalid_argument);

  h.append(success_obs(0, 400.0, 0.5, 0.0, 1.0));
  CHECK_THROWS_AS(h.append(success_obs(0, 400.0, 0.4, 1.0, 2.0)), std::invalid_argument);
  CHECK_NOTHROW(h.append(success_obs(0, 1200.0, 0.4, 1.0, 2.0)));
  CHECK_NOTHROW(h.append(success_obs(1, 400.0, 0.6, 1.0, 2.0)));
}

TEST_CASE("successes_at filters by exact budget in submission order") {
  RunHistory h = fresh_history();
  h.append(success_obs(0, 400.0, 0.5, 0.0, 1.0));
  h.append(success_obs(1, 1200.0, 0.4, 0.0, 1.0));
  h.append(success_obs(2, 400.0 * (1.0 + 1e-10), 0.3, 0.0, 1.0));
  Observation failed;
  failed.trial_id = 3;
  failed.config = config_for(0.01, 8, "adam");
  failed.budget = 400.0;
  failed.status = TrialStatus::failed;
  h.append(failed);
  h.append(success_obs(4, 401.0, 0.2, 0.0, 1.0));

  auto at_400 = h.successes_at(400.0);
  REQUIRE(at_400.size() == 2);
  CHECK(at_400[0]->trial_id == 0);
  CHECK(at_400[1]->trial_id == 2);
  CHECK(h.successes_at(1200.0).size() == 1);
  CHECK(h.successes_at(3600.0).empty());
}

TEST_CASE("incumbent lives at the largest budget with a success") {
  RunHistory h = fresh_history();
  CHECK(!incumbent_at(h, 100.0).has_value());

  h.append(success_obs(0, 400.0, 0.5, 0.0, 1.0));
  h.append(success_obs(1, 400.0, 0.3, 0.0, 2.0));
  auto inc = incumbent_at(h, 2.0);
  REQUIRE(inc.has_value());
  CHECK(inc->second == 0.3);
  CHECK(!incumbent_at(h, 0.5).has_value());

  // A higher-budget success takes over even with a worse loss.
  h.append(success_obs(2, 1200.0, 0.9, 1.0, 3.0));
  inc = incumbent_at(h, 3.0);
  REQUIRE(inc.has_value());
  CHECK(inc->second == 0.9);
  // Before it finished, the 400-budget incumbent still stands.
  CHECK(incumbent_at(h, 2.5)->second == 0.3);

  // Same budget: lower loss wins; equal loss: earlier finish wins.
  h.append(success_obs(3, 1200.0, 0.7, 1.0, 4.0));
  CHECK(incumbent_at(h, 4.0)->second == 0.7);
  Observation tie = success_obs(4, 1200.0, 0.7, 1.0, 5.0);
  tie.config = config_for(0.9, 1, "sgd");
  h.append(tie);
  CHECK(incumbent_at(h, 5.0)->first == h.observations()[3].config);

  // Failures never hold the incumbent.
  Observation failed;
  failed.trial_id = 5;
  failed.config = config_for(0.01, 8, "adam");
  failed.budget = 3600.0;
  failed.status = TrialStatus::failed;
  failed.submitted_at = 5.0;
  failed.finished_at = 6.0;
  h.append(failed);
  CHECK(incumbent_at(h, 6.0)->second == 0.7);
}

TEST_CASE("incumbent trajectory is a weakly decreasing envelope over time") {
  RunHistory h = fresh_history();
  h.append(success_obs(0, 400.0, 0.5, 0.0, 1.0));
  h.append(success_obs(1, 400.0, 0.3, 0.0, 2.0));
  // Budget steps up but the loss is worse than anything recorded: no point.
  h.append(success_obs(2, 1200.0, 0.8, 1.0, 3.0));
  h.append(success_obs(3, 1200.0, 0.25, 1.0, 4.0));
  h.append(success_obs(4, 1200.0, 0.4, 2.0, 5.0));
  h.append(success_obs(5, 1200.0, 0.1, 2.0, 6.0));

  const auto points = incumbent_trajectory(h);
  REQUIRE(points.size() == 4);
  CHECK(points[0].trial_id == 0);
  CHECK(points[0].loss == 0.5);
  CHECK(points[1].trial_id == 1);
  CHECK(points[1].loss == 0.3);
  CHECK(points[2].trial_id == 3);
  CHECK(points[2].loss == 0.25);
  CHECK(points[3].trial_id == 5);
  CHECK(points[3].loss == 0.1);
  for (std::size_t i = 1; i < points.size(); ++i) {
    CHECK(points[i].time > points[i - 1].time);
    CHECK(points[i].loss <= points[i - 1].loss);
  }

  CHECK(incumbent_trajectory(fresh_history()).empty());
}

TEST_CASE("budget accounting sums non-pending budgets against b_max") {
  RunHistory h = fresh_history();
  h.append(success_obs(0, 400.0, 0.5, 0.0, 1.0));
  h.append(success_obs(1, 400.0, 0.4, 0.0, 1.0));
  Observation failed;
  failed.trial_id = 2;
  failed.config = config_for(0.01, 8, "adam");
  failed.budget = 400.0;
  failed.status = TrialStatus::failed;
  h.append(failed);
  h.append(success_obs(3, 1200.0, 0.3, 1.0, 2.0));
  Observation pending;
  pending.trial_id = 4;
  pending.config = config_for(0.01, 8, "adam");
  pending.budget = 3600.0;
  pending.status = TrialStatus::pending;
  h.append(pending);

  // 3 * 400 + 1200 = 2400 charged; the pending trial is not.
  CHECK(full_budget_equivalents(h, 10800.0) == doctest::Approx(2400.0 / 10800.0));

  CHECK_THROWS_AS(full_budget_equivalents(h, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(full_budget_equivalents(h, -1.0), std::invalid_argument);
}

TEST_CASE("256 top-budget runs cost exactly 256 full-budget equivalents") {
  RunHistory h = fresh_history();
  const double b_max = h.ladder().max();
  REQUIRE(b_max == 10800.0);
  for (TrialId id = 0; id < 256; ++id)
    h.append(success_obs(id, b_max, 0.5, static_cast<double>(id), static_cast<double>(id) + 1.0));
  // 256 * 10800 = 2,764,800 seconds, an exact integer sum in doubles.
  CHECK(full_budget_equivalents(h, b_max) == 256.0);
}

TEST_CASE("load rejects malformed history documents") {
  CHECK_THROWS_AS(RunHistory::load(""), std::invalid_argument);
  CHECK_THROWS_AS(RunHistory::load("{\"type\":\"observation\"}\n"), std::invalid_argument);
  CHECK_THROWS_AS(RunHistory::load("not json\n"), std::invalid_argument);

  RunHistory h = fresh_history();
  h.append(success_obs(0, 400.0, 0.5, 0.0, 1.0));
  std::string text = h.save();

  // Corrupt the observation status.
  std::string bad_status = text;
  const std::string needle = "\"status\":\"success\"";
  bad_status.replace(bad_status.find(needle), needle.size(), "\"status\":\"finished\"");
  CHECK_THROWS_AS(RunHistory::load(bad_status), std::invalid_argument);

  // Truncate the last line so it is not valid JSON.
  std::string truncated = text.substr(0, text.size() - 3);
  CHECK_THROWS_AS(RunHistory::load(truncated), std::invalid_argument);

  // A second header mid-stream is an unexpected record type.
  std::string doubled = text + RunHistory::header_line(h.space(), h.ladder(), 1,
                                                       h.sampler_params(), {}) +
                        "\n";
  CHECK_THROWS_AS(RunHistory::load(doubled), std::invalid_argument);
}
