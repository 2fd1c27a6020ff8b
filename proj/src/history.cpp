#include "kdeband/history.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "kdeband/json_util.hpp"

namespace kdeband {

using nlohmann::json;

RunHistory::RunHistory(SearchSpace space, BudgetLadder ladder, std::uint64_t seed,
                       SamplerParams sampler)
    : space_(std::move(space)), ladder_(std::move(ladder)), seed_(seed),
      sampler_params_(sampler) {}

void RunHistory::append(Observation obs) {
  if (obs.status == TrialStatus::success &&
      (!obs.loss.has_value() || !std::isfinite(*obs.loss)))
    throw std::invalid_argument("successful observation requires a finite loss");
  if (obs.status == TrialStatus::failed && obs.loss.has_value())
    throw std::invalid_argument("failed observation must not carry a loss");
  if (obs.finished_at < obs.submitted_at)
    throw std::invalid_argument("observation timestamps out of order");
  for (const auto& o : observations_)
    if (o.trial_id == obs.trial_id && o.budget == obs.budget)
      throw std::invalid_argument("duplicate (trial, budget) observation");
  observations_.push_back(std::move(obs));
}

std::vector<const Observation*> RunHistory::successes_at(double budget) const {
  std::vector<const Observation*> out;
  for (const auto& o : observations_) {
    if (o.status != TrialStatus::success) continue;
    if (std::abs(o.budget - budget) <= 1e-9 * std::max(1.0, std::abs(budget)))
      out.push_back(&o);
  }
  return out;
}

namespace {

const char* status_name(TrialStatus s) {
  switch (s) {
    case TrialStatus::success: return "success";
    case TrialStatus::failed: return "failed";
    case TrialStatus::pending: return "pending";
  }
  return "pending";
}

TrialStatus status_from_name(const std::string& s) {
  if (s == "success") return TrialStatus::success;
  if (s == "failed") return TrialStatus::failed;
  if (s == "pending") return TrialStatus::pending;
  throw std::invalid_argument("unknown status '" + s + "'");
}

}  // namespace

std::string RunHistory::header_line(const SearchSpace& space, const BudgetLadder& ladder,
                                    std::uint64_t seed, const SamplerParams& params,
                                    const std::map<std::string, std::string>& meta) {
  json j;
  j["type"] = "header";
  j["version"] = 1;
  j["space"] = json::parse(serialize_space(space));
  j["ladder"] = {{"budgets", ladder.budgets}, {"eta", ladder.eta}};
  j["seed"] = seed;
  j["sampler_params"] = sampler_params_to_json(params);
  j["meta"] = meta;
  return j.dump();
}

std::string RunHistory::observation_line(const Observation& obs) {
  json j;
  j["type"] = "observation";
  j["trial_id"] = obs.trial_id;
  j["config"] = configuration_to_json(obs.config);
  j["budget"] = obs.budget;
  j["status"] = status_name(obs.status);
  if (obs.loss.has_value()) j["loss"] = *obs.loss;
  j["submitted_at"] = obs.submitted_at;
  j["finished_at"] = obs.finished_at;
  j["info"] = obs.info;
  return j.dump();
}

std::string RunHistory::save() const {
  std::string out = header_line(space_, ladder_, seed_, sampler_params_, meta_);
  out.push_back('\n');
  for (const auto& obs : observations_) {
    out += observation_line(obs);
    out.push_back('\n');
  }
  return out;
}

RunHistory RunHistory::load(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty history document");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed history header: ") + e.what());
  }
  if (header.value("type", "") != "header")
    throw std::invalid_argument("history must start with a header record");

  SearchSpace space = parse_space(header.at("space").dump());
  BudgetLadder ladder;
  ladder.budgets = header.at("ladder").at("budgets").get<std::vector<double>>();
  ladder.eta = header.at("ladder").at("eta").get<double>();
  RunHistory history(space, ladder, header.at("seed").get<std::uint64_t>(),
                     sampler_params_from_json(header.at("sampler_params")));
  history.meta_ = header.value("meta", std::map<std::string, std::string>{});

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::invalid_argument("malformed record on line " + std::to_string(line_no) + ": " +
                                  e.what());
    }
    if (j.value("type", "") != "observation")
      throw std::invalid_argument("unexpected record type on line " + std::to_string(line_no));
    Observation obs;
    obs.trial_id = j.at("trial_id").get<TrialId>();
    obs.config = configuration_from_json(j.at("config"), space);
    obs.budget = j.at("budget").get<double>();
    obs.status = status_from_name(j.at("status").get<std::string>());
    if (j.contains("loss")) obs.loss = j.at("loss").get<double>();
    obs.submitted_at = j.at("submitted_at").get<double>();
    obs.finished_at = j.at("finished_at").get<double>();
    obs.info = j.value("info", std::map<std::string, std::string>{});
    history.append(std::move(obs));
  }
  return history;
}

std::optional<std::pair<Configuration, double>> incumbent_at(const RunHistory& history, double t) {
  const Observation* best = nullptr;
  double best_budget = -1.0;
  for (const auto& o : history.observations()) {
    if (o.status != TrialStatus::success || o.finished_at > t) continue;
    if (o.budget > best_budget * (1.0 + 1e-12)) {
      best_budget = o.budget;
      best = &o;
    } else if (std::abs(o.budget - best_budget) <= 1e-9 * std::max(1.0, best_budget)) {
      if (*o.loss < *best->loss ||
          (*o.loss == *best->loss && o.finished_at < best->finished_at))
        best = &o;
    }
  }
  if (!best) return std::nullopt;
  return std::make_pair(best->config, *best->loss);
}

std::vector<IncumbentPoint> incumbent_trajectory(const RunHistory& history) {
  std::vector<const Observation*> finished;
  for (const auto& o : history.observations())
    if (o.status == TrialStatus::success) finished.push_back(&o);
  std::stable_sort(finished.begin(), finished.end(),
                   [](const Observation* a, const Observation* b) {
                     return a->finished_at < b->finished_at;
                   });
  std::vector<IncumbentPoint> points;
  double max_budget = -1.0;
  double best_at_max = 0.0;
  for (const Observation* o : finished) {
    bool is_new_incumbent = false;
    if (o->budget > max_budget * (1.0 + 1e-12)) {
      max_budget = o->budget;
      best_at_max = *o->loss;
      is_new_incumbent = true;
    } else if (std::abs(o->budget - max_budget) <= 1e-9 * std::max(1.0, max_budget) &&
               *o->loss < best_at_max) {
      best_at_max = *o->loss;
      is_new_incumbent = true;
    }
    if (!is_new_incumbent) continue;
    if (points.empty() || best_at_max <= points.back().loss)
      points.push_back(IncumbentPoint{o->finished_at, o->trial_id, best_at_max});
  }
  return points;
}

double full_budget_equivalents(const RunHistory& history, double b_max) {
  if (!(b_max > 0.0)) throw std::invalid_argument("b_max must be positive");
  double total = 0.0;
  for (const auto& o : history.observations())
    if (o.status != TrialStatus::pending) total += o.budget;
  return total / b_max;
}

}  // namespace kdeband
