#include "kdeband/engine.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace kdeband {

StoppingCondition StoppingCondition::max_wall_clock(double seconds) {
  StoppingCondition s{Kind::max_wall_clock, seconds};
  s.validate();
  return s;
}

StoppingCondition StoppingCondition::max_total_budget(double total) {
  StoppingCondition s{Kind::max_total_budget, total};
  s.validate();
  return s;
}

StoppingCondition StoppingCondition::max_full_budget_equivalents(double count) {
  StoppingCondition s{Kind::max_full_budget_equivalents, count};
  s.validate();
  return s;
}

StoppingCondition StoppingCondition::max_iterations(int rungs) {
  StoppingCondition s{Kind::max_iterations, static_cast<double>(rungs)};
  s.validate();
  return s;
}

void StoppingCondition::validate() const {
  if (!(limit > 0.0)) throw std::invalid_argument("stopping condition limit must be positive");
}

LocalBackend::LocalBackend(EvalFn fn, std::size_t lanes) : fn_(std::move(fn)) {
  if (lanes == 0) throw std::invalid_argument("backend needs at least one lane");
  lane_free_.assign(lanes, 0.0);
}

void LocalBackend::submit(TrialId trial_id, const Configuration& config, double budget,
                          double deadline) {
  const auto lane = static_cast<std::size_t>(
      std::min_element(lane_free_.begin(), lane_free_.end()) - lane_free_.begin());
  const double start = std::max(now_, lane_free_[lane]);

  EvalResult r;
  bool threw = false;
  try {
    r = fn_(config, budget);
  } catch (const std::exception& e) {
    threw = true;
    r.loss.reset();
    r.info["error"] = e.what();
  }
  const double cost = r.cost < 0.0 ? budget : r.cost;
  double finish = start + cost;

  Job job;
  job.seq = seq_++;
  job.result.trial_id = trial_id;
  job.result.budget = budget;
  job.result.info = std::move(r.info);
  if (finish > deadline) {
    finish = deadline;
    job.result.status = TrialStatus::failed;
    job.result.info["timeout"] = "1";
  } else if (threw || !r.loss.has_value() || !std::isfinite(*r.loss)) {
    job.result.status = TrialStatus::failed;
  } else {
    job.result.status = TrialStatus::success;
    job.result.loss = r.loss;
  }
  job.result.finished_at = finish;
  lane_free_[lane] = finish;
  jobs_.push_back(std::move(job));
}

CompletedJob LocalBackend::next_result() {
  if (jobs_.empty()) throw std::logic_error("no job in flight");
  std::size_t best = 0;
  for (std::size_t i = 1; i < jobs_.size(); ++i) {
    if (jobs_[i].result.finished_at < jobs_[best].result.finished_at ||
        (jobs_[i].result.finished_at == jobs_[best].result.finished_at &&
         jobs_[i].seq < jobs_[best].seq))
      best = i;
  }
  CompletedJob result = std::move(jobs_[best].result);
  jobs_.erase(jobs_.begin() + static_cast<std::ptrdiff_t>(best));
  now_ = std::max(now_, result.finished_at);
  return result;
}

Engine::Engine(SearchSpace space, BudgetLadder ladder, SamplerParams params,
               EvaluationBackend& backend, StoppingCondition stop, std::uint64_t seed,
               int max_cycles)
    : space_(std::move(space)),
      ladder_(std::move(ladder)),
      params_(params),
      backend_(backend),
      stop_(stop),
      seed_(seed),
      max_cycles_(max_cycles),
      scheduler_(ladder_, max_cycles),
      rng_(seed) {
  params_.validate();
  stop_.validate();
}

void Engine::set_line_sink(std::function<void(const std::string&)> sink) {
  sink_ = std::move(sink);
}

void Engine::emit(const std::string& line) {
  if (sink_) sink_(line + "\n");
}

bool Engine::stop_fired() const {
  switch (stop_.kind) {
    case StoppingCondition::Kind::max_wall_clock:
      return backend_.now() - start_time_ >= stop_.limit;
    case StoppingCondition::Kind::max_total_budget:
      return charged_budget_ >= stop_.limit;
    case StoppingCondition::Kind::max_full_budget_equivalents:
      return charged_budget_ / ladder_.max() >= stop_.limit;
    case StoppingCondition::Kind::max_iterations:
      return completed_rungs_ >= static_cast<int>(stop_.limit);
  }
  return false;
}

void Engine::issue(TrialId trial_id, const Configuration& config, std::size_t budget_index,
                   double budget) {
  const double submitted_at = backend_.now();
  const double deadline = submitted_at + 3.0 * budget + 60.0;
  backend_.submit(trial_id, config, budget, deadline);
  in_flight_.push_back(InFlight{trial_id, budget_index, budget, submitted_at});
}

void Engine::drain_one() {
  CompletedJob job = backend_.next_result();
  auto it = std::find_if(in_flight_.begin(), in_flight_.end(), [&](const InFlight& f) {
    return f.trial_id == job.trial_id && f.budget == job.budget;
  });
  if (it == in_flight_.end())
    throw EvaluatorError("result for an evaluation that was never issued");

  Observation obs;
  obs.trial_id = job.trial_id;
  obs.config = configs_.at(job.trial_id);
  obs.budget = job.budget;
  obs.status = job.status;
  if (job.status == TrialStatus::success) obs.loss = job.loss;
  obs.submitted_at = it->submitted_at;
  obs.finished_at = std::max(job.finished_at, it->submitted_at);
  obs.info = std::move(job.info);

  const std::size_t budget_index = it->budget_index;
  in_flight_.erase(it);
  charged_budget_ += obs.budget;
  emit(RunHistory::observation_line(obs));
  history_.append(std::move(obs));

  const auto outcome =
      scheduler_.record_result(job.trial_id, budget_index, job.status,
                               job.status == TrialStatus::success ? *job.loss : 0.0);
  if (outcome.rung_completed) ++completed_rungs_;
}

void Engine::persist_pending() {
  for (const auto& f : in_flight_) {
    Observation obs;
    obs.trial_id = f.trial_id;
    obs.config = configs_.at(f.trial_id);
    obs.budget = f.budget;
    obs.status = TrialStatus::pending;
    obs.submitted_at = f.submitted_at;
    obs.finished_at = std::max(backend_.now(), f.submitted_at);
    emit(RunHistory::observation_line(obs));
    history_.append(std::move(obs));
  }
  in_flight_.clear();
}

RunHistory Engine::run() {
  history_ = RunHistory(space_, ladder_, seed_, params_);
  history_.meta() = meta_;
  scheduler_ = Scheduler(ladder_, max_cycles_);
  rng_ = Rng(seed_);
  configs_.clear();
  in_flight_.clear();
  next_trial_id_ = 1;
  charged_budget_ = 0.0;
  completed_rungs_ = 0;
  start_time_ = backend_.now();
  emit(RunHistory::header_line(space_, ladder_, seed_, params_, meta_));

  try {
    while (true) {
      if (stop_fired()) {
        persist_pending();
        break;
      }
      if (backend_.in_flight() >= backend_.capacity()) {
        drain_one();
        continue;
      }
      const Action action = scheduler_.next_action();
      switch (action.kind) {
        case Action::Kind::request_new: {
          const auto model = fit_models(
              history_, space_,
              select_model_budget(history_, params_).value_or(ladder_.min()), params_);
          Configuration config = propose(model, space_, params_, rng_);
          const TrialId id = next_trial_id_++;
          scheduler_.assign_new_trial(id);
          configs_[id] = config;
          issue(id, config, action.budget_index, action.budget);
          break;
        }
        case Action::Kind::continue_trial:
          issue(action.trial_id, configs_.at(action.trial_id), action.budget_index,
                action.budget);
          break;
        case Action::Kind::wait:
          if (backend_.in_flight() == 0)
            throw std::logic_error("scheduler is waiting but nothing is in flight");
          drain_one();
          break;
        case Action::Kind::done:
          while (backend_.in_flight() > 0) drain_one();
          return history_;
      }
    }
  } catch (const EvaluatorError&) {
    persist_pending();
    throw;
  }
  return history_;
}

RunHistory run(const SearchSpace& space, const BudgetLadder& ladder, const SamplerParams& params,
               EvaluationBackend& backend, const StoppingCondition& stop, std::uint64_t seed) {
  Engine engine(space, ladder, params, backend, stop, seed);
  return engine.run();
}

}  // namespace kdeband
