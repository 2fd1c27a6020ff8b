#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kdeband/history.hpp"
#include "kdeband/sampler.hpp"
#include "kdeband/scheduler.hpp"
#include "kdeband/space.hpp"

namespace kdeband {

/// When to end a run. Checked at every decision point of the engine loop.
struct StoppingCondition {
  enum class Kind {
    max_wall_clock,              // seconds on the backend clock
    max_total_budget,            // sum of budgets charged to finished trials
    max_full_budget_equivalents, // total charged budget / b_max
    max_iterations               // completed rungs
  };
  Kind kind = Kind::max_iterations;
  double limit = 1.0;

  static StoppingCondition max_wall_clock(double seconds);
  static StoppingCondition max_total_budget(double total);
  static StoppingCondition max_full_budget_equivalents(double count);
  static StoppingCondition max_iterations(int rungs);
  void validate() const;
};

/// Outcome of one in-process evaluation. An absent loss means the evaluation
/// failed. `cost` is the simulated duration in seconds; negative means "the
/// requested budget".
struct EvalResult {
  std::optional<double> loss;
  double cost = -1.0;
  std::map<std::string, std::string> info;
};

using EvalFn = std::function<EvalResult(const Configuration&, double budget)>;

struct CompletedJob {
  TrialId trial_id = 0;
  double budget = 0.0;
  TrialStatus status = TrialStatus::failed;
  std::optional<double> loss;
  std::map<std::string, std::string> info;
  double finished_at = 0.0;
};

/// Raised for unrecoverable evaluator transport errors (unreachable,
/// persistent protocol violations). Single failed evaluations are reported
/// as failed results instead.
class EvaluatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Where the engine sends jobs. Implementations own the clock: the bundled
/// local backend runs on simulated time so identical inputs give identical
/// histories, byte for byte; remote backends use the wall clock.
class EvaluationBackend {
 public:
  virtual ~EvaluationBackend() = default;

  virtual double now() const = 0;
  virtual std::size_t capacity() const = 0;
  virtual std::size_t in_flight() const = 0;

  /// Queue an evaluation. `deadline` is the absolute time after which the
  /// trial must be reported failed.
  virtual void submit(TrialId trial_id, const Configuration& config, double budget,
                      double deadline) = 0;

  /// Deliver the next finished job. Requires in_flight() > 0.
  virtual CompletedJob next_result() = 0;
};

/// Runs evaluation functions on `lanes` simulated executor lanes under a
/// discrete-event clock. A job occupies the earliest-free lane; its finish
/// time is the lane start plus the evaluation's reported cost. Results come
/// back ordered by finish time, ties by submission order.
class LocalBackend : public EvaluationBackend {
 public:
  LocalBackend(EvalFn fn, std::size_t lanes = 1);

  double now() const override { return now_; }
  std::size_t capacity() const override { return lane_free_.size(); }
  std::size_t in_flight() const override { return jobs_.size(); }
  void submit(TrialId trial_id, const Configuration& config, double budget,
              double deadline) override;
  CompletedJob next_result() override;

 private:
  struct Job {
    std::uint64_t seq = 0;
    CompletedJob result;
  };

  EvalFn fn_;
  std::vector<double> lane_free_;
  std::vector<Job> jobs_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
};

/// The optimization loop: scheduler decisions drive sampler proposals and
/// backend submissions; finished jobs feed the run history and the scheduler.
/// Single-writer; the backend supplies all concurrency.
class Engine {
 public:
  Engine(SearchSpace space, BudgetLadder ladder, SamplerParams params,
         EvaluationBackend& backend, StoppingCondition stop, std::uint64_t seed,
         int max_cycles = 0);

  /// Receives every history line (newline included) as it is written, header
  /// first; the concatenation of all chunks equals RunHistory::save().
  void set_line_sink(std::function<void(const std::string&)> sink);

  /// Extra key/value pairs recorded in the history header.
  std::map<std::string, std::string>& meta() { return meta_; }

  /// Run to completion. On evaluator transport errors the in-flight trials
  /// are persisted as pending and the error is rethrown; history() keeps the
  /// partial record.
  RunHistory run();

  const RunHistory& history() const { return history_; }
  int completed_rungs() const { return completed_rungs_; }

 private:
  struct InFlight {
    TrialId trial_id = 0;
    std::size_t budget_index = 0;
    double budget = 0.0;
    double submitted_at = 0.0;
  };

  bool stop_fired() const;
  void issue(TrialId trial_id, const Configuration& config, std::size_t budget_index,
             double budget);
  void drain_one();
  void persist_pending();
  void emit(const std::string& line);

  SearchSpace space_;
  BudgetLadder ladder_;
  SamplerParams params_;
  EvaluationBackend& backend_;
  StoppingCondition stop_;
  std::uint64_t seed_;
  int max_cycles_;

  RunHistory history_;
  Scheduler scheduler_;
  Rng rng_;
  std::map<std::string, std::string> meta_;
  std::function<void(const std::string&)> sink_;
  std::map<TrialId, Configuration> configs_;
  std::vector<InFlight> in_flight_;
  TrialId next_trial_id_ = 1;
  double start_time_ = 0.0;
  double charged_budget_ = 0.0;
  int completed_rungs_ = 0;
};

/// Convenience wrapper: build an Engine, run it, return the history.
RunHistory run(const SearchSpace& space, const BudgetLadder& ladder,
               const SamplerParams& params, EvaluationBackend& backend,
               const StoppingCondition& stop, std::uint64_t seed);

}  // namespace kdeband
