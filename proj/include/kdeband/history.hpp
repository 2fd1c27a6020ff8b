#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kdeband/sampler.hpp"
#include "kdeband/scheduler.hpp"
#include "kdeband/space.hpp"

namespace kdeband {

/// One evaluation record. `budget` is the rung budget the trial ran at and
/// is what budget accounting charges.
struct Observation {
  TrialId trial_id = 0;
  Configuration config;
  double budget = 0.0;
  std::optional<double> loss;  // present iff status == success
  TrialStatus status = TrialStatus::pending;
  double submitted_at = 0.0;
  double finished_at = 0.0;
  std::map<std::string, std::string> info;
};

/// Append-only record of a run: every observation plus the header data needed
/// to replay it (space, ladder, seed, sampler parameters).
class RunHistory {
 public:
  RunHistory() = default;
  RunHistory(SearchSpace space, BudgetLadder ladder, std::uint64_t seed, SamplerParams sampler);

  void append(Observation obs);

  const std::vector<Observation>& observations() const { return observations_; }
  const SearchSpace& space() const { return space_; }
  const BudgetLadder& ladder() const { return ladder_; }
  std::uint64_t seed() const { return seed_; }
  const SamplerParams& sampler_params() const { return sampler_params_; }
  std::map<std::string, std::string>& meta() { return meta_; }
  const std::map<std::string, std::string>& meta() const { return meta_; }

  /// Successful observations at exactly this budget (1e-9 relative match),
  /// in submission order.
  std::vector<const Observation*> successes_at(double budget) const;

  /// Serialize as newline-delimited records: one header line, then one line
  /// per observation. save() == the exact bytes written by the engine.
  std::string save() const;
  static RunHistory load(const std::string& text);

  static std::string header_line(const SearchSpace& space, const BudgetLadder& ladder,
                                 std::uint64_t seed, const SamplerParams& params,
                                 const std::map<std::string, std::string>& meta);
  static std::string observation_line(const Observation& obs);

 private:
  std::vector<Observation> observations_;
  SearchSpace space_;
  BudgetLadder ladder_;
  std::uint64_t seed_ = 0;
  SamplerParams sampler_params_;
  std::map<std::string, std::string> meta_;
};

/// Incumbent at time t: among observations finished by t, the smallest loss
/// at the largest budget that has any success by t; ties by earlier finish.
std::optional<std::pair<Configuration, double>> incumbent_at(const RunHistory& history, double t);

struct IncumbentPoint {
  double time = 0.0;
  TrialId trial_id = 0;
  double loss = 0.0;
};

/// Weakly decreasing envelope of the incumbent over time: a point is appended
/// whenever the incumbent (at the maximum budget reached so far) attains a
/// loss no worse than every previously recorded point.
std::vector<IncumbentPoint> incumbent_trajectory(const RunHistory& history);

/// Sum of the budgets of all non-pending observations divided by b_max.
double full_budget_equivalents(const RunHistory& history, double b_max);

}  // namespace kdeband
