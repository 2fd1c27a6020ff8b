#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace kdeband {

using TrialId = std::uint64_t;

/// Ascending geometric budget ladder with promotion factor eta.
struct BudgetLadder {
  std::vector<double> budgets;
  double eta = 3.0;

  std::size_t size() const { return budgets.size(); }
  double min() const { return budgets.front(); }
  double max() const { return budgets.back(); }

  /// Index of the ladder budget matching `b` within 1e-9 relative tolerance.
  std::optional<std::size_t> index_of(double b) const;
};

/// Ladder anchored at b_max: budgets are b_max * eta^-k for
/// k = s_max..0 with s_max = floor(log_eta(b_max/b_min) + 1e-9), so the top
/// budget is exact and the lowest is >= b_min.
BudgetLadder geometric_budgets(double b_min, double b_max, double eta);

enum class TrialStatus { pending, success, failed };

struct RungEntry {
  TrialId trial_id = 0;
  TrialStatus status = TrialStatus::pending;
  double loss = 0.0;  // meaningful only when status == success
};

struct Rung {
  std::size_t budget_index = 0;  // into the ladder
  std::size_t capacity = 0;      // layout capacity
  std::size_t expected = 0;      // how many entries this rung will actually receive
  std::vector<RungEntry> entries;

  bool filled() const { return entries.size() >= expected; }
  bool resolved() const;
  std::size_t pending_count() const;
};

/// Capacities and budget indices of one Successive Halving bracket.
/// Rung 0 holds ceil((s_max+1)/(s+1) * eta^s) configurations at budget index
/// s_max - s; each following rung keeps floor(previous/eta) at eta times the
/// budget.
std::vector<Rung> bracket_layout(int s_max, int s, double eta);

struct Bracket {
  int index = 0;  // s
  std::vector<Rung> rungs;
  std::size_t active_rung = 0;
  std::vector<TrialId> promotion_queue;  // promoted but not yet issued

  bool complete() const { return active_rung >= rungs.size(); }
};

/// Trials to promote out of a fully resolved rung: the best successful
/// entries by (loss, submission order), capped by the next rung's capacity.
/// Failed entries never promote; all-failed rungs promote nothing.
/// Throws std::logic_error if the rung still has pending entries.
std::vector<TrialId> promote(const Rung& rung, double eta, std::size_t next_capacity);

struct Action {
  enum class Kind { request_new, continue_trial, wait, done };
  Kind kind = Kind::wait;
  TrialId trial_id = 0;        // continue_trial only
  std::size_t budget_index = 0;  // request_new / continue_trial
  double budget = 0.0;

  static Action request_new(std::size_t budget_index, double budget);
  static Action continue_trial(TrialId id, std::size_t budget_index, double budget);
  static Action wait() { return Action{}; }
  static Action done();
};

/// Successive Halving / Hyperband bookkeeping. Brackets run one at a time in
/// the order s_max, s_max-1, ..., 0 and the cycle repeats; `max_cycles == 0`
/// cycles forever (callers stop via their own conditions).
///
/// Single-writer: decisions are a pure function of recorded results, so
/// replaying the same result sequence reproduces identical actions.
class Scheduler {
 public:
  Scheduler(BudgetLadder ladder, int max_cycles = 0);

  /// Next decision. request_new reserves a base-rung slot for a fresh
  /// configuration; continue_trial re-evaluates a promoted trial at the next
  /// budget; wait means all slots are issued but results are outstanding.
  Action next_action();

  struct RecordOutcome {
    bool rung_completed = false;
    bool bracket_completed = false;
  };
  /// Record the result of an issued evaluation.
  RecordOutcome record_result(TrialId trial_id, std::size_t budget_index, TrialStatus status,
                              double loss);

  /// Bind the trial id the engine assigned to the most recent request_new.
  void assign_new_trial(TrialId trial_id);

  const BudgetLadder& ladder() const { return ladder_; }
  int s_max() const { return s_max_; }
  const Bracket& current_bracket() const { return brackets_.back(); }
  const std::vector<Bracket>& brackets() const { return brackets_; }
  int completed_cycles() const { return completed_cycles_; }

 private:
  void open_next_bracket();
  Bracket make_bracket(int s) const;
  Rung& active_rung();

  BudgetLadder ladder_;
  int s_max_ = 0;
  int max_cycles_ = 0;
  int completed_cycles_ = 0;
  int cursor_s_ = 0;  // s of the bracket currently accepting work
  std::vector<Bracket> brackets_;
  bool done_ = false;
};

}  // namespace kdeband
