#include "kdeband/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kdeband {

std::optional<std::size_t> BudgetLadder::index_of(double b) const {
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    const double ref = budgets[i];
    if (std::abs(b - ref) <= 1e-9 * std::max(1.0, std::abs(ref))) return i;
  }
  return std::nullopt;
}

BudgetLadder geometric_budgets(double b_min, double b_max, double eta) {
  if (!(b_min > 0.0) || !(b_min <= b_max))
    throw std::invalid_argument("budgets require 0 < b_min <= b_max");
  if (!(eta > 1.0)) throw std::invalid_argument("eta must be > 1");
  const int s_max = static_cast<int>(std::floor(std::log(b_max / b_min) / std::log(eta) + 1e-9));
  BudgetLadder ladder;
  ladder.eta = eta;
  for (int k = s_max; k >= 0; --k) ladder.budgets.push_back(b_max * std::pow(eta, -k));
  return ladder;
}

bool Rung::resolved() const {
  return filled() && std::all_of(entries.begin(), entries.end(), [](const RungEntry& e) {
    return e.status != TrialStatus::pending;
  });
}

std::size_t Rung::pending_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.status == TrialStatus::pending;
  return n;
}

std::vector<Rung> bracket_layout(int s_max, int s, double eta) {
  if (s < 0 || s > s_max) throw std::invalid_argument("bracket index out of range");
  const double n0_real = (static_cast<double>(s_max) + 1.0) / (static_cast<double>(s) + 1.0) *
                         std::pow(eta, s);
  auto n = static_cast<std::size_t>(std::ceil(n0_real - 1e-9));
  std::vector<Rung> rungs(static_cast<std::size_t>(s) + 1);
  for (std::size_t i = 0; i < rungs.size(); ++i) {
    rungs[i].budget_index = static_cast<std::size_t>(s_max - s) + i;
    rungs[i].capacity = n;
    rungs[i].expected = n;
    n = static_cast<std::size_t>(std::floor(static_cast<double>(n) / eta + 1e-9));
  }
  return rungs;
}

std::vector<TrialId> promote(const Rung& rung, double eta, std::size_t next_capacity) {
  (void)eta;  // the layout's floor-by-eta chain already fixed next_capacity
  if (!rung.resolved()) throw std::logic_error("cannot promote a rung with pending entries");
  std::vector<std::size_t> successful;
  for (std::size_t i = 0; i < rung.entries.size(); ++i)
    if (rung.entries[i].status == TrialStatus::success) successful.push_back(i);
  // best loss first; ties go to the earlier submission
  std::stable_sort(successful.begin(), successful.end(), [&](std::size_t a, std::size_t b) {
    return rung.entries[a].loss < rung.entries[b].loss;
  });
  const std::size_t count = std::min(successful.size(), next_capacity);
  std::vector<TrialId> promoted;
  promoted.reserve(count);
  for (std::size_t i = 0; i < count; ++i) promoted.push_back(rung.entries[successful[i]].trial_id);
  return promoted;
}

Action Action::request_new(std::size_t budget_index, double budget) {
  Action a;
  a.kind = Kind::request_new;
  a.budget_index = budget_index;
  a.budget = budget;
  return a;
}

Action Action::continue_trial(TrialId id, std::size_t budget_index, double budget) {
  Action a;
  a.kind = Kind::continue_trial;
  a.trial_id = id;
  a.budget_index = budget_index;
  a.budget = budget;
  return a;
}

Action Action::done() {
  Action a;
  a.kind = Kind::done;
  return a;
}

Scheduler::Scheduler(BudgetLadder ladder, int max_cycles)
    : ladder_(std::move(ladder)), max_cycles_(max_cycles) {
  if (ladder_.budgets.empty()) throw std::invalid_argument("ladder must be non-empty");
  s_max_ = static_cast<int>(ladder_.budgets.size()) - 1;
  cursor_s_ = s_max_;
  brackets_.push_back(make_bracket(cursor_s_));
}

Bracket Scheduler::make_bracket(int s) const {
  Bracket b;
  b.index = s;
  b.rungs = bracket_layout(s_max_, s, ladder_.eta);
  return b;
}

Rung& Scheduler::active_rung() { return brackets_.back().rungs[brackets_.back().active_rung]; }

void Scheduler::open_next_bracket() {
  if (cursor_s_ > 0) {
    --cursor_s_;
  } else {
    ++completed_cycles_;
    if (max_cycles_ > 0 && completed_cycles_ >= max_cycles_) {
      done_ = true;
      return;
    }
    cursor_s_ = s_max_;
  }
  brackets_.push_back(make_bracket(cursor_s_));
}

Action Scheduler::next_action() {
  while (true) {
    if (done_) return Action::done();
    Bracket& bracket = brackets_.back();
    if (bracket.complete()) {
      open_next_bracket();
      continue;
    }
    Rung& rung = bracket.rungs[bracket.active_rung];
    if (bracket.active_rung == 0) {
      if (!rung.filled())
        return Action::request_new(rung.budget_index, ladder_.budgets[rung.budget_index]);
    } else if (!bracket.promotion_queue.empty()) {
      const TrialId id = bracket.promotion_queue.front();
      bracket.promotion_queue.erase(bracket.promotion_queue.begin());
      rung.entries.push_back(RungEntry{id, TrialStatus::pending, 0.0});
      return Action::continue_trial(id, rung.budget_index, ladder_.budgets[rung.budget_index]);
    }
    if (!rung.resolved()) return Action::wait();
    // rung resolved without an advance having been recorded: handled in
    // record_result; reaching here means an empty rung (all upstream failed)
    bracket.active_rung = bracket.rungs.size();
  }
}

void Scheduler::assign_new_trial(TrialId trial_id) {
  Bracket& bracket = brackets_.back();
  if (bracket.complete() || bracket.active_rung != 0)
    throw std::logic_error("no base-rung slot is open for a new trial");
  Rung& rung = bracket.rungs[0];
  if (rung.filled()) throw std::logic_error("base rung already filled");
  rung.entries.push_back(RungEntry{trial_id, TrialStatus::pending, 0.0});
}

Scheduler::RecordOutcome Scheduler::record_result(TrialId trial_id, std::size_t budget_index,
                                                  TrialStatus status, double loss) {
  if (status == TrialStatus::pending)
    throw std::invalid_argument("cannot record a pending result");
  Bracket& bracket = brackets_.back();
  Rung* rung = nullptr;
  RungEntry* entry = nullptr;
  for (auto& r : bracket.rungs) {
    if (r.budget_index != budget_index) continue;
    for (auto& e : r.entries)
      if (e.trial_id == trial_id && e.status == TrialStatus::pending) {
        rung = &r;
        entry = &e;
        break;
      }
    if (entry) break;
  }
  if (!entry) throw std::logic_error("result does not match any issued evaluation");
  entry->status = status;
  entry->loss = loss;

  RecordOutcome outcome;
  if (rung == &bracket.rungs[bracket.active_rung] && rung->resolved()) {
    outcome.rung_completed = true;
    const std::size_t next = bracket.active_rung + 1;
    if (next < bracket.rungs.size()) {
      auto promoted = promote(*rung, ladder_.eta, bracket.rungs[next].capacity);
      bracket.rungs[next].expected = promoted.size();
      bracket.promotion_queue = std::move(promoted);
      bracket.active_rung = next;
      if (bracket.rungs[next].expected == 0) {
        // nothing survived; the bracket ends here
        bracket.active_rung = bracket.rungs.size();
        outcome.bracket_completed = true;
      }
    } else {
      bracket.active_rung = bracket.rungs.size();
      outcome.bracket_completed = true;
    }
  }
  return outcome;
}

}  // namespace kdeband
