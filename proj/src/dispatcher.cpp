#include "kdeband/dispatcher.hpp"

#include <algorithm>
#include <cmath>

namespace kdeband {

Dispatcher::Dispatcher(const Clock& clock) : clock_(clock) {}

bool Dispatcher::live(const Worker& w) const {
  return clock_.now() - w.info.last_heartbeat <= kLivenessWindow;
}

void Dispatcher::register_worker(const std::string& worker_id, int capacity,
                                 WorkerTransport* transport) {
  if (capacity < 1) throw std::invalid_argument("worker capacity must be at least 1");
  if (workers_.count(worker_id)) drop_worker(worker_id);
  Worker w;
  w.info = WorkerInfo{worker_id, capacity, clock_.now()};
  w.transport = transport;
  workers_.emplace(worker_id, std::move(w));
  pump();
}

void Dispatcher::heartbeat(const std::string& worker_id) {
  auto it = workers_.find(worker_id);
  if (it != workers_.end()) it->second.info.last_heartbeat = clock_.now();
}

void Dispatcher::drop_worker(std::string worker_id) {
  auto it = workers_.find(worker_id);
  if (it == workers_.end()) return;
  const std::set<TrialId> orphaned = std::move(it->second.assigned);
  workers_.erase(it);
  for (TrialId trial : orphaned) {
    auto a = assigned_.find(trial);
    if (a == assigned_.end()) continue;
    PendingJob job = std::move(a->second.job);
    assigned_.erase(a);
    if (job.assignments >= 2) {
      finish(std::move(job), TrialStatus::failed, std::nullopt,
             {{"error", "worker lost after reassignment"}});
    } else {
      queue_.push_front(std::move(job));
    }
  }
}

void Dispatcher::disconnect(const std::string& worker_id) {
  drop_worker(worker_id);
  pump();
}

void Dispatcher::on_result(const std::string& worker_id, const JobResult& result) {
  (void)worker_id;  // late results from a replaced worker still count once
  auto it = assigned_.find(result.trial_id);
  if (it == assigned_.end()) {
    ++discarded_;
    return;
  }
  PendingJob job = std::move(it->second.job);
  auto w = workers_.find(it->second.worker_id);
  if (w != workers_.end()) w->second.assigned.erase(result.trial_id);
  assigned_.erase(it);
  finish(std::move(job), result.status, result.loss, result.info);
  pump();
}

void Dispatcher::finish(PendingJob job, TrialStatus status, std::optional<double> loss,
                        std::map<std::string, std::string> info) {
  const auto key = std::make_pair(job.request.trial_id, job.request.budget);
  if (!delivered_.insert(key).second) {
    ++discarded_;
    return;
  }
  if (status == TrialStatus::success && (!loss.has_value() || !std::isfinite(*loss))) {
    status = TrialStatus::failed;
    loss.reset();
    info["error"] = "success reported without a finite loss";
  }
  CompletedJob out;
  out.trial_id = job.request.trial_id;
  out.budget = job.request.budget;
  out.status = status;
  if (status == TrialStatus::success) out.loss = loss;
  out.info = std::move(info);
  out.finished_at = clock_.now();
  results_.push_back(std::move(out));
}

void Dispatcher::submit(JobRequest request, double deadline) {
  PendingJob job;
  job.request = std::move(request);
  job.deadline = deadline;
  queue_.push_back(std::move(job));
  pump();
}

void Dispatcher::pump() {
  while (!queue_.empty()) {
    Worker* chosen = nullptr;
    for (auto& [id, w] : workers_) {
      if (!live(w) || !w.transport) continue;
      if (static_cast<int>(w.assigned.size()) >= w.info.capacity) continue;
      if (!chosen || w.assigned.size() < chosen->assigned.size()) chosen = &w;
    }
    if (!chosen) return;
    PendingJob job = std::move(queue_.front());
    queue_.pop_front();
    ++job.assignments;
    const TrialId trial = job.request.trial_id;
    const nlohmann::json message = job_request_to_json(job.request);
    chosen->assigned.insert(trial);
    assigned_.emplace(trial, Assignment{std::move(job), chosen->info.worker_id});
    try {
      chosen->transport->send(message);
    } catch (const std::exception&) {
      drop_worker(chosen->info.worker_id);
    }
  }
}

void Dispatcher::tick() {
  const double now = clock_.now();

  std::vector<std::string> dead;
  for (const auto& [id, w] : workers_)
    if (!live(w)) dead.push_back(id);
  for (const auto& id : dead) drop_worker(id);

  std::vector<TrialId> timed_out;
  for (const auto& [trial, a] : assigned_)
    if (now > a.job.deadline) timed_out.push_back(trial);
  for (TrialId trial : timed_out) {
    auto it = assigned_.find(trial);
    PendingJob job = std::move(it->second.job);
    auto w = workers_.find(it->second.worker_id);
    if (w != workers_.end()) w->second.assigned.erase(trial);
    assigned_.erase(it);
    finish(std::move(job), TrialStatus::failed, std::nullopt, {{"timeout", "1"}});
  }
  for (std::size_t i = queue_.size(); i-- > 0;) {
    if (now <= queue_[i].deadline) continue;
    PendingJob job = std::move(queue_[i]);
    queue_.erase(queue_.begin() + static_cast<std::ptrdiff_t>(i));
    finish(std::move(job), TrialStatus::failed, std::nullopt, {{"timeout", "1"}});
  }

  pump();
}

std::optional<CompletedJob> Dispatcher::poll_result() {
  if (results_.empty()) return std::nullopt;
  CompletedJob out = std::move(results_.front());
  results_.pop_front();
  return out;
}

void Dispatcher::broadcast_shutdown() {
  for (auto& [id, w] : workers_) {
    if (!w.transport) continue;
    try {
      w.transport->send(shutdown_message());
    } catch (const std::exception&) {
    }
  }
}

std::size_t Dispatcher::live_capacity() const {
  std::size_t total = 0;
  for (const auto& [id, w] : workers_)
    if (live(w)) total += static_cast<std::size_t>(w.info.capacity);
  return total;
}

std::vector<WorkerInfo> Dispatcher::workers() const {
  std::vector<WorkerInfo> out;
  out.reserve(workers_.size());
  for (const auto& [id, w] : workers_) out.push_back(w.info);
  return out;
}

}  // namespace kdeband
