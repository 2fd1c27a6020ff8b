#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kdeband/clock.hpp"
#include "kdeband/engine.hpp"
#include "kdeband/protocol.hpp"

namespace kdeband {

/// Outbound channel to one worker. send() throws on a broken connection.
class WorkerTransport {
 public:
  virtual ~WorkerTransport() = default;
  virtual void send(const nlohmann::json& body) = 0;
};

struct WorkerInfo {
  std::string worker_id;
  int capacity = 1;
  double last_heartbeat = 0.0;
};

/// Assigns jobs to registered workers and funnels results back, exactly once
/// per (trial_id, budget). Jobs go to the least-loaded live worker with a
/// free slot, ties by worker_id. A worker whose heartbeat is older than the
/// liveness window is dead: its jobs are reassigned once, then failed.
///
/// All state transitions happen on the caller's thread; time comes from the
/// injected clock, so liveness behaviour is fully testable without sockets.
class Dispatcher {
 public:
  explicit Dispatcher(const Clock& clock);

  void register_worker(const std::string& worker_id, int capacity, WorkerTransport* transport);
  void heartbeat(const std::string& worker_id);
  /// Connection lost: jobs are reassigned or failed, the worker forgotten.
  void disconnect(const std::string& worker_id);
  void on_result(const std::string& worker_id, const JobResult& result);

  /// Queue a job; it is sent as soon as a live worker has a free slot.
  void submit(JobRequest request, double deadline);

  /// Marks dead workers, fails timed-out jobs, sends queued jobs. Call
  /// whenever time may have advanced.
  void tick();

  std::optional<CompletedJob> poll_result();
  void broadcast_shutdown();

  /// Jobs submitted but not yet delivered through poll_result().
  std::size_t outstanding() const { return queue_.size() + assigned_.size() + results_.size(); }
  std::size_t live_capacity() const;
  std::vector<WorkerInfo> workers() const;
  std::size_t discarded_results() const { return discarded_; }

 private:
  struct PendingJob {
    JobRequest request;
    double deadline = 0.0;
    int assignments = 0;
  };
  struct Assignment {
    PendingJob job;
    std::string worker_id;
  };
  struct Worker {
    WorkerInfo info;
    WorkerTransport* transport = nullptr;
    std::set<TrialId> assigned;
  };

  bool live(const Worker& w) const;
  void pump();
  void finish(PendingJob job, TrialStatus status, std::optional<double> loss,
              std::map<std::string, std::string> info);
  void drop_worker(std::string worker_id);

  const Clock& clock_;
  std::map<std::string, Worker> workers_;
  std::deque<PendingJob> queue_;
  std::map<TrialId, Assignment> assigned_;
  std::set<std::pair<TrialId, double>> delivered_;
  std::deque<CompletedJob> results_;
  std::size_t discarded_ = 0;
};

}  // namespace kdeband
