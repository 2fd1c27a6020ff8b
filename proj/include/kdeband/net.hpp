#pragma once

#include <atomic>
#include <functional>
#include <list>
#include <memory>
#include <string>
#include <vector>

#include "kdeband/dispatcher.hpp"
#include "kdeband/engine.hpp"
#include "kdeband/subprocess.hpp"

namespace kdeband {

/// Evaluates one wire job to one wire result (worker side).
using JobEvaluator = std::function<JobResult(const JobRequest&)>;

/// Evaluator that runs `command` as a child process per job, with the
/// standard timeout of three times the budget plus 60 seconds.
JobEvaluator command_evaluator(std::vector<std::string> command);

/// Evaluator wrapping an in-process function.
JobEvaluator function_evaluator(EvalFn fn);

/// Master side of the socket protocol: accepts worker connections on
/// host:port and exposes the dispatcher as an evaluation backend. All socket
/// activity happens on the calling thread inside submit()/next_result()/
/// pump(). Pass port 0 to bind an ephemeral port.
class MasterBackend : public EvaluationBackend {
 public:
  MasterBackend(const std::string& host, int port);
  ~MasterBackend() override;
  MasterBackend(const MasterBackend&) = delete;
  MasterBackend& operator=(const MasterBackend&) = delete;

  int port() const { return port_; }

  double now() const override { return clock_.now(); }
  std::size_t capacity() const override;
  std::size_t in_flight() const override { return dispatcher_.outstanding(); }
  void submit(TrialId trial_id, const Configuration& config, double budget,
              double deadline) override;
  CompletedJob next_result() override;

  /// One round of socket work: accept, read, dispatch, liveness tick.
  void pump(int timeout_ms);

  /// Ask all connected workers to exit.
  void shutdown_workers();

  Dispatcher& dispatcher() { return dispatcher_; }

 private:
  struct Connection;

  void accept_pending();
  void read_connection(Connection& conn);
  void close_connection(Connection& conn);

  int listen_fd_ = -1;
  int port_ = 0;
  SteadyClock clock_;
  Dispatcher dispatcher_;
  std::list<Connection> connections_;
};

/// Worker loop: connect to the master, register, evaluate jobs with up to
/// `capacity` concurrent evaluations, heartbeat every 5 seconds. Returns 0
/// after a shutdown message, 1 on connection loss. `stop` (optional) ends
/// the loop from another thread.
int run_worker(const std::string& host, int port, const std::string& worker_id, int capacity,
               const JobEvaluator& evaluate, const std::atomic<bool>* stop = nullptr);

}  // namespace kdeband
