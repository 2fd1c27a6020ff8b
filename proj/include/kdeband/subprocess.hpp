#pragma once

#include <string>
#include <vector>

#include "kdeband/clock.hpp"
#include "kdeband/engine.hpp"
#include "kdeband/protocol.hpp"

namespace kdeband {

/// Run one evaluation through a child process: the job message body goes to
/// the child's standard input as a single line, and one result line is read
/// from its standard output ({"loss": ..., "consumed_budget": ...,
/// "info": {...}}, or {"status": "failed"}). A nonzero exit, malformed
/// output, or blowing the timeout gives status failed.
JobResult run_subprocess_evaluator(const std::vector<std::string>& command,
                                   const JobRequest& request, double timeout_seconds);

/// Evaluation backend that spawns one child per job, up to `parallelism`
/// concurrently, on the wall clock. Five consecutive spawn or protocol
/// failures raise EvaluatorError.
class SubprocessBackend : public EvaluationBackend {
 public:
  SubprocessBackend(std::vector<std::string> command, std::size_t parallelism = 1);
  ~SubprocessBackend() override;

  double now() const override;
  std::size_t capacity() const override { return parallelism_; }
  std::size_t in_flight() const override { return children_.size(); }
  void submit(TrialId trial_id, const Configuration& config, double budget,
              double deadline) override;
  CompletedJob next_result() override;

 private:
  struct Child {
    int pid = -1;
    int out_fd = -1;
    std::string buffer;
    TrialId trial_id = 0;
    double budget = 0.0;
    double deadline = 0.0;
    bool spawn_failed = false;
    bool eof = false;
  };

  CompletedJob reap(Child child, bool timed_out);

  std::vector<std::string> command_;
  std::size_t parallelism_;
  std::vector<Child> children_;
  SteadyClock clock_;
  int consecutive_protocol_failures_ = 0;
};

}  // namespace kdeband
