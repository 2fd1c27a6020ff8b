#include "kdeband/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "kdeband/json_util.hpp"

namespace kdeband {

using nlohmann::json;

namespace {

struct Spawned {
  int pid = -1;
  int out_fd = -1;  // child's stdout
};

/// fork/exec with the request line already written to the child's stdin.
Spawned spawn_child(const std::vector<std::string>& command, const std::string& request_line) {
  if (command.empty()) throw std::invalid_argument("empty evaluator command");
  int in_pipe[2];
  int out_pipe[2];
  if (pipe(in_pipe) != 0) return {};
  if (pipe(out_pipe) != 0) {
    close(in_pipe[0]);
    close(in_pipe[1]);
    return {};
  }
  const int pid = fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    return {};
  }
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) close(fd);
    std::vector<char*> argv;
    argv.reserve(command.size() + 1);
    for (const auto& arg : command) argv.push_back(const_cast<char*>(arg.c_str()));
    argv.push_back(nullptr);
    execvp(argv[0], argv.data());
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);

  // the request fits comfortably in the pipe buffer; write it now and close
  // stdin so line-oriented children see EOF after the one request
  std::size_t written = 0;
  while (written < request_line.size()) {
    const ssize_t n =
        write(in_pipe[1], request_line.data() + written, request_line.size() - written);
    if (n <= 0) break;
    written += static_cast<std::size_t>(n);
  }
  close(in_pipe[1]);
  return Spawned{pid, out_pipe[0]};
}

int wait_for_exit(int pid) {
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -1;
}

void kill_and_reap(int pid) {
  kill(pid, SIGKILL);
  wait_for_exit(pid);
}

JobResult failed_result(TrialId trial_id, const std::string& error) {
  JobResult r;
  r.trial_id = trial_id;
  r.status = TrialStatus::failed;
  r.info["error"] = error;
  return r;
}

/// Parse the child's single output line. Accepts {"loss": x, ...} for
/// success and {"status":"failed", ...} for an explicit failure.
JobResult parse_result_line(TrialId trial_id, const std::string& line, bool* protocol_ok) {
  *protocol_ok = false;
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception&) {
    return failed_result(trial_id, "evaluator wrote a malformed result line");
  }
  if (!j.is_object()) return failed_result(trial_id, "evaluator result is not an object");
  *protocol_ok = true;
  JobResult r;
  r.trial_id = trial_id;
  if (j.contains("info") && j.at("info").is_object())
    r.info = j.at("info").get<std::map<std::string, std::string>>();
  r.consumed_budget = j.value("consumed_budget", 0.0);
  if (j.value("status", "") == "failed") {
    r.status = TrialStatus::failed;
    return r;
  }
  if (!j.contains("loss") || !j.at("loss").is_number() ||
      !std::isfinite(j.at("loss").get<double>())) {
    *protocol_ok = false;
    return failed_result(trial_id, "evaluator result carries no finite loss");
  }
  r.status = TrialStatus::success;
  r.loss = j.at("loss").get<double>();
  return r;
}

}  // namespace

JobResult run_subprocess_evaluator(const std::vector<std::string>& command,
                                   const JobRequest& request, double timeout_seconds) {
  const std::string line = job_request_to_json(request).dump() + "\n";
  Spawned child = spawn_child(command, line);
  if (child.pid < 0) return failed_result(request.trial_id, "failed to spawn evaluator");

  std::string output;
  SteadyClock clock;
  bool timed_out = false;
  while (output.find('\n') == std::string::npos) {
    const double remaining = timeout_seconds - clock.now();
    if (remaining <= 0.0) {
      timed_out = true;
      break;
    }
    pollfd pfd{child.out_fd, POLLIN, 0};
    const int rc = poll(&pfd, 1, static_cast<int>(std::min(remaining * 1000.0, 1000.0)) + 1);
    if (rc < 0 && errno != EINTR) break;
    if (rc <= 0) continue;
    char buf[4096];
    const ssize_t n = read(child.out_fd, buf, sizeof buf);
    if (n <= 0) break;  // EOF before a full line
    output.append(buf, static_cast<std::size_t>(n));
  }
  close(child.out_fd);

  if (timed_out) {
    kill_and_reap(child.pid);
    JobResult r = failed_result(request.trial_id, "evaluator timed out");
    r.info["timeout"] = "1";
    return r;
  }
  const int exit_code = wait_for_exit(child.pid);
  if (exit_code != 0)
    return failed_result(request.trial_id,
                         "evaluator exited with status " + std::to_string(exit_code));
  const auto eol = output.find('\n');
  if (eol == std::string::npos)
    return failed_result(request.trial_id, "evaluator closed stdout without a result line");
  bool protocol_ok = false;
  return parse_result_line(request.trial_id, output.substr(0, eol), &protocol_ok);
}

SubprocessBackend::SubprocessBackend(std::vector<std::string> command, std::size_t parallelism)
    : command_(std::move(command)), parallelism_(parallelism) {
  if (command_.empty()) throw std::invalid_argument("empty evaluator command");
  if (parallelism_ == 0) throw std::invalid_argument("parallelism must be at least 1");
}

SubprocessBackend::~SubprocessBackend() {
  for (auto& child : children_) {
    if (child.pid > 0) kill_and_reap(child.pid);
    if (child.out_fd >= 0) close(child.out_fd);
  }
}

double SubprocessBackend::now() const { return clock_.now(); }

void SubprocessBackend::submit(TrialId trial_id, const Configuration& config, double budget,
                               double deadline) {
  JobRequest request;
  request.trial_id = trial_id;
  request.config = config;
  request.budget = budget;
  const std::string line = job_request_to_json(request).dump() + "\n";

  Child child;
  child.trial_id = trial_id;
  child.budget = budget;
  child.deadline = deadline;
  Spawned spawned = spawn_child(command_, line);
  if (spawned.pid < 0) {
    child.spawn_failed = true;
  } else {
    child.pid = spawned.pid;
    child.out_fd = spawned.out_fd;
  }
  children_.push_back(std::move(child));
}

CompletedJob SubprocessBackend::reap(Child child, bool timed_out) {
  CompletedJob job;
  job.trial_id = child.trial_id;
  job.budget = child.budget;
  job.finished_at = clock_.now();
  bool protocol_failure = false;

  if (child.spawn_failed) {
    job.status = TrialStatus::failed;
    job.info["error"] = "failed to spawn evaluator";
    protocol_failure = true;
  } else if (timed_out) {
    kill_and_reap(child.pid);
    job.status = TrialStatus::failed;
    job.info["error"] = "evaluator timed out";
    job.info["timeout"] = "1";
  } else {
    const int exit_code = wait_for_exit(child.pid);
    const auto eol = child.buffer.find('\n');
    if (exit_code != 0) {
      job.status = TrialStatus::failed;
      job.info["error"] = "evaluator exited with status " + std::to_string(exit_code);
      protocol_failure = true;
    } else if (eol == std::string::npos) {
      job.status = TrialStatus::failed;
      job.info["error"] = "evaluator closed stdout without a result line";
      protocol_failure = true;
    } else {
      bool protocol_ok = false;
      JobResult r = parse_result_line(child.trial_id, child.buffer.substr(0, eol), &protocol_ok);
      protocol_failure = !protocol_ok;
      job.status = r.status;
      job.loss = r.loss;
      for (auto& [k, v] : r.info) job.info[k] = v;
    }
  }
  if (child.out_fd >= 0) close(child.out_fd);

  consecutive_protocol_failures_ = protocol_failure ? consecutive_protocol_failures_ + 1 : 0;
  if (consecutive_protocol_failures_ >= 5)
    throw EvaluatorError("five consecutive evaluator protocol failures");
  return job;
}

CompletedJob SubprocessBackend::next_result() {
  if (children_.empty()) throw std::logic_error("no job in flight");
  while (true) {
    for (std::size_t i = 0; i < children_.size(); ++i) {
      Child& c = children_[i];
      const bool finished =
          c.spawn_failed || c.eof || c.buffer.find('\n') != std::string::npos;
      const bool expired = !c.spawn_failed && clock_.now() > c.deadline;
      if (finished || expired) {
        Child done = std::move(c);
        children_.erase(children_.begin() + static_cast<std::ptrdiff_t>(i));
        return reap(std::move(done), expired && !finished);
      }
    }
    std::vector<pollfd> fds;
    fds.reserve(children_.size());
    for (const auto& c : children_) fds.push_back(pollfd{c.out_fd, POLLIN, 0});
    const int rc = poll(fds.data(), fds.size(), 200);
    if (rc < 0 && errno != EINTR) throw EvaluatorError("polling evaluator pipes failed");
    for (std::size_t i = 0; i < fds.size(); ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP))) continue;
      char buf[4096];
      const ssize_t n = read(children_[i].out_fd, buf, sizeof buf);
      if (n > 0)
        children_[i].buffer.append(buf, static_cast<std::size_t>(n));
      else
        children_[i].eof = true;
    }
  }
}

}  // namespace kdeband
