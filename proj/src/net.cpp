#include "kdeband/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace kdeband {

using nlohmann::json;

namespace {

void send_all(int fd, const std::string& bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw std::runtime_error("connection lost while sending");
    sent += static_cast<std::size_t>(n);
  }
}

void send_frame(int fd, const json& body) { send_all(fd, encode_message(body)); }

int connect_to(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  if (getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &result) != 0 || !result)
    throw std::runtime_error("cannot resolve " + host);
  int fd = -1;
  for (addrinfo* ai = result; ai; ai = ai->ai_next) {
    fd = socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    close(fd);
    fd = -1;
  }
  freeaddrinfo(result);
  if (fd < 0) throw std::runtime_error("cannot connect to " + host + ":" + std::to_string(port));
  return fd;
}

class SocketTransport : public WorkerTransport {
 public:
  explicit SocketTransport(int fd) : fd_(fd) {}
  void send(const json& body) override { send_frame(fd_, body); }

 private:
  int fd_;
};

}  // namespace

JobEvaluator command_evaluator(std::vector<std::string> command) {
  return [command = std::move(command)](const JobRequest& request) {
    return run_subprocess_evaluator(command, request, 3.0 * request.budget + 60.0);
  };
}

JobEvaluator function_evaluator(EvalFn fn) {
  return [fn = std::move(fn)](const JobRequest& request) {
    JobResult result;
    result.trial_id = request.trial_id;
    try {
      const EvalResult r = fn(request.config, request.budget);
      result.info = r.info;
      result.consumed_budget = r.cost < 0.0 ? request.budget : r.cost;
      if (r.loss.has_value() && std::isfinite(*r.loss)) {
        result.status = TrialStatus::success;
        result.loss = r.loss;
      } else {
        result.status = TrialStatus::failed;
      }
    } catch (const std::exception& e) {
      result.status = TrialStatus::failed;
      result.info["error"] = e.what();
    }
    return result;
  };
}

struct MasterBackend::Connection {
  int fd = -1;
  FrameReader reader;
  std::string worker_id;
  std::unique_ptr<SocketTransport> transport;
  bool closed = false;
};

MasterBackend::MasterBackend(const std::string& host, int port) : dispatcher_(clock_) {
  listen_fd_ = socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("cannot create listening socket");
  const int one = 1;
  setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    close(listen_fd_);
    throw std::runtime_error("listen address must be an IPv4 address, got " + host);
  }
  if (bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      listen(listen_fd_, 16) != 0) {
    close(listen_fd_);
    throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
  }
  fcntl(listen_fd_, F_SETFL, O_NONBLOCK);
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

MasterBackend::~MasterBackend() {
  for (auto& conn : connections_)
    if (conn.fd >= 0) close(conn.fd);
  if (listen_fd_ >= 0) close(listen_fd_);
}

std::size_t MasterBackend::capacity() const {
  return std::max<std::size_t>(1, dispatcher_.live_capacity());
}

void MasterBackend::submit(TrialId trial_id, const Configuration& config, double budget,
                           double deadline) {
  JobRequest request;
  request.trial_id = trial_id;
  request.config = config;
  request.budget = budget;
  dispatcher_.submit(std::move(request), deadline);
  pump(0);
}

CompletedJob MasterBackend::next_result() {
  while (true) {
    if (auto result = dispatcher_.poll_result()) return *result;
    if (dispatcher_.outstanding() == 0) throw std::logic_error("no job in flight");
    pump(200);
  }
}

void MasterBackend::accept_pending() {
  while (true) {
    const int fd = accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) return;
    Connection conn;
    conn.fd = fd;
    conn.transport = std::make_unique<SocketTransport>(fd);
    connections_.push_back(std::move(conn));
  }
}

void MasterBackend::close_connection(Connection& conn) {
  if (conn.closed) return;
  conn.closed = true;
  if (!conn.worker_id.empty()) dispatcher_.disconnect(conn.worker_id);
  close(conn.fd);
  conn.fd = -1;
}

void MasterBackend::read_connection(Connection& conn) {
  char buf[4096];
  while (true) {
    const ssize_t n = recv(conn.fd, buf, sizeof buf, MSG_DONTWAIT);
    if (n > 0) {
      conn.reader.feed(buf, static_cast<std::size_t>(n));
      continue;
    }
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) break;
    if (n < 0 && errno == EINTR) continue;
    close_connection(conn);
    return;
  }
  while (true) {
    std::optional<json> body;
    try {
      body = conn.reader.next();
    } catch (const std::exception&) {
      close_connection(conn);
      return;
    }
    if (!body) break;
    const std::string type = body->value("type", "");
    try {
      if (type == "register") {
        conn.worker_id = body->at("worker_id").get<std::string>();
        dispatcher_.register_worker(conn.worker_id, body->at("capacity").get<int>(),
                                    conn.transport.get());
      } else if (type == "heartbeat") {
        dispatcher_.heartbeat(body->value("worker_id", conn.worker_id));
      } else if (type == "result") {
        dispatcher_.on_result(conn.worker_id, job_result_from_json(*body));
      }
      // job/shutdown are master-to-worker only; ignore if echoed back
    } catch (const std::exception&) {
      close_connection(conn);
      return;
    }
  }
}

void MasterBackend::pump(int timeout_ms) {
  std::vector<pollfd> fds;
  fds.push_back(pollfd{listen_fd_, POLLIN, 0});
  std::vector<Connection*> order;
  for (auto& conn : connections_) {
    fds.push_back(pollfd{conn.fd, POLLIN, 0});
    order.push_back(&conn);
  }
  const int rc = poll(fds.data(), static_cast<nfds_t>(fds.size()), timeout_ms);
  if (rc >= 0) {
    if (fds[0].revents & POLLIN) accept_pending();
    for (std::size_t i = 0; i < order.size(); ++i)
      if (fds[i + 1].revents & (POLLIN | POLLHUP | POLLERR)) read_connection(*order[i]);
  }
  connections_.remove_if([](const Connection& c) { return c.closed; });
  dispatcher_.tick();
}

void MasterBackend::shutdown_workers() {
  dispatcher_.broadcast_shutdown();
  pump(0);
}

namespace {

/// Shared state between the worker's socket loop and its evaluation threads.
struct WorkerQueues {
  std::mutex mutex;
  std::condition_variable cv;
  std::deque<JobRequest> jobs;
  std::deque<JobResult> results;
  bool stopping = false;
};

void evaluation_thread(WorkerQueues& q, const JobEvaluator& evaluate) {
  while (true) {
    JobRequest request;
    {
      std::unique_lock<std::mutex> lock(q.mutex);
      q.cv.wait(lock, [&] { return q.stopping || !q.jobs.empty(); });
      if (q.jobs.empty()) return;
      request = std::move(q.jobs.front());
      q.jobs.pop_front();
    }
    JobResult result = evaluate(request);
    result.trial_id = request.trial_id;
    {
      std::lock_guard<std::mutex> lock(q.mutex);
      q.results.push_back(std::move(result));
    }
  }
}

}  // namespace

int run_worker(const std::string& host, int port, const std::string& worker_id, int capacity,
               const JobEvaluator& evaluate, const std::atomic<bool>* stop) {
  if (capacity < 1) throw std::invalid_argument("worker capacity must be at least 1");
  const int fd = connect_to(host, port);
  WorkerQueues queues;
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(capacity));
  for (int i = 0; i < capacity; ++i)
    threads.emplace_back([&] { evaluation_thread(queues, evaluate); });

  int exit_code = 1;
  SteadyClock clock;
  double last_heartbeat = -kHeartbeatInterval;
  FrameReader reader;
  bool running = true;
  try {
    send_frame(fd, register_message(worker_id, capacity));
    while (running && !(stop && stop->load())) {
      if (clock.now() - last_heartbeat >= kHeartbeatInterval) {
        send_frame(fd, heartbeat_message(worker_id));
        last_heartbeat = clock.now();
      }
      {
        std::unique_lock<std::mutex> lock(queues.mutex);
        while (!queues.results.empty()) {
          JobResult result = std::move(queues.results.front());
          queues.results.pop_front();
          lock.unlock();
          send_frame(fd, job_result_to_json(result));
          lock.lock();
        }
      }
      pollfd pfd{fd, POLLIN, 0};
      const int rc = poll(&pfd, 1, 200);
      if (rc < 0 && errno != EINTR) break;
      if (rc > 0 && (pfd.revents & (POLLIN | POLLHUP | POLLERR))) {
        char buf[4096];
        const ssize_t n = recv(fd, buf, sizeof buf, 0);
        if (n <= 0) break;
        reader.feed(buf, static_cast<std::size_t>(n));
        while (auto body = reader.next()) {
          const std::string type = body->value("type", "");
          if (type == "job") {
            std::lock_guard<std::mutex> lock(queues.mutex);
            queues.jobs.push_back(job_request_from_json(*body));
            queues.cv.notify_one();
          } else if (type == "shutdown") {
            exit_code = 0;
            running = false;
          }
        }
      }
    }
    if (stop && stop->load()) exit_code = 0;
  } catch (const std::exception&) {
    exit_code = 1;
  }

  {
    std::lock_guard<std::mutex> lock(queues.mutex);
    queues.stopping = true;
  }
  queues.cv.notify_all();
  for (auto& t : threads) t.join();

  // flush results finished during shutdown so the master is not left waiting
  try {
    std::lock_guard<std::mutex> lock(queues.mutex);
    while (!queues.results.empty()) {
      send_frame(fd, job_result_to_json(queues.results.front()));
      queues.results.pop_front();
    }
  } catch (const std::exception&) {
  }
  close(fd);
  return exit_code;
}

}  // namespace kdeband
