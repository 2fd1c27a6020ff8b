#pragma once

#include <chrono>

namespace kdeband {

/// Time source in seconds. Injected wherever timing drives behaviour so tests
/// and deterministic runs can advance time explicitly.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() const = 0;
};

/// Clock advanced by hand.
class ManualClock : public Clock {
 public:
  explicit ManualClock(double start = 0.0) : now_(start) {}
  double now() const override { return now_; }
  void advance(double seconds) { now_ += seconds; }
  void set(double seconds) { now_ = seconds; }

 private:
  double now_;
};

/// Monotonic wall clock, zeroed at construction.
class SteadyClock : public Clock {
 public:
  SteadyClock() : start_(std::chrono::steady_clock::now()) {}
  double now() const override {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace kdeband
