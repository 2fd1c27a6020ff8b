#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "kdeband/scheduler.hpp"
#include "kdeband/space.hpp"

namespace kdeband {

/// One evaluation order on the wire. Field names match the run-history
/// observation records so histories can be rebuilt from wire logs.
struct JobRequest {
  TrialId trial_id = 0;
  Configuration config;
  double budget = 0.0;
  std::string budget_unit = "seconds";

  bool operator==(const JobRequest&) const = default;
};

/// One evaluation outcome on the wire. `consumed_budget` is what the
/// evaluator reports actually spending.
struct JobResult {
  TrialId trial_id = 0;
  std::optional<double> loss;
  TrialStatus status = TrialStatus::failed;  // success or failed only
  double consumed_budget = 0.0;
  std::map<std::string, std::string> info;

  bool operator==(const JobResult&) const = default;
};

static constexpr double kHeartbeatInterval = 5.0;
static constexpr double kLivenessWindow = 15.0;

/// Frame a message body: 4-byte big-endian length prefix, then the UTF-8
/// serialized body, whose "type" field is one of register, job, result,
/// heartbeat, shutdown. Throws std::invalid_argument on missing/unknown type,
/// non-finite numbers, or bodies longer than 2^32 - 1 bytes.
std::string encode_message(const nlohmann::json& body);

/// Inverse of encode_message for one complete frame. Throws
/// std::invalid_argument on truncated input, trailing bytes, or a malformed
/// body.
nlohmann::json decode_message(const std::string& frame);

/// Incremental frame splitter for stream transports. Feed arbitrary chunks;
/// next() yields complete decoded bodies in order.
class FrameReader {
 public:
  void feed(const char* data, std::size_t size);
  std::optional<nlohmann::json> next();

 private:
  std::string buffer_;
};

nlohmann::json job_request_to_json(const JobRequest& request);
JobRequest job_request_from_json(const nlohmann::json& body);

nlohmann::json job_result_to_json(const JobResult& result);
JobResult job_result_from_json(const nlohmann::json& body);

nlohmann::json register_message(const std::string& worker_id, int capacity);
nlohmann::json heartbeat_message(const std::string& worker_id);
nlohmann::json shutdown_message();

}  // namespace kdeband
