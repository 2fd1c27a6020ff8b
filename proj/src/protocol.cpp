#include "kdeband/protocol.hpp"

#include <cmath>
#include <stdexcept>

#include "kdeband/json_util.hpp"

namespace kdeband {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxBody = 0xFFFFFFFFull;

bool known_type(const std::string& type) {
  return type == "register" || type == "job" || type == "result" || type == "heartbeat" ||
         type == "shutdown";
}

void check_encodable(const json& node) {
  if (node.is_number_float() && !std::isfinite(node.get<double>()))
    throw std::invalid_argument("message contains a non-finite number");
  if (node.is_object() || node.is_array())
    for (const auto& child : node) check_encodable(child);
}

}  // namespace

std::string encode_message(const json& body) {
  if (!body.is_object() || !body.contains("type") || !body.at("type").is_string() ||
      !known_type(body.at("type").get<std::string>()))
    throw std::invalid_argument("message body requires a known \"type\" field");
  check_encodable(body);
  const std::string payload = body.dump();
  if (payload.size() > kMaxBody) throw std::invalid_argument("message body too large to frame");
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string frame;
  frame.reserve(4 + payload.size());
  frame.push_back(static_cast<char>((n >> 24) & 0xFF));
  frame.push_back(static_cast<char>((n >> 16) & 0xFF));
  frame.push_back(static_cast<char>((n >> 8) & 0xFF));
  frame.push_back(static_cast<char>(n & 0xFF));
  frame += payload;
  return frame;
}

json decode_message(const std::string& frame) {
  if (frame.size() < 4) throw std::invalid_argument("frame shorter than its length prefix");
  const auto b = [&](std::size_t i) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(frame[i]));
  };
  const std::uint32_t n = (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
  if (frame.size() != 4 + static_cast<std::size_t>(n))
    throw std::invalid_argument("frame length does not match its prefix");
  json body;
  try {
    body = json::parse(frame.substr(4));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed message body: ") + e.what());
  }
  if (!body.is_object() || !body.contains("type") || !body.at("type").is_string() ||
      !known_type(body.at("type").get<std::string>()))
    throw std::invalid_argument("message body requires a known \"type\" field");
  return body;
}

void FrameReader::feed(const char* data, std::size_t size) { buffer_.append(data, size); }

std::optional<json> FrameReader::next() {
  if (buffer_.size() < 4) return std::nullopt;
  const auto b = [&](std::size_t i) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(buffer_[i]));
  };
  const std::uint32_t n = (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
  if (buffer_.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
  json body = decode_message(buffer_.substr(0, 4 + n));
  buffer_.erase(0, 4 + n);
  return body;
}

json job_request_to_json(const JobRequest& request) {
  json j;
  j["type"] = "job";
  j["trial_id"] = request.trial_id;
  j["config"] = configuration_to_json(request.config);
  j["budget"] = request.budget;
  j["budget_unit"] = request.budget_unit;
  return j;
}

JobRequest job_request_from_json(const json& body) {
  if (body.value("type", "") != "job") throw std::invalid_argument("not a job message");
  JobRequest r;
  r.trial_id = body.at("trial_id").get<TrialId>();
  r.config = configuration_from_json(body.at("config"));
  r.budget = body.at("budget").get<double>();
  r.budget_unit = body.value("budget_unit", "seconds");
  return r;
}

json job_result_to_json(const JobResult& result) {
  if (result.status == TrialStatus::pending)
    throw std::invalid_argument("a result message must be success or failed");
  if (result.status == TrialStatus::success &&
      (!result.loss.has_value() || !std::isfinite(*result.loss)))
    throw std::invalid_argument("a successful result requires a finite loss");
  json j;
  j["type"] = "result";
  j["trial_id"] = result.trial_id;
  j["status"] = result.status == TrialStatus::success ? "success" : "failed";
  if (result.loss.has_value()) j["loss"] = *result.loss;
  j["consumed_budget"] = result.consumed_budget;
  j["info"] = result.info;
  return j;
}

JobResult job_result_from_json(const json& body) {
  if (body.value("type", "") != "result") throw std::invalid_argument("not a result message");
  JobResult r;
  r.trial_id = body.at("trial_id").get<TrialId>();
  const std::string status = body.at("status").get<std::string>();
  if (status == "success")
    r.status = TrialStatus::success;
  else if (status == "failed")
    r.status = TrialStatus::failed;
  else
    throw std::invalid_argument("unknown result status '" + status + "'");
  if (body.contains("loss")) r.loss = body.at("loss").get<double>();
  if (r.status == TrialStatus::success && (!r.loss.has_value() || !std::isfinite(*r.loss)))
    throw std::invalid_argument("a successful result requires a finite loss");
  if (r.status == TrialStatus::failed) r.loss.reset();
  r.consumed_budget = body.value("consumed_budget", 0.0);
  r.info = body.value("info", std::map<std::string, std::string>{});
  return r;
}

json register_message(const std::string& worker_id, int capacity) {
  if (capacity < 1) throw std::invalid_argument("worker capacity must be at least 1");
  json j;
  j["type"] = "register";
  j["worker_id"] = worker_id;
  j["capacity"] = capacity;
  return j;
}

json heartbeat_message(const std::string& worker_id) {
  json j;
  j["type"] = "heartbeat";
  j["worker_id"] = worker_id;
  return j;
}

json shutdown_message() {
  json j;
  j["type"] = "shutdown";
  return j;
}

}  // namespace kdeband
