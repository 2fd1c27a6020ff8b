#include <chrono>
#include <iostream>
#include <string>
#include <thread>
#include <variant>

#include <json.hpp>

#include "kdeband/protocol.hpp"

// Test evaluator speaking the child protocol: one job line on stdin, one
// result line on stdout. Modes (argv[1], default "quadratic"):
//   quadratic   loss = sum over values: real -> v^2, integer -> v,
//               categorical -> label length
//   fail        report an explicit failure
//   garbage     write a line that is not JSON
//   silent      exit without writing anything
//   slow <ms>   sleep, then answer like quadratic

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "quadratic";

  std::string line;
  if (!std::getline(std::cin, line)) return 1;
  kdeband::JobRequest request;
  try {
    request = kdeband::job_request_from_json(nlohmann::json::parse(line));
  } catch (const std::exception&) {
    std::cout << "{\"status\":\"failed\"}" << std::endl;
    return 0;
  }

  if (mode == "silent") return 0;
  if (mode == "garbage") {
    std::cout << "not a result" << std::endl;
    return 0;
  }
  if (mode == "fail") {
    std::cout << "{\"status\":\"failed\",\"consumed_budget\":1}" << std::endl;
    return 0;
  }
  if (mode == "slow") {
    const int ms = argc > 2 ? std::stoi(argv[2]) : 2000;
    std::this_thread::sleep_for(std::chrono::milliseconds(ms));
  }

  double loss = 0.0;
  for (const auto& [name, value] : request.config.values) {
    if (std::holds_alternative<double>(value)) {
      const double v = std::get<double>(value);
      loss += v * v;
    } else if (std::holds_alternative<std::int64_t>(value)) {
      loss += static_cast<double>(std::get<std::int64_t>(value));
    } else {
      loss += static_cast<double>(std::get<std::string>(value).size());
    }
  }
  nlohmann::json result{{"loss", loss}, {"consumed_budget", request.budget}};
  std::cout << result.dump() << std::endl;
  return 0;
}
