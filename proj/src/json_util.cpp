#include "kdeband/json_util.hpp"

namespace kdeband {

using nlohmann::json;

json configuration_to_json(const Configuration& config) {
  json j = json::object();
  for (const auto& [name, value] : config.values) {
    if (std::holds_alternative<double>(value))
      j[name] = std::get<double>(value);
    else if (std::holds_alternative<std::int64_t>(value))
      j[name] = std::get<std::int64_t>(value);
    else
      j[name] = std::get<std::string>(value);
  }
  return j;
}

Configuration configuration_from_json(const json& j) {
  Configuration c;
  for (const auto& [name, value] : j.items()) {
    if (value.is_string())
      c.values[name] = value.get<std::string>();
    else if (value.is_number_integer() || value.is_number_unsigned())
      c.values[name] = value.get<std::int64_t>();
    else
      c.values[name] = value.get<double>();
  }
  return c;
}

Configuration configuration_from_json(const json& j, const SearchSpace& space) {
  Configuration c;
  for (const auto& [name, value] : j.items()) {
    if (value.is_string()) {
      c.values[name] = value.get<std::string>();
    } else if (value.is_number_integer() || value.is_number_unsigned()) {
      if (space.has(name) &&
          space.parameter(space.index_of(name)).kind == ParamKind::continuous)
        c.values[name] = value.get<double>();
      else
        c.values[name] = value.get<std::int64_t>();
    } else {
      c.values[name] = value.get<double>();
    }
  }
  return c;
}

json sampler_params_to_json(const SamplerParams& p) {
  json j;
  j["gamma"] = p.gamma;
  j["random_fraction"] = p.random_fraction;
  j["n_candidates"] = p.n_candidates;
  j["min_points_per_model"] = p.min_points_per_model;
  j["bandwidth_factor"] = p.bandwidth_factor;
  j["min_bandwidth"] = p.min_bandwidth;
  j["cat_smoothing"] = p.cat_smoothing;
  return j;
}

SamplerParams sampler_params_from_json(const json& j) {
  SamplerParams p;
  p.gamma = j.at("gamma").get<double>();
  p.random_fraction = j.at("random_fraction").get<double>();
  p.n_candidates = j.at("n_candidates").get<int>();
  p.min_points_per_model = j.at("min_points_per_model").get<int>();
  p.bandwidth_factor = j.at("bandwidth_factor").get<double>();
  p.min_bandwidth = j.at("min_bandwidth").get<double>();
  p.cat_smoothing = j.at("cat_smoothing").get<double>();
  return p;
}

}  // namespace kdeband
