#include "kdeband/space.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace kdeband {

using nlohmann::json;

ParameterSpec ParameterSpec::make_continuous(std::string name, double low, double high,
                                             bool log_scale) {
  ParameterSpec p;
  p.name = std::move(name);
  p.kind = ParamKind::continuous;
  p.low = low;
  p.high = high;
  p.log_scale = log_scale;
  p.validate();
  return p;
}

ParameterSpec ParameterSpec::make_integer(std::string name, std::int64_t low, std::int64_t high,
                                          bool log_scale) {
  ParameterSpec p;
  p.name = std::move(name);
  p.kind = ParamKind::integer;
  p.low = static_cast<double>(low);
  p.high = static_cast<double>(high);
  p.log_scale = log_scale;
  p.validate();
  return p;
}

ParameterSpec ParameterSpec::make_categorical(std::string name, std::vector<std::string> choices) {
  ParameterSpec p;
  p.name = std::move(name);
  p.kind = ParamKind::categorical;
  p.choices = std::move(choices);
  p.validate();
  return p;
}

void ParameterSpec::validate() const {
  if (name.empty()) throw std::invalid_argument("parameter name must be non-empty");
  if (kind == ParamKind::categorical) {
    if (choices.size() < 2)
      throw std::invalid_argument("categorical parameter '" + name + "' needs >= 2 choices");
    std::set<std::string> uniq(choices.begin(), choices.end());
    if (uniq.size() != choices.size())
      throw std::invalid_argument("categorical parameter '" + name + "' has duplicate choices");
    return;
  }
  if (!std::isfinite(low) || !std::isfinite(high))
    throw std::invalid_argument("bounds of '" + name + "' must be finite");
  if (!(low < high))
    throw std::invalid_argument("invalid bounds for '" + name + "': low >= high");
  if (log_scale && !(low > 0.0))
    throw std::invalid_argument("log scale for '" + name + "' requires low > 0");
  if (kind == ParamKind::integer &&
      (low != std::floor(low) || high != std::floor(high)))
    throw std::invalid_argument("integer bounds for '" + name + "' must be whole numbers");
}

SearchSpace::SearchSpace(std::vector<ParameterSpec> parameters)
    : parameters_(std::move(parameters)) {
  if (parameters_.empty()) throw std::invalid_argument("search space must be non-empty");
  for (std::size_t i = 0; i < parameters_.size(); ++i) {
    parameters_[i].validate();
    if (!index_.emplace(parameters_[i].name, i).second)
      throw std::invalid_argument("duplicate parameter name '" + parameters_[i].name + "'");
  }
}

std::size_t SearchSpace::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
  return it->second;
}

namespace {

double numeric_value_of(const ParameterSpec& p, const ParamValue& v) {
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  if (std::holds_alternative<std::int64_t>(v))
    return static_cast<double>(std::get<std::int64_t>(v));
  throw std::invalid_argument("value for '" + p.name + "' must be numeric");
}

std::size_t choice_index_of(const ParameterSpec& p, const ParamValue& v) {
  if (std::holds_alternative<std::string>(v)) {
    const auto& label = std::get<std::string>(v);
    auto it = std::find(p.choices.begin(), p.choices.end(), label);
    if (it == p.choices.end())
      throw std::invalid_argument("'" + label + "' is not a choice of '" + p.name + "'");
    return static_cast<std::size_t>(it - p.choices.begin());
  }
  if (std::holds_alternative<std::int64_t>(v)) {
    const auto idx = std::get<std::int64_t>(v);
    if (idx < 0 || static_cast<std::size_t>(idx) >= p.choices.size())
      throw std::invalid_argument("choice index out of range for '" + p.name + "'");
    return static_cast<std::size_t>(idx);
  }
  throw std::invalid_argument("value for '" + p.name + "' must be a label or choice index");
}

// round half away from zero
std::int64_t round_away(double x) { return static_cast<std::int64_t>(std::llround(x)); }

}  // namespace

void SearchSpace::validate(const Configuration& config) const {
  if (config.values.size() != parameters_.size())
    throw std::invalid_argument("configuration must assign exactly one value per parameter");
  for (const auto& p : parameters_) {
    auto it = config.values.find(p.name);
    if (it == config.values.end())
      throw std::invalid_argument("configuration is missing '" + p.name + "'");
    const ParamValue& v = it->second;
    switch (p.kind) {
      case ParamKind::continuous: {
        const double x = numeric_value_of(p, v);
        if (!(x >= p.low && x <= p.high))
          throw std::invalid_argument("value for '" + p.name + "' out of bounds");
        break;
      }
      case ParamKind::integer: {
        const double x = numeric_value_of(p, v);
        if (x != std::floor(x))
          throw std::invalid_argument("value for '" + p.name + "' must be an integer");
        if (!(x >= p.low && x <= p.high))
          throw std::invalid_argument("value for '" + p.name + "' out of bounds");
        break;
      }
      case ParamKind::categorical:
        choice_index_of(p, v);
        break;
    }
  }
}

namespace detail {

double to_unit_numeric(const ParameterSpec& p, double value) {
  if (p.log_scale)
    return (std::log(value) - std::log(p.low)) / (std::log(p.high) - std::log(p.low));
  return (value - p.low) / (p.high - p.low);
}

double from_unit_numeric(const ParameterSpec& p, double coord) {
  if (p.log_scale)
    return std::exp(std::log(p.low) + coord * (std::log(p.high) - std::log(p.low)));
  return p.low + coord * (p.high - p.low);
}

}  // namespace detail

UnitVector SearchSpace::to_unit(const Configuration& config) const {
  validate(config);
  UnitVector u(parameters_.size());
  for (std::size_t i = 0; i < parameters_.size(); ++i) {
    const ParameterSpec& p = parameters_[i];
    const ParamValue& v = config.values.at(p.name);
    if (p.is_numeric())
      u[i] = detail::to_unit_numeric(p, numeric_value_of(p, v));
    else
      u[i] = static_cast<double>(choice_index_of(p, v));
  }
  return u;
}

Configuration SearchSpace::from_unit(const UnitVector& u) const {
  if (u.size() != parameters_.size())
    throw std::invalid_argument("unit vector has wrong dimension");
  Configuration config;
  for (std::size_t i = 0; i < parameters_.size(); ++i) {
    const ParameterSpec& p = parameters_[i];
    const double c = u[i];
    switch (p.kind) {
      case ParamKind::continuous: {
        if (!(c >= 0.0 && c <= 1.0))
          throw std::invalid_argument("coordinate for '" + p.name + "' outside [0,1]");
        config.values[p.name] = detail::from_unit_numeric(p, c);
        break;
      }
      case ParamKind::integer: {
        if (!(c >= 0.0 && c <= 1.0))
          throw std::invalid_argument("coordinate for '" + p.name + "' outside [0,1]");
        std::int64_t v = round_away(detail::from_unit_numeric(p, c));
        v = std::clamp(v, static_cast<std::int64_t>(p.low), static_cast<std::int64_t>(p.high));
        config.values[p.name] = v;
        break;
      }
      case ParamKind::categorical: {
        const auto idx = round_away(c);
        if (std::abs(c - static_cast<double>(idx)) > 1e-9 || idx < 0 ||
            static_cast<std::size_t>(idx) >= p.choices.size())
          throw std::invalid_argument("coordinate for '" + p.name + "' is not a valid choice index");
        config.values[p.name] = p.choices[static_cast<std::size_t>(idx)];
        break;
      }
    }
  }
  return config;
}

Configuration SearchSpace::sample_uniform(Rng& rng) const {
  UnitVector u(parameters_.size());
  for (std::size_t i = 0; i < parameters_.size(); ++i) {
    const ParameterSpec& p = parameters_[i];
    if (p.is_numeric())
      u[i] = rng.uniform();
    else
      u[i] = static_cast<double>(rng.below(p.choices.size()));
  }
  return from_unit(u);
}

namespace {

ParameterSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("parameter entry must be an object");
  const std::string name = j.at("name").get<std::string>();
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "categorical") {
    std::vector<std::string> choices = j.at("choices").get<std::vector<std::string>>();
    return ParameterSpec::make_categorical(name, std::move(choices));
  }
  const double low = j.at("low").get<double>();
  const double high = j.at("high").get<double>();
  const bool log_scale = j.value("log", false);
  if (kind == "continuous") return ParameterSpec::make_continuous(name, low, high, log_scale);
  if (kind == "integer") {
    if (low != std::floor(low) || high != std::floor(high))
      throw std::invalid_argument("integer bounds for '" + name + "' must be whole numbers");
    return ParameterSpec::make_integer(name, static_cast<std::int64_t>(low),
                                       static_cast<std::int64_t>(high), log_scale);
  }
  throw std::invalid_argument("unknown parameter kind '" + kind + "'");
}

json spec_to_json(const ParameterSpec& p) {
  json j;
  j["name"] = p.name;
  switch (p.kind) {
    case ParamKind::continuous:
      j["kind"] = "continuous";
      j["low"] = p.low;
      j["high"] = p.high;
      j["log"] = p.log_scale;
      break;
    case ParamKind::integer:
      j["kind"] = "integer";
      j["low"] = static_cast<std::int64_t>(p.low);
      j["high"] = static_cast<std::int64_t>(p.high);
      j["log"] = p.log_scale;
      break;
    case ParamKind::categorical:
      j["kind"] = "categorical";
      j["choices"] = p.choices;
      break;
  }
  return j;
}

}  // namespace

SearchSpace parse_space(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed search-space document: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("parameters") || !doc["parameters"].is_array())
    throw std::invalid_argument("search-space document must be an object with a \"parameters\" array");
  std::vector<ParameterSpec> specs;
  try {
    for (const auto& entry : doc["parameters"]) specs.push_back(spec_from_json(entry));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed parameter entry: ") + e.what());
  }
  return SearchSpace(std::move(specs));
}

std::string serialize_space(const SearchSpace& space) {
  json doc;
  doc["parameters"] = json::array();
  for (const auto& p : space.parameters()) doc["parameters"].push_back(spec_to_json(p));
  return doc.dump();
}

SearchSpace joint_space() {
  std::vector<ParameterSpec> p;
  p.push_back(ParameterSpec::make_continuous("learning_rate", 0.001, 1.0, true));
  p.push_back(ParameterSpec::make_integer("batch_size", 32, 128, true));
  p.push_back(ParameterSpec::make_continuous("l2_regularization", 0.00001, 0.001, true));
  p.push_back(ParameterSpec::make_continuous("momentum", 0.001, 0.99, false));
  p.push_back(ParameterSpec::make_continuous("mixup_alpha", 0.0, 1.0, false));
  p.push_back(ParameterSpec::make_integer("cutout_length", 0, 20, false));
  p.push_back(ParameterSpec::make_continuous("shakedrop_death_rate", 0.0, 1.0, false));
  for (int j = 1; j <= 3; ++j)
    p.push_back(ParameterSpec::make_integer("res_blocks_" + std::to_string(j), 1, 16, true));
  for (int j = 1; j <= 3; ++j)
    p.push_back(ParameterSpec::make_integer("res_branches_" + std::to_string(j), 1, 5, false));
  p.push_back(ParameterSpec::make_integer("filters_0", 8, 32, true));
  for (int j = 1; j <= 3; ++j)
    p.push_back(ParameterSpec::make_continuous("widen_factor_" + std::to_string(j), 0.5, 8.0, true));
  return SearchSpace(std::move(p));
}

Configuration joint_space_best_config() {
  Configuration c;
  c.values["learning_rate"] = 0.648188;
  c.values["batch_size"] = std::int64_t{89};
  c.values["l2_regularization"] = 0.000339;
  c.values["momentum"] = 0.099601;
  c.values["mixup_alpha"] = 0.492042;
  c.values["cutout_length"] = std::int64_t{3};
  c.values["shakedrop_death_rate"] = 0.038439;
  c.values["res_blocks_1"] = std::int64_t{3};
  c.values["res_blocks_2"] = std::int64_t{4};
  c.values["res_blocks_3"] = std::int64_t{2};
  c.values["res_branches_1"] = std::int64_t{1};
  c.values["res_branches_2"] = std::int64_t{1};
  c.values["res_branches_3"] = std::int64_t{4};
  c.values["filters_0"] = std::int64_t{16};
  c.values["widen_factor_1"] = 6.241141;
  c.values["widen_factor_2"] = 1.388867;
  c.values["widen_factor_3"] = 3.344766;
  return c;
}

SearchSpace cell_space(int num_blocks) {
  if (num_blocks < 1) throw std::invalid_argument("cell space needs at least one block");
  static const std::vector<std::string> kOperations = {
      "identity",        "conv_1x1",        "conv_3x3",        "conv_1x3_3x1",
      "conv_1x7_7x1",    "dilated_conv_3x3", "sep_conv_3x3",   "sep_conv_5x5",
      "sep_conv_7x7",    "avg_pool_3x3",    "max_pool_3x3",    "max_pool_5x5",
      "max_pool_7x7"};
  std::vector<ParameterSpec> p;
  for (int k = 1; k <= num_blocks; ++k) {
    // inputs: the cell's two inputs plus the outputs of blocks 1..k-1
    std::vector<std::string> inputs = {"cell_input_1", "cell_input_2"};
    for (int b = 1; b < k; ++b) inputs.push_back("block_" + std::to_string(b));
    const std::string prefix = "block_" + std::to_string(k) + "_";
    p.push_back(ParameterSpec::make_categorical(prefix + "input_1", inputs));
    p.push_back(ParameterSpec::make_categorical(prefix + "input_2", inputs));
    p.push_back(ParameterSpec::make_categorical(prefix + "op_1", kOperations));
    p.push_back(ParameterSpec::make_categorical(prefix + "op_2", kOperations));
    p.push_back(ParameterSpec::make_categorical(prefix + "combine", {"add", "concat"}));
  }
  return SearchSpace(std::move(p));
}

}  // namespace kdeband
