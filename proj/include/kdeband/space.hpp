#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "kdeband/rng.hpp"

namespace kdeband {

enum class ParamKind { continuous, integer, categorical };

/// One dimension of a search space: a bounded numeric range (optionally
/// log-scaled) or an ordered list of categorical choices.
struct ParameterSpec {
  std::string name;
  ParamKind kind = ParamKind::continuous;
  double low = 0.0;
  double high = 0.0;
  bool log_scale = false;
  std::vector<std::string> choices;  // categorical only, >= 2 entries

  static ParameterSpec make_continuous(std::string name, double low, double high,
                                       bool log_scale = false);
  static ParameterSpec make_integer(std::string name, std::int64_t low, std::int64_t high,
                                    bool log_scale = false);
  static ParameterSpec make_categorical(std::string name, std::vector<std::string> choices);

  bool is_numeric() const { return kind != ParamKind::categorical; }
  std::size_t cardinality() const { return choices.size(); }

  bool operator==(const ParameterSpec&) const = default;

  /// Throws std::invalid_argument when the spec violates its own invariants.
  void validate() const;
};

using ParamValue = std::variant<double, std::int64_t, std::string>;

/// A concrete assignment of one value per parameter, keyed by name.
/// Categorical values are stored as choice labels.
struct Configuration {
  std::map<std::string, ParamValue> values;

  bool operator==(const Configuration&) const = default;
};

/// Internal coordinates: numeric dims mapped to [0,1] (affine in the value or
/// in its log when log-scaled), categorical dims carrying the choice index as
/// a whole number.
using UnitVector = std::vector<double>;

class SearchSpace {
 public:
  SearchSpace() = default;
  explicit SearchSpace(std::vector<ParameterSpec> parameters);

  std::size_t dimension() const { return parameters_.size(); }
  const std::vector<ParameterSpec>& parameters() const { return parameters_; }
  const ParameterSpec& parameter(std::size_t i) const { return parameters_.at(i); }
  std::size_t index_of(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  /// Throws std::invalid_argument when config is incomplete, has stray keys,
  /// or any value is out of bounds / of the wrong type.
  void validate(const Configuration& config) const;

  UnitVector to_unit(const Configuration& config) const;
  Configuration from_unit(const UnitVector& u) const;

  /// Numeric kinds uniform in the unit (transformed) scale, categorical
  /// uniform over choices.
  Configuration sample_uniform(Rng& rng) const;

  bool operator==(const SearchSpace& other) const { return parameters_ == other.parameters_; }

 private:
  std::vector<ParameterSpec> parameters_;
  std::map<std::string, std::size_t> index_;
};

/// Parse a search-space document: {"parameters": [...]} with entries
/// {"name", "kind", "low", "high", "log"} or {"name", "kind", "choices"}.
/// Array order is the canonical dimension order.
SearchSpace parse_space(const std::string& text);
std::string serialize_space(const SearchSpace& space);

/// The built-in 17-parameter joint architecture + hyperparameter space
/// (7 training hyperparameters, 10 architectural choices).
SearchSpace joint_space();

/// Reference values for the best configuration found in the joint space at
/// the largest budget; also a handy fixture for tests and demos.
Configuration joint_space_best_config();

/// Cell search space over B blocks: per block two input selectors (k+1
/// choices for block k), two operation selectors (13 choices each) and a
/// combiner (add/concat) -- 5B categorical parameters in total.
SearchSpace cell_space(int num_blocks);

namespace detail {
double to_unit_numeric(const ParameterSpec& p, double value);
double from_unit_numeric(const ParameterSpec& p, double coord);  // no integer rounding
}  // namespace detail

}  // namespace kdeband
