#pragma once

// Conditional hyperparameter space for one (architecture, operator) pair.

#include "hgnn/config.hpp"

#include "json.hpp"

#include <functional>
#include <map>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace hgnn {

enum class ParamKind { float_linear, float_log, integer, categorical };
std::string to_string(ParamKind k);

/// Numbers (integers included) are doubles; categorical values are strings.
using ParamValue = std::variant<double, std::string>;
using Assignment = std::map<std::string, ParamValue>;

double number(const Assignment& a, const std::string& name);
const std::string& choice(const Assignment& a, const std::string& name);
bool has(const Assignment& a, const std::string& name);

struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::float_linear;
  double low = 0;
  double high = 1;
  std::vector<std::string> choices;
  /// Names of earlier parameters the condition reads.
  std::vector<std::string> depends_on;
  std::function<bool(const Assignment&)> condition;  // empty: always active
  std::string condition_text;

  bool active(const Assignment& partial) const { return !condition || condition(partial); }
  /// Bounds and choice membership (kind-aware: integers must be whole).
  bool admits(const ParamValue& v) const;
  ParamValue sample_uniform(std::mt19937_64& rng) const;
};

using SearchSpace = std::vector<ParamSpec>;

SearchSpace build_search_space(Architecture arch, OperatorKind op);

/// Draws every active parameter uniformly (log-uniform for float_log), in
/// declaration order.
Assignment sample_uniform(const SearchSpace& space, std::mt19937_64& rng);

/// Checks bounds, conditions and that inactive parameters are absent.
/// Returns human-readable violations.
std::vector<std::string> check_assignment(const SearchSpace& space, const Assignment& a);

/// Maps a sampled assignment to a ModelConfig. Cyclic bounds are swapped
/// when base >= max.
ModelConfig config_from_assignment(Architecture arch, OperatorKind op, const Assignment& a, int output_size);

nlohmann::json assignment_to_json(const SearchSpace& space, const Assignment& a);
Assignment assignment_from_json(const nlohmann::json& j);

}  // namespace hgnn
