#pragma once

// JSON run configuration: strict schema validation (unknown keys rejected),
// then construction of the graph, volume, boundary, model, initial law and
// observable described by the file. The parsed document is kept verbatim for
// echoing into reports.

#include <json.hpp>

#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "kcmlab/experiments.hpp"

namespace kcmlab {

using Json = nlohmann::ordered_json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace cfg {

inline void require_keys(const Json& obj, const std::string& where,
                         const std::set<std::string>& allowed,
                         const std::set<std::string>& required) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
  for (const auto& key : required)
    if (!obj.contains(key))
      throw ConfigError(where + " misses required key \"" + key + "\"");
}

inline double number(const Json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + " must be a number");
  return j.get<double>();
}

inline int integer(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + " must be an integer");
  return j.get<int>();
}

}  // namespace cfg

inline Graph parse_graph(const Json& j) {
  cfg::require_keys(j, "graph", {"lattice", "adjacency_file"}, {});
  if (j.contains("lattice") == j.contains("adjacency_file"))
    throw ConfigError("graph needs exactly one of \"lattice\" or \"adjacency_file\"");
  if (j.contains("lattice")) {
    const Json& lat = j["lattice"];
    cfg::require_keys(lat, "graph.lattice", {"dims", "periodic"}, {"dims"});
    if (!lat["dims"].is_array() || lat["dims"].empty())
      throw ConfigError("graph.lattice.dims must be a nonempty array");
    std::vector<int> dims;
    for (const auto& d : lat["dims"])
      dims.push_back(cfg::integer(d, "graph.lattice.dims entry"));
    bool periodic = lat.value("periodic", false);
    return build_lattice(dims, periodic);
  }
  return read_adjacency_file(j["adjacency_file"].get<std::string>());
}

// "all", "interior" (vertices of maximal degree) or {"list": [...]}.
inline std::vector<int> parse_volume(const Json& j, const Graph& g) {
  std::vector<int> volume;
  if (j.is_string()) {
    std::string kind = j.get<std::string>();
    if (kind == "all") {
      for (int v = 0; v < g.vertex_count(); ++v) volume.push_back(v);
      return volume;
    }
    if (kind == "interior") {
      int max_deg = 0;
      for (int v = 0; v < g.vertex_count(); ++v)
        max_deg = std::max(max_deg, g.degree(v));
      for (int v = 0; v < g.vertex_count(); ++v)
        if (g.degree(v) == max_deg) volume.push_back(v);
      return volume;
    }
    throw ConfigError("volume must be \"all\", \"interior\" or {\"list\": [...]}");
  }
  cfg::require_keys(j, "volume", {"list"}, {"list"});
  for (const auto& v : j["list"])
    volume.push_back(cfg::integer(v, "volume.list entry"));
  return volume;
}

inline BoundaryCondition parse_boundary(const Json& j) {
  if (j.is_string()) {
    std::string kind = j.get<std::string>();
    if (kind == "empty") return BoundaryCondition::empty();
    if (kind == "filled") return BoundaryCondition::filled();
    throw ConfigError("boundary must be \"empty\", \"filled\", "
                      "{\"filled_except_at\": v} or {\"explicit\": {...}}");
  }
  cfg::require_keys(j, "boundary", {"filled_except_at", "explicit"}, {});
  if (j.contains("filled_except_at"))
    return BoundaryCondition::filled_except_at(
        cfg::integer(j["filled_except_at"], "boundary.filled_except_at"));
  if (j.contains("explicit")) {
    std::map<int, int> values;
    for (auto it = j["explicit"].begin(); it != j["explicit"].end(); ++it) {
      int value = cfg::integer(it.value(), "boundary.explicit value");
      if (value != 0 && value != 1)
        throw ConfigError("boundary values must be 0 or 1");
      values[std::stoi(it.key())] = value;
    }
    return BoundaryCondition::explicit_values(std::move(values));
  }
  throw ConfigError("boundary object must carry \"filled_except_at\" or \"explicit\"");
}

inline ModelSpec parse_model(const Json& j) {
  cfg::require_keys(j, "model", {"q", "constraint"}, {"q"});
  ModelSpec spec;
  spec.q = cfg::number(j["q"], "model.q");
  std::string c = j.value("constraint", "fa1f");
  if (c == "fa1f")
    spec.constraint = ConstraintKind::FA1f;
  else if (c == "two-within-two")
    spec.constraint = ConstraintKind::TwoWithinTwo;
  else
    throw ConfigError("model.constraint must be \"fa1f\" or \"two-within-two\"");
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

inline InitialLaw parse_initial(const Json& j) {
  cfg::require_keys(j, "initial",
                    {"bernoulli_fill", "dirac", "periodic_vacancies"}, {});
  int given = j.contains("bernoulli_fill") + j.contains("dirac") +
              j.contains("periodic_vacancies");
  if (given != 1)
    throw ConfigError("initial needs exactly one of \"bernoulli_fill\", "
                      "\"dirac\", \"periodic_vacancies\"");
  if (j.contains("bernoulli_fill")) {
    double p = cfg::number(j["bernoulli_fill"], "initial.bernoulli_fill");
    if (p < 0 || p > 1)
      throw ConfigError("initial.bernoulli_fill must lie in [0,1]");
    return InitialLaw::bernoulli(p);
  }
  if (j.contains("dirac")) {
    std::vector<std::uint8_t> eta;
    for (const auto& b : j["dirac"]) {
      int v = cfg::integer(b, "initial.dirac entry");
      if (v != 0 && v != 1) throw ConfigError("initial.dirac entries must be 0 or 1");
      eta.push_back(static_cast<std::uint8_t>(v));
    }
    return InitialLaw::dirac(std::move(eta));
  }
  return InitialLaw::periodic_vacancies(
      cfg::integer(j["periodic_vacancies"], "initial.periodic_vacancies"));
}

// {"vacancy_at": v} is the centered vacancy indicator 1 - sigma(v) - q;
// otherwise an explicit truth table {"support": [...], "table": [...]}.
inline Observable parse_observable(const Json& j, double q) {
  Observable f;
  if (j.contains("vacancy_at")) {
    cfg::require_keys(j, "observable", {"vacancy_at"}, {"vacancy_at"});
    return Observable::vacancy_at(cfg::integer(j["vacancy_at"], "observable.vacancy_at"),
                                  q);
  }
  cfg::require_keys(j, "observable", {"support", "table"}, {"support", "table"});
  for (const auto& v : j["support"])
    f.support.push_back(cfg::integer(v, "observable.support entry"));
  for (const auto& v : j["table"])
    f.table.push_back(cfg::number(v, "observable.table entry"));
  try {
    f.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return f;
}

inline std::vector<double> parse_times(const Json& j) {
  if (!j.is_array() || j.empty())
    throw ConfigError("times must be a nonempty array");
  std::vector<double> times;
  for (const auto& t : j) times.push_back(cfg::number(t, "times entry"));
  double prev = 0;
  for (double t : times) {
    if (t < prev) throw ConfigError("times must be sorted and nonnegative");
    prev = t;
  }
  return times;
}

// Parse with a line-numbered message on malformed input.
inline Json parse_config_text(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i)
      if (text[i] == '\n') ++line;
    throw ConfigError("malformed config at line " + std::to_string(line) + ": " +
                      e.what());
  }
}

}  // namespace kcmlab
