#pragma once

// AnalysisSpec <-> JSON (schema_version 1).
//
// {
//   "schema_version": 1,
//   "family": "linear" | "logistic" | "cox",
//   "outcome": {"reference": "y", "surrogate": "y_s", "perfect": false},
//      cox:    {"reference": {"time": "t", "event": "d"},
//               "surrogate": {"time": "t_s", "event": "d_s"}, "perfect": false},
//   "predictors": [{"reference": "x1", "surrogates": ["x1_s"], "perfect": false}, ...],
//   "validation": "validated",
//   "cluster": null, "weight": null,
//   "ties": "efron",
//   "resample": {"method": "jackknife", "groups": 0, "replicates": 400, "seed": 1},
//   "alpha": 0.05
// }

#include <fstream>
#include <set>
#include <string>
#include <type_traits>

#include "augreg/error.hpp"
#include "augreg/study.hpp"
#include "json.hpp"

namespace augreg {

using Json = nlohmann::ordered_json;

inline constexpr int kSpecSchemaVersion = 1;

namespace detail {

[[noreturn]] inline void spec_error(const std::string& path, const std::string& msg) {
  throw Error(ErrorKind::InvalidArgument, "spec " + path + ": " + msg);
}

inline void check_keys(const Json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) spec_error(path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) spec_error(path, "unknown key '" + key + "'");
  }
}

inline std::string get_string(const Json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) spec_error(path, std::string("missing '") + key + "'");
  const auto& v = obj.at(key);
  if (!v.is_string() || v.get<std::string>().empty()) spec_error(path + "." + key, "expected a non-empty string");
  return v.get<std::string>();
}

inline std::string get_optional_string(const Json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key) || obj.at(key).is_null()) return {};
  return get_string(obj, path, key);
}

inline bool get_bool(const Json& obj, const std::string& path, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_boolean()) spec_error(path + "." + key, "expected true or false");
  return obj.at(key).get<bool>();
}

template <typename T>
T get_number(const Json& obj, const std::string& path, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) spec_error(path + "." + key, "expected an integer");
    if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
    const auto i = v.get<std::int64_t>();
    if (i < 0) spec_error(path + "." + key, "must be >= 0");
    return static_cast<T>(i);
  } else {
    if (!v.is_number()) spec_error(path + "." + key, "expected a number");
    return v.get<T>();
  }
}

}  // namespace detail

/// Column names must be unique across roles. The one permitted overlap is a
/// perfect variable whose reference column is also its surrogate column.
inline void check_spec_columns(const AnalysisSpec& spec) {
  std::set<std::string> seen;
  auto claim = [&](const std::string& name, const std::string& role) {
    if (name.empty()) return;
    if (!seen.insert(name).second) {
      throw Error(ErrorKind::InvalidArgument, "spec: column '" + name + "' is used more than once (" + role + ")");
    }
  };
  claim(spec.validation_column, "validation");
  claim(spec.cluster_column, "cluster");
  claim(spec.weight_column, "weight");
  const auto& o = spec.outcome;
  if (spec.family == Family::Cox) {
    const bool shared = o.perfect && o.reference == o.surrogate && o.reference_event == o.surrogate_event;
    claim(o.reference, "reference time");
    claim(o.reference_event, "reference event");
    if (!shared) {
      claim(o.surrogate, "surrogate time");
      claim(o.surrogate_event, "surrogate event");
    }
  } else {
    claim(o.reference, "reference outcome");
    if (!(o.perfect && o.reference == o.surrogate)) claim(o.surrogate, "surrogate outcome");
  }
  for (const auto& pred : spec.predictors) {
    claim(pred.reference, "reference predictor");
    for (const auto& s : pred.surrogates) {
      if (pred.perfect && s == pred.reference) continue;
      claim(s, "surrogate of " + pred.reference);
    }
  }
}

inline AnalysisSpec spec_from_json(const Json& j) {
  using namespace detail;
  check_keys(j, "", {"schema_version", "family", "outcome", "predictors", "validation", "cluster", "weight", "ties",
                     "resample", "alpha"});
  if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer()) {
    spec_error("schema_version", "missing or not an integer");
  }
  if (j.at("schema_version").get<int>() != kSpecSchemaVersion) {
    spec_error("schema_version", "unsupported version " + j.at("schema_version").dump());
  }

  AnalysisSpec spec;
  const auto family = get_string(j, "", "family");
  if (family == "linear") spec.family = Family::Linear;
  else if (family == "logistic") spec.family = Family::Logistic;
  else if (family == "cox") spec.family = Family::Cox;
  else spec_error("family", "expected linear, logistic or cox; got '" + family + "'");

  if (!j.contains("outcome")) spec_error("", "missing 'outcome'");
  const auto& out = j.at("outcome");
  check_keys(out, "outcome", {"reference", "surrogate", "perfect"});
  if (spec.family == Family::Cox) {
    for (const char* side : {"reference", "surrogate"}) {
      if (!out.contains(side)) spec_error("outcome", std::string("missing '") + side + "'");
      const auto& pair = out.at(side);
      const std::string path = std::string("outcome.") + side;
      check_keys(pair, path, {"time", "event"});
      auto& time = side[0] == 'r' ? spec.outcome.reference : spec.outcome.surrogate;
      auto& event = side[0] == 'r' ? spec.outcome.reference_event : spec.outcome.surrogate_event;
      time = get_string(pair, path, "time");
      event = get_string(pair, path, "event");
    }
  } else {
    spec.outcome.reference = get_string(out, "outcome", "reference");
    spec.outcome.surrogate = get_string(out, "outcome", "surrogate");
  }
  spec.outcome.perfect = get_bool(out, "outcome", "perfect", false);

  if (!j.contains("predictors") || !j.at("predictors").is_array()) spec_error("", "'predictors' must be an array");
  for (std::size_t k = 0; k < j.at("predictors").size(); ++k) {
    const auto& pj = j.at("predictors")[k];
    const std::string path = "predictors[" + std::to_string(k) + "]";
    check_keys(pj, path, {"reference", "surrogates", "perfect"});
    PredictorSpec pred;
    pred.reference = get_string(pj, path, "reference");
    pred.perfect = get_bool(pj, path, "perfect", false);
    if (!pj.contains("surrogates") || !pj.at("surrogates").is_array()) {
      spec_error(path, "'surrogates' must be an array of column names");
    }
    for (const auto& s : pj.at("surrogates")) {
      if (!s.is_string() || s.get<std::string>().empty()) spec_error(path + ".surrogates", "expected column names");
      pred.surrogates.push_back(s.get<std::string>());
    }
    if (pred.perfect && pred.surrogates.empty()) pred.surrogates.push_back(pred.reference);
    spec.predictors.push_back(std::move(pred));
  }

  spec.validation_column = get_string(j, "", "validation");
  spec.cluster_column = get_optional_string(j, "", "cluster");
  spec.weight_column = get_optional_string(j, "", "weight");

  if (j.contains("ties")) {
    const auto ties = get_string(j, "", "ties");
    if (ties == "efron") spec.ties = Ties::Efron;
    else if (ties == "breslow") spec.ties = Ties::Breslow;
    else spec_error("ties", "expected efron or breslow; got '" + ties + "'");
  }

  if (j.contains("resample")) {
    const auto& r = j.at("resample");
    check_keys(r, "resample", {"method", "groups", "replicates", "seed"});
    if (r.contains("method")) {
      const auto m = get_string(r, "resample", "method");
      if (m == "jackknife") spec.plan.method = ResampleMethod::Jackknife;
      else if (m == "bootstrap") spec.plan.method = ResampleMethod::Bootstrap;
      else spec_error("resample.method", "expected jackknife or bootstrap; got '" + m + "'");
    }
    spec.plan.groups = get_number<int>(r, "resample", "groups", spec.plan.groups);
    spec.plan.replicates = get_number<int>(r, "resample", "replicates", spec.plan.replicates);
    spec.plan.seed = get_number<std::uint64_t>(r, "resample", "seed", spec.plan.seed);
  }
  spec.alpha = get_number<double>(j, "", "alpha", spec.alpha);
  if (!(spec.alpha > 0.0 && spec.alpha < 1.0)) spec_error("alpha", "must lie in (0, 1)");

  check_spec_columns(spec);
  return spec;
}

inline Json spec_to_json(const AnalysisSpec& spec) {
  Json j;
  j["schema_version"] = kSpecSchemaVersion;
  j["family"] = std::string(to_string(spec.family));
  Json out;
  if (spec.family == Family::Cox) {
    out["reference"] = {{"time", spec.outcome.reference}, {"event", spec.outcome.reference_event}};
    out["surrogate"] = {{"time", spec.outcome.surrogate}, {"event", spec.outcome.surrogate_event}};
  } else {
    out["reference"] = spec.outcome.reference;
    out["surrogate"] = spec.outcome.surrogate;
  }
  out["perfect"] = spec.outcome.perfect;
  j["outcome"] = out;
  j["predictors"] = Json::array();
  for (const auto& pred : spec.predictors) {
    j["predictors"].push_back({{"reference", pred.reference}, {"surrogates", pred.surrogates}, {"perfect", pred.perfect}});
  }
  j["validation"] = spec.validation_column;
  j["cluster"] = spec.cluster_column.empty() ? Json(nullptr) : Json(spec.cluster_column);
  j["weight"] = spec.weight_column.empty() ? Json(nullptr) : Json(spec.weight_column);
  j["ties"] = std::string(to_string(spec.ties));
  j["resample"] = {{"method", std::string(to_string(spec.plan.method))},
                   {"groups", spec.plan.groups},
                   {"replicates", spec.plan.replicates},
                   {"seed", spec.plan.seed}};
  j["alpha"] = spec.alpha;
  return j;
}

inline AnalysisSpec read_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open spec '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::InvalidArgument, "spec '" + path + "' is not valid JSON: " + e.what());
  }
  return spec_from_json(j);
}

}  // namespace augreg
