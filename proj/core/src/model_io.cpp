#include "prognos/model_io.hpp"

#include <json.hpp>

#include "prognos/errors.hpp"
#include "prognos/file_util.hpp"

namespace prognos {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

json mask_to_json(const BoolMatrix& m) {
  json out = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j) ? 1 : 0);
    out.push_back(std::move(row));
  }
  return out;
}

Eigen::VectorXd vector_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw InvalidInputError(std::string(what) + ": expected an array");
  Eigen::VectorXd out(static_cast<int>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw InvalidInputError(std::string(what) + ": expected numbers");
    out[static_cast<int>(i)] = j[i].get<double>();
  }
  return out;
}

Eigen::MatrixXd matrix_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) {
    throw InvalidInputError(std::string(what) + ": expected a matrix");
  }
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Eigen::MatrixXd out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (!j[static_cast<std::size_t>(i)].is_array() ||
        static_cast<int>(j[static_cast<std::size_t>(i)].size()) != cols) {
      throw InvalidInputError(std::string(what) + ": ragged matrix");
    }
    for (int c = 0; c < cols; ++c) {
      out(i, c) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)].get<double>();
    }
  }
  return out;
}

BoolMatrix mask_from_json(const json& j) {
  const Eigen::MatrixXd raw = matrix_from_json(j, "mask");
  BoolMatrix out(raw.rows(), raw.cols());
  for (int i = 0; i < raw.rows(); ++i) {
    for (int c = 0; c < raw.cols(); ++c) out(i, c) = raw(i, c) != 0.0;
  }
  return out;
}

json component_to_json(const ComponentParams& c) {
  json dims = json::array();
  for (const DimParams& d : c.dims()) {
    json jd;
    jd["family"] = std::string(family_name(d.family));
    switch (d.family) {
      case Family::Gaussian:
        jd["mean"] = d.p1;
        jd["variance"] = d.p2;
        break;
      case Family::Gamma:
        jd["shape"] = d.p1;
        jd["rate"] = d.p2;
        break;
      case Family::Poisson:
      case Family::Exponential:
        jd["rate"] = d.p1;
        break;
    }
    dims.push_back(std::move(jd));
  }
  return json{{"dims", std::move(dims)}};
}

ComponentParams component_from_json(const json& j) {
  if (!j.contains("dims") || !j["dims"].is_array()) {
    throw InvalidInputError("component: missing 'dims' array");
  }
  std::vector<DimParams> dims;
  dims.reserve(j["dims"].size());
  for (const json& jd : j["dims"]) {
    const auto family = family_from_name(jd.value("family", ""));
    if (!family) {
      throw InvalidInputError("component: unknown family '" + jd.value("family", "") + "'");
    }
    switch (*family) {
      case Family::Gaussian:
        dims.push_back(DimParams::gaussian(jd.at("mean").get<double>(),
                                           jd.at("variance").get<double>()));
        break;
      case Family::Gamma:
        dims.push_back(
            DimParams::gamma(jd.at("shape").get<double>(), jd.at("rate").get<double>()));
        break;
      case Family::Poisson:
        dims.push_back(DimParams::poisson(jd.at("rate").get<double>()));
        break;
      case Family::Exponential:
        dims.push_back(DimParams::exponential(jd.at("rate").get<double>()));
        break;
    }
  }
  return ComponentParams(std::move(dims));
}

json model_to_json(const TiedMixtureHmm& m) {
  json out;
  out["n_states"] = m.n_states();
  out["n_components"] = m.n_components();
  out["terminal"] = m.terminal;
  out["emit_at_failure"] = m.emit_at_failure;
  out["initial"] = vector_to_json(m.initial);
  out["trans"] = matrix_to_json(m.trans);
  out["mask"] = mask_to_json(m.mask);
  out["mix_weights"] = matrix_to_json(m.mix_weights);
  json comps = json::array();
  for (const ComponentParams& c : m.components) comps.push_back(component_to_json(c));
  out["components"] = std::move(comps);
  return out;
}

TiedMixtureHmm model_from_json(const json& j) {
  TiedMixtureHmm m;
  m.terminal = j.at("terminal").get<int>();
  m.emit_at_failure = j.value("emit_at_failure", false);
  m.initial = vector_from_json(j.at("initial"), "initial");
  m.trans = matrix_from_json(j.at("trans"), "trans");
  m.mask = mask_from_json(j.at("mask"));
  m.mix_weights = matrix_from_json(j.at("mix_weights"), "mix_weights");
  if (!j.contains("components") || !j["components"].is_array()) {
    throw InvalidInputError("model: missing 'components' array");
  }
  for (const json& jc : j["components"]) m.components.push_back(component_from_json(jc));
  if (j.contains("n_states") && j["n_states"].get<int>() != m.n_states()) {
    throw InvalidInputError("model: n_states does not match the initial distribution");
  }
  if (j.contains("n_components") && j["n_components"].get<int>() != m.n_components()) {
    throw InvalidInputError("model: n_components does not match the component list");
  }
  return m;
}

json parse_document(const std::string& text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw InvalidInputError("malformed JSON document");
  return doc;
}

void check_format(const json& doc, const char* expected) {
  if (doc.value("format", "") != expected) {
    throw InvalidInputError(std::string("expected a '") + expected + "' document, found '" +
                            doc.value("format", "<missing>") + "'");
  }
  if (doc.value("version", 0) != kFormatVersion) {
    throw InvalidInputError("unsupported format version");
  }
}

}  // namespace

std::string model_to_json_string(const TiedMixtureHmm& m) {
  json doc;
  doc["format"] = "prognos-model";
  doc["version"] = kFormatVersion;
  doc["model"] = model_to_json(m);
  return doc.dump(2) + "\n";
}

TiedMixtureHmm model_from_json_string(const std::string& text) {
  const json doc = parse_document(text);
  check_format(doc, "prognos-model");
  return model_from_json(doc.at("model"));
}

std::string library_to_json_string(const ProfileLibrary& lib) {
  json doc;
  doc["format"] = "prognos-library";
  doc["version"] = kFormatVersion;
  doc["prior"] = vector_to_json(lib.prior);
  json profiles = json::array();
  for (const TiedMixtureHmm& m : lib.profiles) profiles.push_back(model_to_json(m));
  doc["profiles"] = std::move(profiles);
  return doc.dump(2) + "\n";
}

ProfileLibrary library_from_json_string(const std::string& text) {
  const json doc = parse_document(text);
  check_format(doc, "prognos-library");
  ProfileLibrary lib;
  lib.prior = vector_from_json(doc.at("prior"), "prior");
  for (const json& jm : doc.at("profiles")) lib.profiles.push_back(model_from_json(jm));
  return lib;
}

void save_model_file(const std::string& path, const TiedMixtureHmm& m) {
  atomic_write_text(path, model_to_json_string(m));
}

void save_library_file(const std::string& path, const ProfileLibrary& lib) {
  atomic_write_text(path, library_to_json_string(lib));
}

LoadedModel load_model_file(const std::string& path) {
  const std::string text = read_text_file(path);
  const json doc = parse_document(text);
  LoadedModel out;
  const std::string format = doc.value("format", "");
  if (format == "prognos-model") {
    out.model = model_from_json_string(text);
  } else if (format == "prognos-library") {
    out.library = library_from_json_string(text);
  } else {
    throw InvalidInputError("'" + path + "' is neither a model nor a library document");
  }
  return out;
}

PomdpBuildSpec pomdp_spec_from_json_string(const std::string& text) {
  const json doc = parse_document(text);
  PomdpBuildSpec spec;
  if (doc.contains("discount")) spec.discount = doc["discount"].get<double>();
  if (doc.contains("repair_success")) spec.repair_success = doc["repair_success"].get<double>();
  if (doc.contains("reset_state")) spec.reset_state = doc["reset_state"].get<int>();
  if (!doc.contains("actions")) return spec;
  if (!doc["actions"].is_array()) throw ConfigError("action spec: 'actions' must be an array");
  for (const json& ja : doc["actions"]) {
    PomdpBuildSpec::Action action;
    action.name = ja.value("name", "");
    const auto type = action_type_from_name(ja.value("type", ""));
    if (!type) throw ConfigError("action spec: unknown type '" + ja.value("type", "") + "'");
    action.type = *type;
    if (action.name.empty()) action.name = std::string(action_type_name(action.type));
    if (!ja.contains("reward")) {
      throw ConfigError("action spec: action '" + action.name + "' is missing its reward vector");
    }
    action.reward = vector_from_json(ja["reward"], "reward");
    if (ja.contains("trans")) action.trans = matrix_from_json(ja["trans"], "trans");
    spec.actions.push_back(std::move(action));
  }
  return spec;
}

PomdpBuildSpec load_pomdp_spec(const std::string& path) {
  return pomdp_spec_from_json_string(read_text_file(path));
}

std::string policy_to_json_string(const AlphaVectorPolicy& policy, const MaintenancePomdp& p) {
  json doc;
  doc["format"] = "prognos-policy";
  doc["version"] = kFormatVersion;
  doc["n_states"] = p.n_states();
  doc["discount"] = p.discount;
  json names = json::array();
  for (const ActionDef& a : p.actions) names.push_back(a.name);
  doc["actions"] = std::move(names);
  json horizons = json::array();
  for (const auto& set : policy.horizons) {
    json jset = json::array();
    for (const AlphaVector& alpha : set) {
      jset.push_back(json{{"action", alpha.action}, {"coeffs", vector_to_json(alpha.coeffs)}});
    }
    horizons.push_back(std::move(jset));
  }
  doc["horizons"] = std::move(horizons);
  return doc.dump(2) + "\n";
}

std::pair<AlphaVectorPolicy, std::vector<std::string>> policy_from_json_string(
    const std::string& text) {
  const json doc = parse_document(text);
  check_format(doc, "prognos-policy");
  AlphaVectorPolicy policy;
  for (const json& jset : doc.at("horizons")) {
    std::vector<AlphaVector> set;
    for (const json& ja : jset) {
      set.push_back({vector_from_json(ja.at("coeffs"), "coeffs"), ja.at("action").get<int>()});
    }
    policy.horizons.push_back(std::move(set));
  }
  std::vector<std::string> names;
  if (doc.contains("actions")) {
    for (const json& jn : doc["actions"]) names.push_back(jn.get<std::string>());
  }
  if (policy.horizons.empty()) throw InvalidInputError("policy document has no horizons");
  return {std::move(policy), std::move(names)};
}

void save_policy_file(const std::string& path, const AlphaVectorPolicy& policy,
                      const MaintenancePomdp& p) {
  atomic_write_text(path, policy_to_json_string(policy, p));
}

std::pair<AlphaVectorPolicy, std::vector<std::string>> load_policy_file(const std::string& path) {
  return policy_from_json_string(read_text_file(path));
}

}  // namespace prognos
