#pragma once

#include <optional>
#include <string>

#include "prognos/pomdp.hpp"
#include "prognos/prognostics.hpp"
#include "prognos/tmhmm.hpp"

namespace prognos {

/// Versioned JSON document holding every model parameter. Doubles are
/// written as the shortest decimal that parses back bit-exactly, so
/// save -> load reproduces the model exactly.
std::string model_to_json_string(const TiedMixtureHmm& m);
TiedMixtureHmm model_from_json_string(const std::string& text);

std::string library_to_json_string(const ProfileLibrary& lib);
ProfileLibrary library_from_json_string(const std::string& text);

void save_model_file(const std::string& path, const TiedMixtureHmm& m);
void save_library_file(const std::string& path, const ProfileLibrary& lib);

struct LoadedModel {
  std::optional<TiedMixtureHmm> model;
  std::optional<ProfileLibrary> library;
};

/// Accepts either a single-model or a library document.
LoadedModel load_model_file(const std::string& path);

/// Action/reward specification:
/// {"actions":[{"name","type":donothing|repair|replace|custom,
///              "trans"?: matrix, "reward": per-state vector}],
///  "discount": gamma}
PomdpBuildSpec pomdp_spec_from_json_string(const std::string& text);
PomdpBuildSpec load_pomdp_spec(const std::string& path);

std::string policy_to_json_string(const AlphaVectorPolicy& policy, const MaintenancePomdp& p);
/// Returns the policy plus the stored action names (indexed by action id).
std::pair<AlphaVectorPolicy, std::vector<std::string>> policy_from_json_string(
    const std::string& text);
void save_policy_file(const std::string& path, const AlphaVectorPolicy& policy,
                      const MaintenancePomdp& p);
std::pair<AlphaVectorPolicy, std::vector<std::string>> load_policy_file(const std::string& path);

}  // namespace prognos
