#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prognos/prognostics.hpp"
#include "prognos/tmhmm.hpp"

namespace prognos {

enum class ActionType { DoNothing, Repair, Replace, Custom };

std::string_view action_type_name(ActionType t);
std::optional<ActionType> action_type_from_name(std::string_view name);

struct ActionDef {
  std::string name;
  ActionType type = ActionType::Custom;
  Eigen::MatrixXd trans;   // N x N, row-stochastic
  Eigen::VectorXd reward;  // per-state reward for taking the action there
};

/// Maintenance decision process derived from a fitted model: states, the
/// DoNothing transition matrix and the initial belief are the model's own;
/// the observation alphabet is the index of the shared mixture component
/// that generated the sensor reading.
struct MaintenancePomdp {
  std::vector<ActionDef> actions;
  Eigen::MatrixXd obs_model;  // N x K, row s' gives p(observation | s')
  double discount = 0.95;
  Eigen::VectorXd initial;
  int terminal = -1;

  int n_states() const { return static_cast<int>(initial.size()); }
  int n_observations() const { return static_cast<int>(obs_model.cols()); }
  int n_actions() const { return static_cast<int>(actions.size()); }
  std::vector<Violation> validate() const;
};

/// How to derive the action set from a model. `actions` may be empty, in
/// which case the default DoNothing / Repair / Replace triple is built from
/// the cost fields.
struct PomdpBuildSpec {
  struct Action {
    std::string name;
    ActionType type = ActionType::Custom;
    std::optional<Eigen::MatrixXd> trans;  // required for Custom
    Eigen::VectorXd reward;
  };
  std::vector<Action> actions;
  double discount = 0.95;

  // defaults used when `actions` is empty
  double operate_reward = 1.0;
  double downtime_cost = 100.0;
  double repair_cost = 20.0;
  double replace_cost = 50.0;
  double repair_success = 0.8;
  int reset_state = 0;
};

MaintenancePomdp build_pomdp(const TiedMixtureHmm& m, const PomdpBuildSpec& spec);

/// Bayes update after taking action a and observing symbol k.
/// Throws ZeroLikelihoodError when the observation is impossible.
Belief pomdp_belief_update(const MaintenancePomdp& p, const Belief& b, int action, int obs);

struct AlphaVector {
  Eigen::VectorXd coeffs;
  int action = 0;
};

/// Piecewise-linear convex value function: one alpha set per horizon.
struct AlphaVectorPolicy {
  std::vector<std::vector<AlphaVector>> horizons;
  const std::vector<AlphaVector>& final_set() const { return horizons.back(); }
  int solved_horizon() const { return static_cast<int>(horizons.size()); }
};

struct ValueIterationConfig {
  int horizon = 30;
  double epsilon = 1e-9;
  /// Keep only vectors that win somewhere on a regular belief grid. Exact
  /// (dominance-only) pruning when false.
  bool witness_pruning = true;
  double witness_resolution = 0.1;
  /// Stop early once successive value functions differ by less than this at
  /// every grid belief; <= 0 disables.
  double early_stop_tol = 1e-6;
};

/// Exact finite-horizon value iteration over alpha vectors: horizon-1 sets
/// are the immediate rewards; each backup cross-sums per-observation
/// back-projections with interleaved pruning.
AlphaVectorPolicy value_iteration(const MaintenancePomdp& p, const ValueIterationConfig& cfg);

/// Removes epsilon-pointwise-dominated vectors, then (optionally) vectors
/// that maximize nowhere on a regular simplex grid of the given resolution.
/// Never removes a vector that is the unique maximizer at a grid belief.
std::vector<AlphaVector> prune(std::vector<AlphaVector> set, double epsilon,
                               bool witness_pruning = true, double witness_resolution = 0.1);

/// Argmax action at the belief; ties break by action id, then set order.
std::pair<int, double> best_action(const std::vector<AlphaVector>& set,
                                   const Eigen::VectorXd& belief);
std::pair<int, double> best_action(const AlphaVectorPolicy& policy, const Belief& b);

/// Beliefs of the regular simplex grid used for witness pruning.
std::vector<Eigen::VectorXd> simplex_grid(int dim, double resolution);

using ActionFn = std::function<int(const Belief&, int step)>;

struct PolicyEvalResult {
  double mean_return = 0.0;
  double std_error = 0.0;
  int episodes = 0;
};

/// Monte Carlo estimate of the discounted return of the policy, simulating
/// hidden states and component-index observations. Seeded per episode;
/// results do not depend on scheduling.
PolicyEvalResult evaluate_policy(const MaintenancePomdp& p, const AlphaVectorPolicy& policy,
                                 int episodes, int maxsteps, std::uint64_t seed);
PolicyEvalResult evaluate_policy(const MaintenancePomdp& p, const ActionFn& act, int episodes,
                                 int maxsteps, std::uint64_t seed);

}  // namespace prognos
