#pragma once

#include <cstdint>
#include <vector>

#include "prognos/pomdp.hpp"
#include "prognos/prognostics.hpp"
#include "prognos/tmhmm.hpp"

namespace prognos {

struct FleetDataset {
  std::vector<ObservationSequence> sequences;
  std::vector<int> profile_of;  // true profile index per asset
};

/// Samples a fleet: profile per asset from the library prior, then a
/// sequence of at most maxlen operational steps. An additional censorfrac
/// fraction of assets is right-censored at a uniform random cut point.
FleetDataset generate_fleet(const ProfileLibrary& lib, int nassets, int maxlen,
                            double censorfrac, std::uint64_t seed);

struct AssetTrajectory {
  std::vector<int> states;
  std::vector<int> observations;
  std::vector<int> actions;
  double total_reward = 0.0;
  double discounted_return = 0.0;
  int operating_steps = 0;
  int downtime_steps = 0;
  int replacement_steps = 0;
  bool failed = false;  // entered the terminal state at least once
};

struct FleetRun {
  std::vector<AssetTrajectory> assets;
  double failure_rate = 0.0;
  double mean_uptime = 0.0;
  double total_reward = 0.0;
  double mean_discounted_return = 0.0;
};

struct FleetRunConfig {
  int nassets = 100;
  int maxsteps = 100;
  std::uint64_t seed = 0;
  /// Keep per-step logs; aggregates are always computed.
  bool record_trajectories = true;
};

/// Closed-loop simulation: per asset and step the environment draws the next
/// true state under the chosen action, emits a component-index observation,
/// the belief is updated and the next action chosen. Every step is operating,
/// downtime (terminal state) or replacement.
FleetRun run_policy_loop(const MaintenancePomdp& p, const AlphaVectorPolicy& policy,
                         const FleetRunConfig& cfg);
FleetRun run_policy_loop(const MaintenancePomdp& p, const ActionFn& act,
                         const FleetRunConfig& cfg);

/// Replace whenever the predicted probability of failing within `lookahead`
/// steps reaches theta, computed from the DoNothing dynamics.
ActionFn make_threshold_policy(const MaintenancePomdp& p, double theta, int lookahead = 5);

}  // namespace prognos
