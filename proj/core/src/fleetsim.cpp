#include "prognos/fleetsim.hpp"

#include <algorithm>
#include <cmath>

#include "prognos/errors.hpp"
#include "prognos/parallel.hpp"
#include "prognos/rng.hpp"

namespace prognos {

namespace {

int sample_categorical(const Eigen::VectorXd& probs, Rng& rng) {
  std::discrete_distribution<int> dist(probs.data(), probs.data() + probs.size());
  return dist(rng);
}

int find_action(const MaintenancePomdp& p, ActionType type) {
  for (int a = 0; a < p.n_actions(); ++a) {
    if (p.actions[static_cast<std::size_t>(a)].type == type) return a;
  }
  return -1;
}

}  // namespace

FleetDataset generate_fleet(const ProfileLibrary& lib, int nassets, int maxlen,
                            double censorfrac, std::uint64_t seed) {
  if (nassets < 1) throw InvalidInputError("generate_fleet: nassets must be >= 1");
  if (maxlen < 1) throw InvalidInputError("generate_fleet: maxlen must be >= 1");
  if (censorfrac < 0.0 || censorfrac >= 1.0) {
    throw InvalidInputError("generate_fleet: censorfrac must lie in [0, 1)");
  }
  {
    const auto violations = lib.validate();
    if (!violations.empty()) {
      throw InvalidInputError("generate_fleet: invalid library: " + violations.front().message);
    }
  }

  struct AssetDraw {
    ObservationSequence seq;
    int profile = 0;
  };
  const auto draws = parallel_map<AssetDraw>(
      static_cast<std::size_t>(nassets), [&](std::size_t i) {
        Rng rng = substream(seed, i);
        AssetDraw out;
        out.profile = sample_categorical(lib.prior, rng);
        out.seq = sample_sequence(lib.profiles[static_cast<std::size_t>(out.profile)], maxlen,
                                  rng)
                      .seq;
        out.seq.id = "asset" + std::to_string(i);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        if (censorfrac > 0.0 && u(rng) < censorfrac && out.seq.length() >= 2) {
          std::uniform_int_distribution<int> cut(1, out.seq.length() - 1);
          out.seq = out.seq.prefix(cut(rng));
        }
        return out;
      });

  FleetDataset out;
  out.sequences.reserve(draws.size());
  out.profile_of.reserve(draws.size());
  for (const AssetDraw& d : draws) {
    out.sequences.push_back(d.seq);
    out.profile_of.push_back(d.profile);
  }
  return out;
}

namespace {

FleetRun run_loop(const MaintenancePomdp& p, const ActionFn& act, const FleetRunConfig& cfg) {
  if (cfg.nassets < 1) throw InvalidInputError("run_policy_loop: nassets must be >= 1");
  if (cfg.maxsteps < 1) throw InvalidInputError("run_policy_loop: maxsteps must be >= 1");

  const auto trajectories = parallel_map<AssetTrajectory>(
      static_cast<std::size_t>(cfg.nassets), [&](std::size_t asset) {
        Rng rng = substream(cfg.seed, asset);
        AssetTrajectory traj;
        if (cfg.record_trajectories) {
          traj.states.reserve(static_cast<std::size_t>(cfg.maxsteps));
          traj.observations.reserve(static_cast<std::size_t>(cfg.maxsteps));
          traj.actions.reserve(static_cast<std::size_t>(cfg.maxsteps));
        }
        int state = sample_categorical(p.initial, rng);
        Belief belief{p.initial, 0};
        double weight = 1.0;
        for (int t = 0; t < cfg.maxsteps; ++t) {
          const int a = act(belief, t);
          const ActionDef& action = p.actions[static_cast<std::size_t>(a)];

          if (state == p.terminal) {
            traj.downtime_steps += 1;
            traj.failed = true;
          } else if (action.type == ActionType::Replace) {
            traj.replacement_steps += 1;
          } else {
            traj.operating_steps += 1;
          }

          const double reward = action.reward[state];
          traj.total_reward += reward;
          traj.discounted_return += weight * reward;
          weight *= p.discount;

          const int next_state = sample_categorical(action.trans.row(state).transpose(), rng);
          const int obs = sample_categorical(p.obs_model.row(next_state).transpose(), rng);
          if (cfg.record_trajectories) {
            traj.states.push_back(state);
            traj.observations.push_back(obs);
            traj.actions.push_back(a);
          }
          belief = pomdp_belief_update(p, belief, a, obs);
          state = next_state;
        }
        return traj;
      });

  FleetRun run;
  run.assets = trajectories;
  double failures = 0.0, uptime = 0.0, discounted = 0.0;
  for (const AssetTrajectory& traj : run.assets) {
    failures += traj.failed ? 1.0 : 0.0;
    uptime += traj.operating_steps;
    run.total_reward += traj.total_reward;
    discounted += traj.discounted_return;
  }
  run.failure_rate = failures / cfg.nassets;
  run.mean_uptime = uptime / cfg.nassets;
  run.mean_discounted_return = discounted / cfg.nassets;
  return run;
}

}  // namespace

FleetRun run_policy_loop(const MaintenancePomdp& p, const AlphaVectorPolicy& policy,
                         const FleetRunConfig& cfg) {
  return run_loop(
      p, [&](const Belief& b, int) { return best_action(policy, b).first; }, cfg);
}

FleetRun run_policy_loop(const MaintenancePomdp& p, const ActionFn& act,
                         const FleetRunConfig& cfg) {
  return run_loop(p, act, cfg);
}

ActionFn make_threshold_policy(const MaintenancePomdp& p, double theta, int lookahead) {
  if (!(theta >= 0.0) || theta > 1.0) {
    throw InvalidInputError("threshold policy: theta must lie in [0, 1]");
  }
  const int donothing = find_action(p, ActionType::DoNothing);
  const int replace = find_action(p, ActionType::Replace);
  if (donothing < 0 || replace < 0) {
    throw ConfigError("threshold policy needs donothing and replace actions");
  }
  const Eigen::MatrixXd trans = p.actions[static_cast<std::size_t>(donothing)].trans;
  const int terminal = p.terminal;
  return [=](const Belief& b, int) {
    const FailureTimeDistribution ftd =
        first_passage_distribution(trans, terminal, b.probs, lookahead);
    const double risk = ftd.already_failed + ftd.pmf.sum();
    return risk >= theta ? replace : donothing;
  };
}

}  // namespace prognos
