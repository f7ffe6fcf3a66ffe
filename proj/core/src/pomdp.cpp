#include "prognos/pomdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prognos/errors.hpp"
#include "prognos/parallel.hpp"
#include "prognos/rng.hpp"

namespace prognos {

namespace {

constexpr double kRowSumTol = 1e-9;

Eigen::MatrixXd repair_matrix(int n, int terminal, double success) {
  // moves one state toward healthy (index-1) with the given probability,
  // stays otherwise; identity from the terminal state
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    if (i == terminal || i == 0) {
      t(i, i) = 1.0;
      continue;
    }
    t(i, i - 1) = success;
    t(i, i) = 1.0 - success;
  }
  return t;
}

Eigen::MatrixXd replace_matrix(int n, int reset_state) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) t(i, reset_state) = 1.0;
  return t;
}

int sample_categorical(const Eigen::VectorXd& probs, Rng& rng) {
  std::discrete_distribution<int> dist(probs.data(), probs.data() + probs.size());
  return dist(rng);
}

}  // namespace

std::string_view action_type_name(ActionType t) {
  switch (t) {
    case ActionType::DoNothing: return "donothing";
    case ActionType::Repair: return "repair";
    case ActionType::Replace: return "replace";
    case ActionType::Custom: return "custom";
  }
  return "unknown";
}

std::optional<ActionType> action_type_from_name(std::string_view name) {
  if (name == "donothing") return ActionType::DoNothing;
  if (name == "repair") return ActionType::Repair;
  if (name == "replace") return ActionType::Replace;
  if (name == "custom") return ActionType::Custom;
  return std::nullopt;
}

std::vector<Violation> MaintenancePomdp::validate() const {
  std::vector<Violation> out;
  const int n = n_states();
  if (n < 1) {
    out.push_back({"no states", -1, -1});
    return out;
  }
  if (actions.empty()) out.push_back({"no actions", -1, -1});
  if (discount < 0.0 || discount > 1.0) {
    out.push_back({"discount outside [0, 1]", -1, -1});
  }
  if (std::abs(initial.sum() - 1.0) > kRowSumTol) {
    out.push_back({"initial belief sums to " + std::to_string(initial.sum()), -1, -1});
  }
  for (std::size_t a = 0; a < actions.size(); ++a) {
    const ActionDef& act = actions[a];
    if (act.trans.rows() != n || act.trans.cols() != n || act.reward.size() != n) {
      out.push_back({"action '" + act.name + "' has mismatched shapes",
                     static_cast<int>(a), -1});
      continue;
    }
    for (int i = 0; i < n; ++i) {
      if (std::abs(act.trans.row(i).sum() - 1.0) > kRowSumTol) {
        out.push_back({"action '" + act.name + "' row " + std::to_string(i) +
                           " is not stochastic",
                       i, -1});
      }
    }
  }
  if (obs_model.rows() != n || obs_model.cols() < 1) {
    out.push_back({"observation model is not N x K", -1, -1});
  } else {
    for (int i = 0; i < n; ++i) {
      if (std::abs(obs_model.row(i).sum() - 1.0) > kRowSumTol) {
        out.push_back({"observation row " + std::to_string(i) + " is not stochastic", i, -1});
      }
    }
  }
  return out;
}

MaintenancePomdp build_pomdp(const TiedMixtureHmm& m, const PomdpBuildSpec& spec) {
  {
    const auto violations = m.validate();
    if (!violations.empty()) {
      throw InvalidInputError("build_pomdp: invalid model: " + violations.front().message);
    }
  }
  const int n = m.n_states();

  MaintenancePomdp p;
  p.obs_model = m.mix_weights;
  p.discount = spec.discount;
  p.initial = m.initial;
  p.terminal = m.terminal;

  if (spec.discount < 0.0 || spec.discount > 1.0) {
    throw ConfigError("discount must lie in [0, 1]");
  }
  if (spec.reset_state < 0 || spec.reset_state >= n) {
    throw ConfigError("reset state " + std::to_string(spec.reset_state) + " is unknown");
  }

  if (spec.actions.empty()) {
    ActionDef nothing;
    nothing.name = "donothing";
    nothing.type = ActionType::DoNothing;
    nothing.trans = m.trans;
    nothing.reward = Eigen::VectorXd::Constant(n, spec.operate_reward);
    nothing.reward[m.terminal] = -spec.downtime_cost;

    ActionDef repair;
    repair.name = "repair";
    repair.type = ActionType::Repair;
    repair.trans = repair_matrix(n, m.terminal, spec.repair_success);
    repair.reward = Eigen::VectorXd::Constant(n, -spec.repair_cost);

    ActionDef replace;
    replace.name = "replace";
    replace.type = ActionType::Replace;
    replace.trans = replace_matrix(n, spec.reset_state);
    replace.reward = Eigen::VectorXd::Constant(n, -spec.replace_cost);

    p.actions = {std::move(nothing), std::move(repair), std::move(replace)};
    return p;
  }

  bool has_donothing = false;
  for (const PomdpBuildSpec::Action& a : spec.actions) {
    ActionDef def;
    def.name = a.name;
    def.type = a.type;
    if (a.reward.size() != n) {
      throw ConfigError("action '" + a.name + "': reward vector names " +
                        std::to_string(a.reward.size()) + " states, model has " +
                        std::to_string(n));
    }
    def.reward = a.reward;
    if (a.trans.has_value()) {
      if (a.trans->rows() != n || a.trans->cols() != n) {
        throw ConfigError("action '" + a.name + "': transition matrix names unknown states");
      }
      def.trans = *a.trans;
    } else {
      switch (a.type) {
        case ActionType::DoNothing: def.trans = m.trans; break;
        case ActionType::Repair:
          def.trans = repair_matrix(n, m.terminal, spec.repair_success);
          break;
        case ActionType::Replace: def.trans = replace_matrix(n, spec.reset_state); break;
        case ActionType::Custom:
          throw ConfigError("action '" + a.name + "': custom actions need a transition matrix");
      }
    }
    for (int i = 0; i < n; ++i) {
      if (std::abs(def.trans.row(i).sum() - 1.0) > kRowSumTol) {
        throw ConfigError("action '" + a.name + "': transition row " + std::to_string(i) +
                          " is not stochastic");
      }
    }
    has_donothing = has_donothing || a.type == ActionType::DoNothing;
    p.actions.push_back(std::move(def));
  }
  if (!has_donothing) {
    throw ConfigError("action set must include a donothing action");
  }
  return p;
}

Belief pomdp_belief_update(const MaintenancePomdp& p, const Belief& b, int action, int obs) {
  if (action < 0 || action >= p.n_actions()) throw InvalidInputError("unknown action id");
  if (obs < 0 || obs >= p.n_observations()) throw InvalidInputError("unknown observation id");
  if (b.probs.size() != p.n_states()) throw InvalidInputError("belief dimension mismatch");

  const Eigen::VectorXd pred =
      p.actions[static_cast<std::size_t>(action)].trans.transpose() * b.probs;
  const Eigen::VectorXd v = pred.cwiseProduct(p.obs_model.col(obs));
  const double c = v.sum();
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw ZeroLikelihoodError("observation " + std::to_string(obs) +
                                  " is impossible after action " + std::to_string(action),
                              static_cast<int>(b.step) + 1);
  }
  return {v / c, b.step + 1};
}

std::vector<Eigen::VectorXd> simplex_grid(int dim, double resolution) {
  if (dim < 1) throw InvalidInputError("simplex_grid: dimension must be >= 1");
  if (!(resolution > 0.0) || resolution > 1.0) {
    throw InvalidInputError("simplex_grid: resolution must lie in (0, 1]");
  }
  int levels = static_cast<int>(std::lround(1.0 / resolution));
  levels = std::max(levels, 1);

  // keep the grid tractable for many states by coarsening
  auto grid_size = [&](int lv) {
    double size = 1.0;
    for (int i = 1; i < dim; ++i) size = size * (lv + i) / i;
    return size;
  };
  while (levels > 1 && grid_size(levels) > 200000.0) --levels;

  std::vector<Eigen::VectorXd> out;
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(dim);
  // enumerate compositions of `levels` into `dim` parts
  std::function<void(int, int)> rec = [&](int pos, int remaining) {
    if (pos == dim - 1) {
      counts[pos] = remaining;
      Eigen::VectorXd b(dim);
      for (int i = 0; i < dim; ++i) b[i] = static_cast<double>(counts[i]) / levels;
      out.push_back(std::move(b));
      return;
    }
    for (int c = 0; c <= remaining; ++c) {
      counts[pos] = c;
      rec(pos + 1, remaining - c);
    }
  };
  rec(0, levels);
  return out;
}

std::vector<AlphaVector> prune(std::vector<AlphaVector> set, double epsilon,
                               bool witness_pruning, double witness_resolution) {
  if (set.empty()) throw InvalidInputError("prune: empty alpha set");

  // (a) pointwise dominance
  std::vector<AlphaVector> survivors;
  survivors.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < set.size() && !dominated; ++j) {
      if (i == j) continue;
      const bool leq =
          (set[i].coeffs.array() <= set[j].coeffs.array() + epsilon).all();
      if (!leq) continue;
      // break exact ties toward the earlier vector
      const bool equal = (set[i].coeffs.array() == set[j].coeffs.array()).all();
      if (!equal || j < i) dominated = true;
    }
    if (!dominated) survivors.push_back(std::move(set[i]));
  }
  if (survivors.empty()) survivors.push_back(std::move(set.front()));
  if (!witness_pruning || survivors.size() <= 1) return survivors;

  // (b) keep only vectors that win somewhere on the belief grid
  const int dim = static_cast<int>(survivors.front().coeffs.size());
  const auto grid = simplex_grid(dim, witness_resolution);
  std::vector<bool> keep(survivors.size(), false);
  for (const Eigen::VectorXd& b : grid) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t i = 0; i < survivors.size(); ++i) {
      const double v = survivors[i].coeffs.dot(b);
      if (v > best) {
        best = v;
        arg = i;
      }
    }
    keep[arg] = true;
  }
  std::vector<AlphaVector> out;
  out.reserve(survivors.size());
  for (std::size_t i = 0; i < survivors.size(); ++i) {
    if (keep[i]) out.push_back(std::move(survivors[i]));
  }
  return out;
}

AlphaVectorPolicy value_iteration(const MaintenancePomdp& p, const ValueIterationConfig& cfg) {
  if (cfg.horizon < 1) throw InvalidInputError("value_iteration: horizon must be >= 1");
  {
    const auto violations = p.validate();
    if (!violations.empty()) {
      throw InvalidInputError("value_iteration: invalid POMDP: " + violations.front().message);
    }
  }
  const int n = p.n_states();
  const int n_obs = p.n_observations();
  const int n_act = p.n_actions();

  // back-projection operators M[a][k](s, s') = T_a(s, s') * O(s', k)
  std::vector<std::vector<Eigen::MatrixXd>> back(static_cast<std::size_t>(n_act));
  for (int a = 0; a < n_act; ++a) {
    back[static_cast<std::size_t>(a)].reserve(static_cast<std::size_t>(n_obs));
    for (int k = 0; k < n_obs; ++k) {
      back[static_cast<std::size_t>(a)].push_back(
          p.actions[static_cast<std::size_t>(a)].trans *
          p.obs_model.col(k).asDiagonal());
    }
  }

  const auto grid = simplex_grid(n, cfg.witness_resolution);
  auto grid_values = [&](const std::vector<AlphaVector>& set) {
    Eigen::VectorXd v(static_cast<int>(grid.size()));
    for (std::size_t g = 0; g < grid.size(); ++g) {
      double best = -std::numeric_limits<double>::infinity();
      for (const AlphaVector& alpha : set) best = std::max(best, alpha.coeffs.dot(grid[g]));
      v[static_cast<int>(g)] = best;
    }
    return v;
  };

  AlphaVectorPolicy policy;
  std::vector<AlphaVector> current;
  current.reserve(static_cast<std::size_t>(n_act));
  for (int a = 0; a < n_act; ++a) {
    current.push_back({p.actions[static_cast<std::size_t>(a)].reward, a});
  }
  current = prune(std::move(current), cfg.epsilon, cfg.witness_pruning, cfg.witness_resolution);
  policy.horizons.push_back(current);
  Eigen::VectorXd prev_values = grid_values(current);

  for (int h = 1; h < cfg.horizon; ++h) {
    std::vector<AlphaVector> next;
    for (int a = 0; a < n_act; ++a) {
      // per-observation back-projections of the previous set
      std::vector<std::vector<Eigen::VectorXd>> projected(static_cast<std::size_t>(n_obs));
      for (int k = 0; k < n_obs; ++k) {
        auto& bucket = projected[static_cast<std::size_t>(k)];
        bucket.reserve(current.size());
        for (const AlphaVector& alpha : current) {
          bucket.push_back(back[static_cast<std::size_t>(a)][static_cast<std::size_t>(k)] *
                           alpha.coeffs);
        }
      }
      // cross-sum over observations with interleaved pruning
      std::vector<AlphaVector> acc;
      acc.push_back({Eigen::VectorXd::Zero(n), a});
      for (int k = 0; k < n_obs; ++k) {
        std::vector<AlphaVector> expanded;
        expanded.reserve(acc.size() * projected[static_cast<std::size_t>(k)].size());
        for (const AlphaVector& u : acc) {
          for (const Eigen::VectorXd& g : projected[static_cast<std::size_t>(k)]) {
            expanded.push_back({u.coeffs + g, a});
          }
        }
        acc = prune(std::move(expanded), cfg.epsilon, cfg.witness_pruning,
                    cfg.witness_resolution);
      }
      for (AlphaVector& v : acc) {
        next.push_back(
            {p.actions[static_cast<std::size_t>(a)].reward + p.discount * v.coeffs, a});
      }
    }
    current = prune(std::move(next), cfg.epsilon, cfg.witness_pruning, cfg.witness_resolution);
    policy.horizons.push_back(current);

    const Eigen::VectorXd values = grid_values(current);
    if (cfg.early_stop_tol > 0.0 &&
        (values - prev_values).cwiseAbs().maxCoeff() < cfg.early_stop_tol) {
      break;
    }
    prev_values = values;
  }
  return policy;
}

std::pair<int, double> best_action(const std::vector<AlphaVector>& set,
                                   const Eigen::VectorXd& belief) {
  if (set.empty()) throw InvalidInputError("best_action: empty alpha set");
  double best = -std::numeric_limits<double>::infinity();
  int action = set.front().action;
  for (const AlphaVector& alpha : set) {
    const double v = alpha.coeffs.dot(belief);
    if (v > best || (v == best && alpha.action < action)) {
      best = v;
      action = alpha.action;
    }
  }
  return {action, best};
}

std::pair<int, double> best_action(const AlphaVectorPolicy& policy, const Belief& b) {
  if (policy.horizons.empty()) throw InvalidInputError("best_action: unsolved policy");
  return best_action(policy.final_set(), b.probs);
}

namespace {

PolicyEvalResult evaluate_with(const MaintenancePomdp& p, const ActionFn& act, int episodes,
                               int maxsteps, std::uint64_t seed) {
  if (episodes < 1) throw InvalidInputError("evaluate_policy: episodes must be >= 1");
  if (maxsteps < 1) throw InvalidInputError("evaluate_policy: maxsteps must be >= 1");

  const auto returns = parallel_map<double>(
      static_cast<std::size_t>(episodes), [&](std::size_t ep) {
        Rng rng = substream(seed, ep);
        int state = sample_categorical(p.initial, rng);
        Belief belief{p.initial, 0};
        double ret = 0.0;
        double weight = 1.0;
        for (int t = 0; t < maxsteps; ++t) {
          const int a = act(belief, t);
          ret += weight * p.actions[static_cast<std::size_t>(a)].reward[state];
          weight *= p.discount;
          if (weight == 0.0) break;
          state = sample_categorical(
              p.actions[static_cast<std::size_t>(a)].trans.row(state).transpose(), rng);
          const int obs = sample_categorical(p.obs_model.row(state).transpose(), rng);
          belief = pomdp_belief_update(p, belief, a, obs);
        }
        return ret;
      });

  double sum = 0.0;
  for (const double r : returns) sum += r;
  const double mean = sum / episodes;
  double var = 0.0;
  for (const double r : returns) var += (r - mean) * (r - mean);
  var = episodes > 1 ? var / (episodes - 1) : 0.0;

  PolicyEvalResult out;
  out.mean_return = mean;
  out.std_error = std::sqrt(var / episodes);
  out.episodes = episodes;
  return out;
}

}  // namespace

PolicyEvalResult evaluate_policy(const MaintenancePomdp& p, const AlphaVectorPolicy& policy,
                                 int episodes, int maxsteps, std::uint64_t seed) {
  return evaluate_with(
      p, [&](const Belief& b, int) { return best_action(policy, b).first; }, episodes,
      maxsteps, seed);
}

PolicyEvalResult evaluate_policy(const MaintenancePomdp& p, const ActionFn& act, int episodes,
                                 int maxsteps, std::uint64_t seed) {
  return evaluate_with(p, act, episodes, maxsteps, seed);
}

}  // namespace prognos
