// prognos: train degradation models, predict failure times, solve and run
// maintenance policies.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "prognos/errors.hpp"
#include "prognos/file_util.hpp"
#include "prognos/fleetsim.hpp"
#include "prognos/model_io.hpp"
#include "prognos/pomdp.hpp"
#include "prognos/prognostics.hpp"
#include "prognos/sequence_io.hpp"
#include "prognos/tmhmm.hpp"

namespace {

using namespace prognos;

constexpr int kExitOk = 0;
constexpr int kExitInputError = 1;
constexpr int kExitNumericFailure = 2;
constexpr int kExitNotConverged = 3;

std::vector<Family> parse_families(const std::string& spec, int dim) {
  std::vector<Family> out;
  if (spec.empty()) {
    out.assign(static_cast<std::size_t>(dim), Family::Gaussian);
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto family = family_from_name(item);
    if (!family) throw ConfigError("unknown family '" + item + "'");
    out.push_back(*family);
  }
  if (out.size() == 1 && dim > 1) out.assign(static_cast<std::size_t>(dim), out.front());
  if (static_cast<int>(out.size()) != dim) {
    throw ConfigError("--families names " + std::to_string(out.size()) +
                      " dimensions, data has " + std::to_string(dim));
  }
  return out;
}

BoolMatrix parse_mask_arg(const std::string& arg, int n_states) {
  if (arg == "absorbing") return TiedMixtureHmm::absorbing_mask(n_states);
  if (arg == "full") return TiedMixtureHmm::full_mask(n_states);
  const nlohmann::json doc = nlohmann::json::parse(read_text_file(arg), nullptr, false);
  if (doc.is_discarded() || !doc.is_array()) {
    throw InvalidInputError("mask file '" + arg + "' must hold a JSON 0/1 matrix");
  }
  if (static_cast<int>(doc.size()) != n_states) {
    throw InvalidInputError("mask file rows do not match --states");
  }
  BoolMatrix mask(n_states, n_states);
  for (int i = 0; i < n_states; ++i) {
    const auto& row = doc[static_cast<std::size_t>(i)];
    if (static_cast<int>(row.size()) != n_states) {
      throw InvalidInputError("mask file row " + std::to_string(i) + " has wrong length");
    }
    for (int j = 0; j < n_states; ++j) {
      mask(i, j) = row[static_cast<std::size_t>(j)].get<double>() != 0.0;
    }
  }
  return mask;
}

std::vector<double> parse_threshold_list(const std::string& spec) {
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw ConfigError("--thresholds is empty");
  return out;
}

Eigen::VectorXd parse_belief_arg(const std::string& spec) {
  std::vector<double> values;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) values.push_back(std::stod(item));
  if (values.empty()) throw InvalidInputError("--belief is empty");
  Eigen::VectorXd b(static_cast<int>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) b[static_cast<int>(i)] = values[i];
  const double total = b.sum();
  if (!(total > 0.0)) throw InvalidInputError("--belief must have positive mass");
  return b / total;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string data, mask = "absorbing", out, trace_out, families;
  int states = 0, components = 0, max_iters = 100;
  double tol = 1e-6, dirichlet_alpha = 1.05;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainOptions& opt) {
  if (opt.states < 2) {
    throw ConfigError("--states must be at least 2 (one terminal plus one health state)");
  }
  if (opt.components < 1) throw ConfigError("--components must be at least 1");

  const auto data = read_sequences_csv(opt.data);
  const int dim = data.front().dim();
  const auto families = parse_families(opt.families, dim);
  const BoolMatrix mask = parse_mask_arg(opt.mask, opt.states);

  const TiedMixtureHmm init =
      make_initial_model(data, opt.states, opt.components, mask, families, opt.seed);

  EmConfig cfg;
  cfg.max_iters = opt.max_iters;
  cfg.tol = opt.tol;
  cfg.dirichlet_alpha = opt.dirichlet_alpha;
  cfg.seed = opt.seed;
  const EmResult result = em_fit(init, data, cfg);

  for (const std::string& w : result.warnings) std::cerr << "warning: " << w << "\n";

  save_model_file(opt.out, result.model);

  std::ostringstream trace;
  trace << "iter,loglik\n";
  for (std::size_t i = 0; i < result.loglik_trace.size(); ++i) {
    trace << i << ',' << format_double(result.loglik_trace[i]) << '\n';
  }
  const std::string trace_path = opt.trace_out.empty() ? opt.out + ".trace.csv" : opt.trace_out;
  atomic_write_text(trace_path, trace.str());

  std::cout << "iterations=" << result.loglik_trace.size()
            << " loglik=" << format_double(result.loglik_trace.back())
            << " converged=" << (result.converged ? "yes" : "no") << "\n";
  return result.converged ? kExitOk : kExitNotConverged;
}

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
  std::string model, data, out;
  int horizon = 50;
};

void predict_single(const TiedMixtureHmm& m, const std::vector<ObservationSequence>& data,
                    int horizon, std::ostream& out) {
  for (const ObservationSequence& seq : data) {
    if (seq.dim() != m.obs_dim()) {
      throw InvalidInputError("sequence '" + seq.id + "' dimension does not match the model");
    }
    for (int len = 1; len <= seq.length(); ++len) {
      const ObservationSequence pre = seq.prefix(len);
      const ForwardResult fwd = forward_filter(m, pre);
      const Belief belief{fwd.beliefs.row(len - 1).transpose(), pre.times.back()};
      const FailureTimeDistribution ftd = failure_time_distribution(m, belief, horizon);
      const Eigen::VectorXd surv = survival_curve(m, belief, horizon);

      for (int i = 0; i < belief.probs.size(); ++i) {
        out << seq.id << ',' << len << ",belief," << i << ','
            << format_double(belief.probs[i]) << '\n';
      }
      out << seq.id << ',' << len << ",already_failed,0,"
          << format_double(ftd.already_failed) << '\n';
      for (int h = 0; h < ftd.pmf.size(); ++h) {
        out << seq.id << ',' << len << ",pmf," << h + 1 << ',' << format_double(ftd.pmf[h])
            << '\n';
      }
      out << seq.id << ',' << len << ",residual,0," << format_double(ftd.residual) << '\n';
      for (int h = 0; h < surv.size(); ++h) {
        out << seq.id << ',' << len << ",survival," << h + 1 << ',' << format_double(surv[h])
            << '\n';
      }
    }
  }
}

void predict_library(const ProfileLibrary& lib, const std::vector<ObservationSequence>& data,
                     int horizon, std::ostream& out) {
  for (const ObservationSequence& seq : data) {
    for (int len = 1; len <= seq.length(); ++len) {
      const ObservationSequence pre = seq.prefix(len);
      const ProfilePosterior post = profile_posterior(lib, pre);

      double already = 0.0;
      Eigen::VectorXd pmf = Eigen::VectorXd::Zero(horizon);
      double residual = 0.0;
      for (int p = 0; p < lib.n_profiles(); ++p) {
        if (post.posterior[p] <= 0.0) continue;
        const TiedMixtureHmm& m = lib.profiles[static_cast<std::size_t>(p)];
        const ForwardResult fwd = forward_filter(m, pre);
        const Belief belief{fwd.beliefs.row(len - 1).transpose(), pre.times.back()};
        const FailureTimeDistribution ftd = failure_time_distribution(m, belief, horizon);
        already += post.posterior[p] * ftd.already_failed;
        pmf += post.posterior[p] * ftd.pmf;
        residual += post.posterior[p] * ftd.residual;
      }

      for (int p = 0; p < lib.n_profiles(); ++p) {
        out << seq.id << ',' << len << ",profile_posterior," << p << ','
            << format_double(post.posterior[p]) << '\n';
      }
      out << seq.id << ',' << len << ",entropy_bits,0," << format_double(post.entropy_bits)
          << '\n';
      out << seq.id << ',' << len << ",already_failed,0," << format_double(already) << '\n';
      for (int h = 0; h < horizon; ++h) {
        out << seq.id << ',' << len << ",pmf," << h + 1 << ',' << format_double(pmf[h]) << '\n';
      }
      out << seq.id << ',' << len << ",residual,0," << format_double(residual) << '\n';
      double cum = already;
      for (int h = 0; h < horizon; ++h) {
        cum += pmf[h];
        out << seq.id << ',' << len << ",survival," << h + 1 << ','
            << format_double(std::clamp(1.0 - cum, 0.0, 1.0)) << '\n';
      }
    }
  }
}

int cmd_predict(const PredictOptions& opt) {
  const LoadedModel loaded = load_model_file(opt.model);
  const auto data = read_sequences_csv(opt.data);
  std::ostringstream out;
  out << "asset_id,prefix,kind,index,value\n";
  if (loaded.model) {
    predict_single(*loaded.model, data, opt.horizon, out);
  } else {
    if (loaded.library->profiles.front().obs_dim() != data.front().dim()) {
      throw InvalidInputError("data dimension does not match the library");
    }
    predict_library(*loaded.library, data, opt.horizon, out);
  }
  atomic_write_text(opt.out, out.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// policy

struct PolicyOptions {
  std::string model, actions, solve_out, policy, belief;
  int horizon = 30;
  double epsilon = 1e-9;
  double witness_resolution = 0.1;
  bool exact_prune = false;
  bool act = false;
};

const TiedMixtureHmm& require_model(const LoadedModel& loaded, const std::string& path) {
  if (!loaded.model) {
    throw InvalidInputError("'" + path + "' holds a profile library; a single model is needed");
  }
  return *loaded.model;
}

int cmd_policy(const PolicyOptions& opt) {
  const LoadedModel loaded = load_model_file(opt.model);
  const TiedMixtureHmm& m = require_model(loaded, opt.model);
  const PomdpBuildSpec spec =
      opt.actions.empty() ? PomdpBuildSpec{} : load_pomdp_spec(opt.actions);
  const MaintenancePomdp pomdp = build_pomdp(m, spec);

  AlphaVectorPolicy policy;
  std::vector<std::string> action_names;
  for (const ActionDef& a : pomdp.actions) action_names.push_back(a.name);

  if (opt.act && !opt.policy.empty()) {
    auto loaded_policy = load_policy_file(opt.policy);
    policy = std::move(loaded_policy.first);
    if (!loaded_policy.second.empty()) action_names = std::move(loaded_policy.second);
  } else {
    ValueIterationConfig cfg;
    cfg.horizon = opt.horizon;
    cfg.epsilon = opt.epsilon;
    cfg.witness_pruning = !opt.exact_prune;
    cfg.witness_resolution = opt.witness_resolution;
    policy = value_iteration(pomdp, cfg);
  }

  if (!opt.solve_out.empty()) {
    save_policy_file(opt.solve_out, policy, pomdp);
    std::cout << "horizons=" << policy.solved_horizon()
              << " alphas=" << policy.final_set().size() << "\n";
  }
  if (opt.act) {
    const Eigen::VectorXd b = parse_belief_arg(opt.belief);
    if (b.size() != pomdp.n_states()) {
      throw InvalidInputError("--belief names " + std::to_string(b.size()) +
                              " states, model has " + std::to_string(pomdp.n_states()));
    }
    const auto [action, value] = best_action(policy.final_set(), b);
    std::cout << action_names[static_cast<std::size_t>(action)] << ' ' << format_double(value)
              << "\n";
  }
  if (!opt.act && opt.solve_out.empty()) {
    throw ConfigError("policy: nothing to do; pass --solve-out and/or --act");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
  std::string model, actions, policy, out;
  int horizon = 30, assets = 100, steps = 100;
  double epsilon = 1e-9;
  std::uint64_t seed = 0;
};

int cmd_simulate(const SimulateOptions& opt) {
  const LoadedModel loaded = load_model_file(opt.model);
  const TiedMixtureHmm& m = require_model(loaded, opt.model);
  const PomdpBuildSpec spec =
      opt.actions.empty() ? PomdpBuildSpec{} : load_pomdp_spec(opt.actions);
  const MaintenancePomdp pomdp = build_pomdp(m, spec);

  AlphaVectorPolicy policy;
  if (!opt.policy.empty()) {
    policy = load_policy_file(opt.policy).first;
  } else {
    ValueIterationConfig cfg;
    cfg.horizon = opt.horizon;
    cfg.epsilon = opt.epsilon;
    policy = value_iteration(pomdp, cfg);
  }

  FleetRunConfig cfg;
  cfg.nassets = opt.assets;
  cfg.maxsteps = opt.steps;
  cfg.seed = opt.seed;
  cfg.record_trajectories = false;
  const FleetRun run = run_policy_loop(pomdp, policy, cfg);

  std::ostringstream out;
  out << "asset,failed,operating_steps,downtime_steps,replacement_steps,total_reward,"
         "discounted_return\n";
  for (std::size_t i = 0; i < run.assets.size(); ++i) {
    const AssetTrajectory& a = run.assets[i];
    out << i << ',' << (a.failed ? 1 : 0) << ',' << a.operating_steps << ','
        << a.downtime_steps << ',' << a.replacement_steps << ','
        << format_double(a.total_reward) << ',' << format_double(a.discounted_return) << '\n';
  }
  atomic_write_text(opt.out, out.str());

  std::cout << "failure_rate=" << format_double(run.failure_rate)
            << " mean_uptime=" << format_double(run.mean_uptime)
            << " total_reward=" << format_double(run.total_reward)
            << " mean_discounted_return=" << format_double(run.mean_discounted_return) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// tradeoff

struct TradeoffOptions {
  std::string model, out, thresholds;
  int assets = 200, maxlen = 200, lookahead = 5;
  double operating_point = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t seed = 0;
};

int cmd_tradeoff(const TradeoffOptions& opt) {
  const LoadedModel loaded = load_model_file(opt.model);

  std::vector<double> thresholds;
  if (opt.thresholds.empty()) {
    for (int i = 1; i <= 50; ++i) thresholds.push_back(i / 100.0);
  } else {
    thresholds = parse_threshold_list(opt.thresholds);
  }
  if (!std::isnan(opt.operating_point)) {
    const bool present =
        std::any_of(thresholds.begin(), thresholds.end(),
                    [&](double t) { return t == opt.operating_point; });
    if (!present) {
      thresholds.push_back(opt.operating_point);
      std::sort(thresholds.begin(), thresholds.end());
    }
  }

  ProfileLibrary lib =
      loaded.model ? ProfileLibrary::single(*loaded.model) : *loaded.library;
  const FleetDataset fleet = generate_fleet(lib, opt.assets, opt.maxlen, 0.0, opt.seed);
  const std::vector<TradeoffPoint> curve =
      loaded.model ? tradeoff_curve(*loaded.model, fleet.sequences, thresholds, opt.lookahead)
                   : tradeoff_curve(lib, fleet.sequences, thresholds, opt.lookahead);

  std::ostringstream out;
  out << "threshold,failure_rate,mean_uptime,marked\n";
  for (const TradeoffPoint& p : curve) {
    const bool marked = !std::isnan(opt.operating_point) && p.threshold == opt.operating_point;
    out << format_double(p.threshold) << ',' << format_double(p.failure_rate) << ','
        << format_double(p.mean_uptime) << ',' << (marked ? 1 : 0) << '\n';
  }
  atomic_write_text(opt.out, out.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// ppc

struct PpcOptions {
  std::string model, data, out;
  int nreps = 200, maxlen = -1;
  std::uint64_t seed = 0;
};

int cmd_ppc(const PpcOptions& opt) {
  const LoadedModel loaded = load_model_file(opt.model);
  const TiedMixtureHmm& m = require_model(loaded, opt.model);
  const auto data = read_sequences_csv(opt.data);

  PpcConfig cfg;
  cfg.nreps = opt.nreps;
  cfg.maxlen = opt.maxlen;
  cfg.seed = opt.seed;
  const PpcResult result =
      posterior_predictive_check(m, data, default_ppc_statistics(), cfg);

  std::ostringstream out;
  out << "statistic,p_value\n";
  for (const auto& [name, p] : result.p_values) {
    out << name << ',' << (std::isnan(p) ? "nan" : format_double(p)) << '\n';
  }
  atomic_write_text(opt.out, out.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tied-mixture degradation models: failure prediction and maintenance policies"};
  app.require_subcommand(1);

  TrainOptions train;
  CLI::App* train_cmd = app.add_subcommand("train", "fit a model with EM");
  train_cmd->add_option("--data", train.data, "sequence CSV")->required();
  train_cmd->add_option("--states", train.states, "number of states incl. terminal")->required();
  train_cmd->add_option("--components", train.components, "number of shared components")
      ->required();
  train_cmd->add_option("--mask", train.mask, "'absorbing', 'full' or a JSON matrix file");
  train_cmd->add_option("--max-iters", train.max_iters, "EM iteration cap");
  train_cmd->add_option("--tol", train.tol, "loglik improvement tolerance");
  train_cmd->add_option("--dirichlet-alpha", train.dirichlet_alpha,
                        "transition smoothing prior (1 = none)");
  train_cmd->add_option("--seed", train.seed, "RNG seed")->required();
  train_cmd->add_option("--out", train.out, "model JSON output")->required();
  train_cmd->add_option("--trace-out", train.trace_out,
                        "loglik trace CSV (default: <out>.trace.csv)");
  train_cmd->add_option("--families", train.families,
                        "per-sensor families, e.g. 'gaussian,poisson' (default gaussian)");

  PredictOptions predict;
  CLI::App* predict_cmd =
      app.add_subcommand("predict", "per-prefix beliefs, failure-time pmfs, survival curves");
  predict_cmd->add_option("--model", predict.model, "model or library JSON")->required();
  predict_cmd->add_option("--data", predict.data, "sequence CSV")->required();
  predict_cmd->add_option("--horizon", predict.horizon, "prediction horizon (steps)");
  predict_cmd->add_option("--out", predict.out, "output CSV")->required();

  PolicyOptions policy;
  CLI::App* policy_cmd = app.add_subcommand("policy", "solve the maintenance POMDP / pick actions");
  policy_cmd->add_option("--model", policy.model, "model JSON")->required();
  policy_cmd->add_option("--actions", policy.actions, "action/reward spec JSON");
  policy_cmd->add_option("--horizon", policy.horizon, "value-iteration horizon");
  policy_cmd->add_option("--epsilon", policy.epsilon, "pruning tolerance");
  policy_cmd->add_option("--witness-resolution", policy.witness_resolution,
                         "belief-grid resolution for pruning");
  policy_cmd->add_flag("--exact-prune", policy.exact_prune,
                       "dominance-only pruning (no belief grid)");
  policy_cmd->add_option("--solve-out", policy.solve_out, "write alpha vectors to this JSON");
  policy_cmd->add_flag("--act", policy.act, "print the best action for --belief");
  policy_cmd->add_option("--belief", policy.belief, "comma-separated belief vector");
  policy_cmd->add_option("--policy", policy.policy, "previously solved policy JSON (act mode)");

  SimulateOptions simulate;
  CLI::App* simulate_cmd = app.add_subcommand("simulate", "closed-loop fleet simulation");
  simulate_cmd->add_option("--model", simulate.model, "model JSON")->required();
  simulate_cmd->add_option("--actions", simulate.actions, "action/reward spec JSON");
  simulate_cmd->add_option("--policy", simulate.policy, "solved policy JSON (else solve)");
  simulate_cmd->add_option("--horizon", simulate.horizon, "value-iteration horizon");
  simulate_cmd->add_option("--assets", simulate.assets, "fleet size");
  simulate_cmd->add_option("--steps", simulate.steps, "steps per asset");
  simulate_cmd->add_option("--seed", simulate.seed, "RNG seed")->required();
  simulate_cmd->add_option("--out", simulate.out, "per-asset metrics CSV")->required();

  TradeoffOptions tradeoff;
  CLI::App* tradeoff_cmd =
      app.add_subcommand("tradeoff", "risk vs uptime curve of threshold replacement");
  tradeoff_cmd->add_option("--model", tradeoff.model, "model or library JSON")->required();
  tradeoff_cmd->add_option("--assets", tradeoff.assets, "fleet size");
  tradeoff_cmd->add_option("--maxlen", tradeoff.maxlen, "natural-history length cap");
  tradeoff_cmd->add_option("--lookahead", tradeoff.lookahead, "risk lookahead (steps)");
  tradeoff_cmd->add_option("--thresholds", tradeoff.thresholds,
                           "comma-separated risk thresholds (default 0.01..0.50)");
  tradeoff_cmd->add_option("--operating-point", tradeoff.operating_point,
                           "risk level to include and mark in the output");
  tradeoff_cmd->add_option("--seed", tradeoff.seed, "RNG seed")->required();
  tradeoff_cmd->add_option("--out", tradeoff.out, "curve CSV")->required();

  PpcOptions ppc;
  CLI::App* ppc_cmd = app.add_subcommand("ppc", "posterior predictive checks");
  ppc_cmd->add_option("--model", ppc.model, "model JSON")->required();
  ppc_cmd->add_option("--data", ppc.data, "sequence CSV")->required();
  ppc_cmd->add_option("--nreps", ppc.nreps, "replicate datasets");
  ppc_cmd->add_option("--maxlen", ppc.maxlen, "replicate horizon (default: longest sequence)");
  ppc_cmd->add_option("--seed", ppc.seed, "RNG seed")->required();
  ppc_cmd->add_option("--out", ppc.out, "p-value CSV")->required();

  try {
    app.parse(argc, argv);
    if (*train_cmd) return cmd_train(train);
    if (*predict_cmd) return cmd_predict(predict);
    if (*policy_cmd) return cmd_policy(policy);
    if (*simulate_cmd) return cmd_simulate(simulate);
    if (*tradeoff_cmd) return cmd_tradeoff(tradeoff);
    if (*ppc_cmd) return cmd_ppc(ppc);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInputError;
  } catch (const ZeroLikelihoodError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumericFailure;
  } catch (const StarvedComponentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumericFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  }
  return kExitInputError;
}
