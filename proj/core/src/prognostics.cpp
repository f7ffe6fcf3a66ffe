#include "prognos/prognostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "prognos/errors.hpp"
#include "prognos/parallel.hpp"
#include "prognos/rng.hpp"

namespace prognos {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (int i = 0; i < v.size(); ++i) acc += std::exp(v[i] - m);
  return m + std::log(acc);
}

struct AbsorbingSplit {
  std::vector<int> transient;   // state indices excluding terminal
  Eigen::MatrixXd q;            // transient-to-transient block
  Eigen::VectorXd into_terminal;
};

AbsorbingSplit split_terminal(const Eigen::MatrixXd& trans, int terminal) {
  AbsorbingSplit s;
  const int n = static_cast<int>(trans.rows());
  s.transient.reserve(static_cast<std::size_t>(n - 1));
  for (int i = 0; i < n; ++i) {
    if (i != terminal) s.transient.push_back(i);
  }
  const int nt = static_cast<int>(s.transient.size());
  s.q.resize(nt, nt);
  s.into_terminal.resize(nt);
  for (int a = 0; a < nt; ++a) {
    for (int b = 0; b < nt; ++b) s.q(a, b) = trans(s.transient[a], s.transient[b]);
    s.into_terminal[a] = trans(s.transient[a], terminal);
  }
  return s;
}

}  // namespace

Belief initial_belief(const TiedMixtureHmm& m) { return {m.initial, 0}; }

namespace {

bool any_observed(const Mask& mask) {
  return std::any_of(mask.begin(), mask.end(), [](std::uint8_t b) { return b != 0; });
}

Belief correct_belief(const TiedMixtureHmm& m, const Eigen::VectorXd& pred,
                      const Eigen::VectorXd& x, const Mask& mask, std::int64_t step) {
  Eigen::VectorXd logw = m.state_loglik(x, mask);
  // sensor data implies the asset is still operational
  if (any_observed(mask)) logw[m.terminal] = kNegInf;
  const double row_max = logw.maxCoeff();
  if (row_max == kNegInf) {
    throw ZeroLikelihoodError("observation impossible under every state",
                              static_cast<int>(step));
  }
  Eigen::VectorXd v(pred.size());
  for (int i = 0; i < pred.size(); ++i) {
    v[i] = logw[i] == kNegInf ? 0.0 : pred[i] * std::exp(logw[i] - row_max);
  }
  const double c = v.sum();
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw ZeroLikelihoodError("belief update has zero posterior mass", static_cast<int>(step));
  }
  return {v / c, step};
}

}  // namespace

Belief start_belief(const TiedMixtureHmm& m, const Eigen::VectorXd& x, const Mask& mask) {
  return correct_belief(m, m.initial, x, mask, 0);
}

Belief update_belief(const TiedMixtureHmm& m, const Belief& b, const Eigen::VectorXd& x,
                     const Mask& mask) {
  if (b.probs.size() != m.n_states()) {
    throw InvalidInputError("update_belief: belief dimension mismatch");
  }
  const Eigen::VectorXd pred = m.trans.transpose() * b.probs;
  return correct_belief(m, pred, x, mask, b.step + 1);
}

FailureTimeDistribution first_passage_distribution(const Eigen::MatrixXd& trans, int terminal,
                                                   const Eigen::VectorXd& probs, int horizon) {
  if (horizon < 1) throw InvalidInputError("first passage: horizon must be >= 1");
  if (probs.size() != trans.rows() || trans.rows() != trans.cols()) {
    throw InvalidInputError("first passage: dimension mismatch");
  }
  if (terminal < 0 || terminal >= trans.rows()) {
    throw InvalidInputError("first passage: terminal index out of range");
  }
  const AbsorbingSplit s = split_terminal(trans, terminal);
  const int nt = static_cast<int>(s.transient.size());

  FailureTimeDistribution out;
  out.already_failed = probs[terminal];
  out.pmf.resize(horizon);

  Eigen::VectorXd v(nt);
  for (int a = 0; a < nt; ++a) v[a] = probs[s.transient[a]];
  for (int h = 0; h < horizon; ++h) {
    out.pmf[h] = v.dot(s.into_terminal);
    v = s.q.transpose() * v;
  }
  out.residual = v.sum();
  return out;
}

FailureTimeDistribution failure_time_distribution(const TiedMixtureHmm& m, const Belief& b,
                                                  int horizon) {
  if (b.probs.size() != m.n_states()) {
    throw InvalidInputError("failure_time_distribution: belief dimension mismatch");
  }
  return first_passage_distribution(m.trans, m.terminal, b.probs, horizon);
}

Eigen::VectorXd survival_curve(const TiedMixtureHmm& m, const Belief& b, int horizon) {
  const FailureTimeDistribution ftd = failure_time_distribution(m, b, horizon);
  Eigen::VectorXd s(horizon);
  double cum = ftd.already_failed;
  for (int h = 0; h < horizon; ++h) {
    cum += ftd.pmf[h];
    s[h] = std::clamp(1.0 - cum, 0.0, 1.0);
  }
  return s;
}

std::vector<Violation> ProfileLibrary::validate() const {
  std::vector<Violation> out;
  if (profiles.empty()) {
    out.push_back({"library has no profiles", -1, -1});
    return out;
  }
  if (prior.size() != n_profiles()) {
    out.push_back({"prior length does not match profile count", -1, -1});
    return out;
  }
  if (std::abs(prior.sum() - 1.0) > 1e-9) {
    out.push_back({"profile prior sums to " + std::to_string(prior.sum()), -1, -1});
  }
  const int d = profiles.front().obs_dim();
  for (int p = 0; p < n_profiles(); ++p) {
    if (profiles[static_cast<std::size_t>(p)].obs_dim() != d) {
      out.push_back({"profiles disagree on sensor dimension", p, -1});
    }
    for (Violation v : profiles[static_cast<std::size_t>(p)].validate()) {
      v.message = "profile " + std::to_string(p) + ": " + v.message;
      out.push_back(std::move(v));
    }
  }
  return out;
}

ProfileLibrary ProfileLibrary::single(TiedMixtureHmm m) {
  ProfileLibrary lib;
  lib.profiles.push_back(std::move(m));
  lib.prior = Eigen::VectorXd::Ones(1);
  return lib;
}

ProfilePosterior profile_posterior(const ProfileLibrary& lib, const ObservationSequence& prefix) {
  prefix.check();
  const int p = lib.n_profiles();
  Eigen::VectorXd log_post(p);
  ProfilePosterior out;
  out.logliks.resize(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) {
    double ll;
    try {
      ll = forward_filter(lib.profiles[static_cast<std::size_t>(i)], prefix).loglik;
    } catch (const ZeroLikelihoodError&) {
      ll = kNegInf;
    }
    out.logliks[static_cast<std::size_t>(i)] = ll;
    const double lp = lib.prior[i] > 0.0 ? std::log(lib.prior[i]) : kNegInf;
    log_post[i] = lp + ll;
  }
  const double norm = log_sum_exp(log_post);
  if (norm == kNegInf) {
    throw ZeroLikelihoodError("every profile assigns zero likelihood to the prefix",
                              prefix.length() - 1, prefix.id);
  }
  out.posterior.resize(p);
  double entropy = 0.0;
  for (int i = 0; i < p; ++i) {
    const double prob = log_post[i] == kNegInf ? 0.0 : std::exp(log_post[i] - norm);
    out.posterior[i] = prob;
    if (prob > 0.0) entropy -= prob * std::log2(prob);
  }
  out.entropy_bits = entropy;
  return out;
}

std::vector<PpcStatistic> default_ppc_statistics() {
  return {PpcStatistic::MeanTimeToFailure, PpcStatistic::ObservationMean,
          PpcStatistic::ObservationVariance, PpcStatistic::CensoringFraction};
}

namespace {

/// Expands the chosen statistics over a dataset into (name, value) pairs.
/// NaN marks a statistic that is undefined on the dataset.
std::vector<std::pair<std::string, double>> evaluate_statistics(
    const std::vector<PpcStatistic>& statistics, const std::vector<ObservationSequence>& data,
    int dim) {
  std::vector<std::pair<std::string, double>> out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const PpcStatistic stat : statistics) {
    switch (stat) {
      case PpcStatistic::MeanTimeToFailure: {
        double sum = 0.0;
        int count = 0;
        for (const auto& seq : data) {
          if (seq.end_label == EndLabel::Failed) {
            sum += static_cast<double>(seq.times.back() - seq.times.front());
            ++count;
          }
        }
        out.emplace_back("mean_time_to_failure", count > 0 ? sum / count : nan);
        break;
      }
      case PpcStatistic::ObservationMean:
      case PpcStatistic::ObservationVariance: {
        for (int d = 0; d < dim; ++d) {
          double sum = 0.0, sum_sq = 0.0, count = 0.0;
          for (const auto& seq : data) {
            for (int t = 0; t < seq.length(); ++t) {
              if (!seq.masks[static_cast<std::size_t>(t)][static_cast<std::size_t>(d)]) continue;
              const double v = seq.obs[static_cast<std::size_t>(t)][d];
              sum += v;
              sum_sq += v * v;
              count += 1.0;
            }
          }
          if (stat == PpcStatistic::ObservationMean) {
            out.emplace_back("obs_mean[" + std::to_string(d) + "]",
                             count > 0.0 ? sum / count : nan);
          } else {
            const double mean = count > 0.0 ? sum / count : nan;
            out.emplace_back("obs_variance[" + std::to_string(d) + "]",
                             count > 0.0 ? sum_sq / count - mean * mean : nan);
          }
        }
        break;
      }
      case PpcStatistic::CensoringFraction: {
        double censored = 0.0;
        for (const auto& seq : data) {
          if (seq.end_label == EndLabel::Censored) censored += 1.0;
        }
        out.emplace_back("censoring_fraction",
                         data.empty() ? nan : censored / static_cast<double>(data.size()));
        break;
      }
    }
  }
  return out;
}

}  // namespace

PpcResult posterior_predictive_check(const TiedMixtureHmm& m,
                                     const std::vector<ObservationSequence>& data,
                                     const std::vector<PpcStatistic>& statistics,
                                     const PpcConfig& cfg) {
  if (cfg.nreps < 100) throw InvalidInputError("posterior_predictive_check: nreps must be >= 100");
  if (data.empty()) throw InvalidInputError("posterior_predictive_check: no data");

  int maxlen = cfg.maxlen;
  if (maxlen < 0) {
    for (const auto& seq : data) maxlen = std::max(maxlen, seq.length());
  }
  const int dim = m.obs_dim();
  const auto observed = evaluate_statistics(statistics, data, dim);

  const auto replicate_stats = parallel_map<std::vector<std::pair<std::string, double>>>(
      static_cast<std::size_t>(cfg.nreps), [&](std::size_t rep) {
        Rng rng = substream(cfg.seed, rep);
        std::vector<ObservationSequence> sim;
        sim.reserve(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
          sim.push_back(sample_sequence(m, maxlen, rng).seq);
        }
        return evaluate_statistics(statistics, sim, dim);
      });

  PpcResult out;
  for (std::size_t s = 0; s < observed.size(); ++s) {
    const double obs_value = observed[s].second;
    if (std::isnan(obs_value)) {
      out.p_values.emplace_back(observed[s].first, std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    double at_or_above = 0.0, defined = 0.0;
    for (const auto& rep : replicate_stats) {
      const double v = rep[s].second;
      if (std::isnan(v)) continue;
      defined += 1.0;
      if (v >= obs_value) at_or_above += 1.0;
    }
    out.p_values.emplace_back(observed[s].first, defined > 0.0
                                                     ? at_or_above / defined
                                                     : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

namespace {

/// Risk series of one asset: the predicted probability of failing within
/// `lookahead` steps, evaluated after each operational observation.
struct AssetRisk {
  std::vector<double> risk;
  bool ends_failed = false;
};

double lookahead_risk(const TiedMixtureHmm& m, const Belief& belief, int lookahead) {
  const FailureTimeDistribution ftd = failure_time_distribution(m, belief, lookahead);
  return ftd.already_failed + ftd.pmf.sum();
}

AssetRisk asset_risk_single(const TiedMixtureHmm& m, const ObservationSequence& seq,
                            int lookahead) {
  AssetRisk out;
  out.ends_failed = seq.end_label == EndLabel::Failed;
  const int operational = out.ends_failed ? seq.length() - 1 : seq.length();
  out.risk.reserve(static_cast<std::size_t>(operational));
  Belief belief;
  for (int t = 0; t < operational; ++t) {
    belief = t == 0 ? start_belief(m, seq.obs[0], seq.masks[0])
                    : update_belief(m, belief, seq.obs[static_cast<std::size_t>(t)],
                                    seq.masks[static_cast<std::size_t>(t)]);
    out.risk.push_back(lookahead_risk(m, belief, lookahead));
  }
  return out;
}

AssetRisk asset_risk_library(const ProfileLibrary& lib, const ObservationSequence& seq,
                             int lookahead) {
  AssetRisk out;
  out.ends_failed = seq.end_label == EndLabel::Failed;
  const int operational = out.ends_failed ? seq.length() - 1 : seq.length();
  const int p = lib.n_profiles();

  std::vector<Belief> beliefs;
  beliefs.reserve(static_cast<std::size_t>(p));
  Eigen::VectorXd log_evidence(p);
  for (int i = 0; i < p; ++i) {
    beliefs.push_back(initial_belief(lib.profiles[static_cast<std::size_t>(i)]));
    log_evidence[i] = lib.prior[i] > 0.0 ? std::log(lib.prior[i]) : kNegInf;
  }

  for (int t = 0; t < operational; ++t) {
    for (int i = 0; i < p; ++i) {
      if (log_evidence[i] == kNegInf) continue;
      const TiedMixtureHmm& m = lib.profiles[static_cast<std::size_t>(i)];
      // one scaled forward step, tracking the evidence contribution
      const Eigen::VectorXd pred =
          t == 0 ? m.initial
                 : Eigen::VectorXd(m.trans.transpose() *
                                   beliefs[static_cast<std::size_t>(i)].probs);
      const Eigen::VectorXd logw =
          m.state_loglik(seq.obs[static_cast<std::size_t>(t)], seq.masks[static_cast<std::size_t>(t)]);
      const double row_max = logw.maxCoeff();
      if (row_max == kNegInf) {
        log_evidence[i] = kNegInf;
        continue;
      }
      Eigen::VectorXd v(pred.size());
      for (int j = 0; j < pred.size(); ++j) {
        v[j] = logw[j] == kNegInf ? 0.0 : pred[j] * std::exp(logw[j] - row_max);
      }
      const double c = v.sum();
      if (!(c > 0.0)) {
        log_evidence[i] = kNegInf;
        continue;
      }
      beliefs[static_cast<std::size_t>(i)].probs = v / c;
      beliefs[static_cast<std::size_t>(i)].step += 1;
      log_evidence[i] += row_max + std::log(c);
    }
    const double norm = log_sum_exp(log_evidence);
    if (norm == kNegInf) {
      throw ZeroLikelihoodError("every profile assigns zero likelihood", t, seq.id);
    }
    double risk = 0.0;
    for (int i = 0; i < p; ++i) {
      if (log_evidence[i] == kNegInf) continue;
      const double w = std::exp(log_evidence[i] - norm);
      risk += w * lookahead_risk(lib.profiles[static_cast<std::size_t>(i)],
                                 beliefs[static_cast<std::size_t>(i)], lookahead);
    }
    out.risk.push_back(risk);
  }
  return out;
}

std::vector<TradeoffPoint> curve_from_risks(const std::vector<AssetRisk>& assets,
                                            const std::vector<double>& thresholds) {
  std::vector<TradeoffPoint> out;
  out.reserve(thresholds.size());
  for (const double theta : thresholds) {
    if (!(theta > 0.0) || !(theta < 1.0)) {
      throw InvalidInputError("tradeoff thresholds must lie in (0, 1)");
    }
    double failures = 0.0;
    double uptime = 0.0;
    for (const AssetRisk& asset : assets) {
      std::size_t cross = asset.risk.size();
      for (std::size_t t = 0; t < asset.risk.size(); ++t) {
        if (asset.risk[t] >= theta) {
          cross = t;
          break;
        }
      }
      if (cross < asset.risk.size()) {
        uptime += static_cast<double>(cross + 1);  // replaced after this step
      } else {
        uptime += static_cast<double>(asset.risk.size());
        if (asset.ends_failed) failures += 1.0;
      }
    }
    const double n = assets.empty() ? 1.0 : static_cast<double>(assets.size());
    out.push_back({theta, failures / n, uptime / n});
  }
  return out;
}

}  // namespace

std::vector<TradeoffPoint> tradeoff_curve(const TiedMixtureHmm& m,
                                          const std::vector<ObservationSequence>& fleet,
                                          const std::vector<double>& thresholds, int lookahead) {
  if (lookahead < 1) throw InvalidInputError("tradeoff lookahead must be >= 1");
  const auto risks = parallel_map<AssetRisk>(
      fleet.size(), [&](std::size_t i) { return asset_risk_single(m, fleet[i], lookahead); });
  return curve_from_risks(risks, thresholds);
}

std::vector<TradeoffPoint> tradeoff_curve(const ProfileLibrary& lib,
                                          const std::vector<ObservationSequence>& fleet,
                                          const std::vector<double>& thresholds, int lookahead) {
  if (lookahead < 1) throw InvalidInputError("tradeoff lookahead must be >= 1");
  const auto risks = parallel_map<AssetRisk>(
      fleet.size(), [&](std::size_t i) { return asset_risk_library(lib, fleet[i], lookahead); });
  return curve_from_risks(risks, thresholds);
}

}  // namespace prognos
