// Shared test fixtures: model builders and independent oracles. Everything
// here recomputes results from first principles (path enumeration, recursive
// expectimax, Monte Carlo rollouts) rather than reusing the library's
// recursions, so the unit and acceptance suites can cross-check them.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "prognos/distributions.hpp"
#include "prognos/pomdp.hpp"
#include "prognos/prognostics.hpp"
#include "prognos/rng.hpp"
#include "prognos/tmhmm.hpp"

namespace testsupport {

using namespace prognos;

constexpr double kInf = std::numeric_limits<double>::infinity();

inline bool close(double a, double b, double rtol, double atol = 1e-12) {
  if (std::isinf(a) && std::isinf(b)) return (a > 0) == (b > 0);
  return std::abs(a - b) <= atol + rtol * std::max(std::abs(a), std::abs(b));
}

// ---------------------------------------------------------------------------
// model builders

/// Gaussian components spread over [lo, hi] with the given spread.
inline std::vector<ComponentParams> gaussian_components(int k, int dim, double lo, double hi,
                                                        double variance) {
  std::vector<ComponentParams> out;
  for (int c = 0; c < k; ++c) {
    const double center = k == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * c / (k - 1.0);
    std::vector<DimParams> dims;
    for (int d = 0; d < dim; ++d) {
      dims.push_back(DimParams::gaussian(center + 0.3 * d, variance));
    }
    out.emplace_back(std::move(dims));
  }
  return out;
}

inline Eigen::VectorXd normalized(Eigen::VectorXd v) { return v / v.sum(); }

/// Random valid model. Absorbing masks use the upper-triangular pattern with
/// the last state terminal; otherwise every transition is allowed.
inline TiedMixtureHmm random_model(int n, int k, int dim, bool absorbing, Rng& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  TiedMixtureHmm m;
  m.terminal = n - 1;
  m.mask = absorbing ? TiedMixtureHmm::absorbing_mask(n) : TiedMixtureHmm::full_mask(n);

  m.initial.resize(n);
  for (int i = 0; i < n; ++i) m.initial[i] = u(rng);
  m.initial = normalized(m.initial);

  m.trans = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (m.mask(i, j)) {
        m.trans(i, j) = u(rng);
        sum += m.trans(i, j);
      }
    }
    m.trans.row(i) /= sum;
  }
  m.trans.row(m.terminal).setZero();
  m.trans(m.terminal, m.terminal) = 1.0;

  m.mix_weights.resize(n, k);
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int c = 0; c < k; ++c) {
      m.mix_weights(i, c) = u(rng);
      sum += m.mix_weights(i, c);
    }
    m.mix_weights.row(i) /= sum;
  }

  std::uniform_real_distribution<double> center(-2.0, 2.0);
  for (int c = 0; c < k; ++c) {
    std::vector<DimParams> dims;
    for (int d = 0; d < dim; ++d) {
      dims.push_back(DimParams::gaussian(center(rng), 0.5 + u(rng)));
    }
    m.components.emplace_back(std::move(dims));
  }
  return m;
}

/// Random observation sequence with occasional missing values and fully
/// masked steps; Failed sequences end with the masked failure row.
inline ObservationSequence random_sequence(const TiedMixtureHmm& m, int len, EndLabel label,
                                           Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> value(0.0, 1.5);
  const int dim = m.obs_dim();
  ObservationSequence seq;
  seq.end_label = label;
  seq.id = "test";
  for (int t = 0; t < len; ++t) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(dim);
    Mask mask = none_observed(dim);
    const bool failure_row = label == EndLabel::Failed && t == len - 1;
    if (!failure_row && u(rng) > 0.2) {  // 20% fully masked steps
      for (int d = 0; d < dim; ++d) {
        if (u(rng) > 0.25) {
          x[d] = value(rng);
          mask[static_cast<std::size_t>(d)] = 1;
        }
      }
    }
    seq.times.push_back(t);
    seq.obs.push_back(std::move(x));
    seq.masks.push_back(std::move(mask));
  }
  return seq;
}

/// The 4-state / 3-component absorbing model used by the recovery and
/// simulation experiments: three health states that degrade left to right
/// plus a terminal failure state, each health state favoring its own
/// component.
inline TiedMixtureHmm degradation_model() {
  TiedMixtureHmm m;
  const int n = 4;
  m.terminal = 3;
  m.mask = TiedMixtureHmm::absorbing_mask(n);
  m.initial = Eigen::VectorXd::Zero(n);
  m.initial[0] = 1.0;
  m.trans = Eigen::MatrixXd::Zero(n, n);
  m.trans.row(0) << 0.90, 0.07, 0.02, 0.01;
  m.trans.row(1) << 0.00, 0.88, 0.09, 0.03;
  m.trans.row(2) << 0.00, 0.00, 0.85, 0.15;
  m.trans(3, 3) = 1.0;
  m.mix_weights.resize(n, 3);
  m.mix_weights.row(0) << 0.85, 0.10, 0.05;
  m.mix_weights.row(1) << 0.10, 0.80, 0.10;
  m.mix_weights.row(2) << 0.05, 0.10, 0.85;
  m.mix_weights.row(3) << 1.0 / 3, 1.0 / 3, 1.0 / 3;
  std::vector<DimParams> c0{DimParams::gaussian(0.0, 0.5), DimParams::gaussian(10.0, 1.0)};
  std::vector<DimParams> c1{DimParams::gaussian(3.0, 0.5), DimParams::gaussian(6.0, 1.0)};
  std::vector<DimParams> c2{DimParams::gaussian(6.0, 0.5), DimParams::gaussian(2.0, 1.0)};
  m.components = {ComponentParams(c0), ComponentParams(c1), ComponentParams(c2)};
  return m;
}

// ---------------------------------------------------------------------------
// exhaustive path enumeration (oracle for forward/backward/viterbi)

struct Enumeration {
  double loglik = -kInf;
  Eigen::MatrixXd gamma;
  std::vector<Eigen::MatrixXd> xi;
  std::vector<int> best_path;
  double best_logprob = -kInf;
};

/// Log emission table straight from the documented semantics: rows carrying
/// sensor data score through state_loglik with the terminal state excluded
/// (it emits nothing); fully masked rows contribute factor 1 everywhere.
/// The final row keeps only the terminal state for Failed sequences
/// (emission term 1 unless the model emits at failure) and excludes it for
/// Censored ones.
inline Eigen::MatrixXd oracle_log_emissions(const TiedMixtureHmm& m,
                                            const ObservationSequence& seq) {
  const int T = seq.length();
  const int N = m.n_states();
  Eigen::MatrixXd logE(T, N);
  for (int t = 0; t < T; ++t) {
    const auto& mask = seq.masks[static_cast<std::size_t>(t)];
    const bool has_obs =
        std::any_of(mask.begin(), mask.end(), [](std::uint8_t b) { return b != 0; });
    if (has_obs) {
      logE.row(t) =
          m.state_loglik(seq.obs[static_cast<std::size_t>(t)], mask).transpose();
      logE(t, m.terminal) = -kInf;
    } else {
      logE.row(t).setZero();
    }
  }
  if (seq.end_label == EndLabel::Failed) {
    const auto& last_mask = seq.masks.back();
    const bool has_obs =
        std::any_of(last_mask.begin(), last_mask.end(), [](std::uint8_t b) { return b != 0; });
    logE.row(T - 1).setConstant(-kInf);
    logE(T - 1, m.terminal) =
        m.emit_at_failure && has_obs
            ? m.state_loglik(seq.obs.back(), last_mask)[m.terminal]
            : 0.0;
  } else {
    logE(T - 1, m.terminal) = -kInf;
  }
  return logE;
}

inline Enumeration enumerate_paths(const TiedMixtureHmm& m, const ObservationSequence& seq) {
  const int T = seq.length();
  const int N = m.n_states();
  const Eigen::MatrixXd logE = oracle_log_emissions(m, seq);

  std::vector<std::vector<int>> paths;
  std::vector<double> logps;
  std::vector<int> path(static_cast<std::size_t>(T), 0);
  double total_paths = std::pow(static_cast<double>(N), T);
  paths.reserve(static_cast<std::size_t>(total_paths));

  const auto log_trans = [&](int i, int j) {
    return m.trans(i, j) > 0.0 ? std::log(m.trans(i, j)) : -kInf;
  };
  const auto log_init = [&](int i) {
    return m.initial[i] > 0.0 ? std::log(m.initial[i]) : -kInf;
  };

  for (;;) {
    double lp = log_init(path[0]) + logE(0, path[0]);
    for (int t = 1; t < T && lp != -kInf; ++t) {
      lp += log_trans(path[static_cast<std::size_t>(t - 1)], path[static_cast<std::size_t>(t)]);
      lp += logE(t, path[static_cast<std::size_t>(t)]);
    }
    paths.push_back(path);
    logps.push_back(lp);

    int pos = T - 1;
    while (pos >= 0 && path[static_cast<std::size_t>(pos)] == N - 1) {
      path[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
    path[static_cast<std::size_t>(pos)] += 1;
  }

  Enumeration out;
  const double big = *std::max_element(logps.begin(), logps.end());
  if (big == -kInf) return out;

  double total = 0.0;
  for (const double lp : logps) {
    if (lp != -kInf) total += std::exp(lp - big);
  }
  out.loglik = big + std::log(total);

  out.gamma = Eigen::MatrixXd::Zero(T, N);
  out.xi.assign(static_cast<std::size_t>(std::max(T - 1, 0)), Eigen::MatrixXd::Zero(N, N));
  for (std::size_t p = 0; p < paths.size(); ++p) {
    if (logps[p] == -kInf) continue;
    const double w = std::exp(logps[p] - big) / total;
    for (int t = 0; t < T; ++t) {
      out.gamma(t, paths[p][static_cast<std::size_t>(t)]) += w;
      if (t + 1 < T) {
        out.xi[static_cast<std::size_t>(t)](paths[p][static_cast<std::size_t>(t)],
                                            paths[p][static_cast<std::size_t>(t + 1)]) += w;
      }
    }
    if (logps[p] > out.best_logprob) {
      out.best_logprob = logps[p];
      out.best_path = paths[p];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// recursive expectimax (oracle for POMDP value iteration)

inline double expectimax_value(const MaintenancePomdp& p, const Eigen::VectorXd& belief,
                               int depth) {
  double best = -kInf;
  for (int a = 0; a < p.n_actions(); ++a) {
    const ActionDef& action = p.actions[static_cast<std::size_t>(a)];
    double value = belief.dot(action.reward);
    if (depth > 1 && p.discount > 0.0) {
      const Eigen::VectorXd pred = action.trans.transpose() * belief;
      double future = 0.0;
      for (int k = 0; k < p.n_observations(); ++k) {
        const Eigen::VectorXd unnorm = pred.cwiseProduct(p.obs_model.col(k));
        const double pk = unnorm.sum();
        if (pk <= 0.0) continue;
        future += pk * expectimax_value(p, unnorm / pk, depth - 1);
      }
      value += p.discount * future;
    }
    best = std::max(best, value);
  }
  return best;
}

inline int expectimax_best_action(const MaintenancePomdp& p, const Eigen::VectorXd& belief,
                                  int depth) {
  double best = -kInf;
  int arg = 0;
  for (int a = 0; a < p.n_actions(); ++a) {
    const ActionDef& action = p.actions[static_cast<std::size_t>(a)];
    double value = belief.dot(action.reward);
    if (depth > 1 && p.discount > 0.0) {
      const Eigen::VectorXd pred = action.trans.transpose() * belief;
      double future = 0.0;
      for (int k = 0; k < p.n_observations(); ++k) {
        const Eigen::VectorXd unnorm = pred.cwiseProduct(p.obs_model.col(k));
        const double pk = unnorm.sum();
        if (pk <= 0.0) continue;
        future += pk * expectimax_value(p, unnorm / pk, depth - 1);
      }
      value += p.discount * future;
    }
    if (value > best) {
      best = value;
      arg = a;
    }
  }
  return arg;
}

// ---------------------------------------------------------------------------
// Monte Carlo first-passage rollout (oracle for failure_time_distribution)

/// Buckets: [already_failed, first passage at 1..H, beyond H].
inline Eigen::VectorXd mc_first_passage(const Eigen::MatrixXd& trans, int terminal,
                                        const Eigen::VectorXd& start, int horizon, int n_draws,
                                        std::uint64_t seed) {
  const int n = static_cast<int>(trans.rows());
  // row CDFs, sampled by inverse transform
  Eigen::MatrixXd cdf(n, n);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      acc += trans(i, j);
      cdf(i, j) = acc;
    }
  }
  Eigen::VectorXd start_cdf(n);
  {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += start[i];
      start_cdf[i] = acc;
    }
  }
  const auto draw = [](const Eigen::VectorXd& row, double u) {
    for (int j = 0; j < row.size(); ++j) {
      if (u <= row[j]) return static_cast<int>(j);
    }
    return static_cast<int>(row.size() - 1);
  };

  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd buckets = Eigen::VectorXd::Zero(horizon + 2);
  for (int d = 0; d < n_draws; ++d) {
    int state = draw(start_cdf, u(rng));
    if (state == terminal) {
      buckets[0] += 1.0;
      continue;
    }
    bool absorbed = false;
    for (int h = 1; h <= horizon; ++h) {
      state = draw(cdf.row(state).transpose(), u(rng));
      if (state == terminal) {
        buckets[h] += 1.0;
        absorbed = true;
        break;
      }
    }
    if (!absorbed) buckets[horizon + 1] += 1.0;
  }
  return buckets / n_draws;
}

}  // namespace testsupport
