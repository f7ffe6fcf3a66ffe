#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "prognos/tmhmm.hpp"

namespace prognos {

/// Filtering posterior over hidden states at a time point.
struct Belief {
  Eigen::VectorXd probs;
  std::int64_t step = 0;
};

/// Belief before any observation: the model's initial distribution.
Belief initial_belief(const TiedMixtureHmm& m);

/// Belief after the very first observation: initial distribution weighted by
/// the observation likelihood (no transition step). Matches row 0 of
/// forward_filter.
Belief start_belief(const TiedMixtureHmm& m, const Eigen::VectorXd& x, const Mask& mask);

/// One step of the scaled forward recursion: predict through the transition
/// matrix, weight by the observation likelihood, renormalize. Observed data
/// excludes the terminal state (it emits nothing); a fully masked
/// observation degenerates to the pure Markov prediction b * trans.
Belief update_belief(const TiedMixtureHmm& m, const Belief& b, const Eigen::VectorXd& x,
                     const Mask& mask);

/// First-passage distribution into the terminal state over the next H steps.
/// Mass already absorbed at the belief is reported separately: for every
/// belief, already_failed + sum(pmf) + residual == 1.
struct FailureTimeDistribution {
  Eigen::VectorXd pmf;  // pmf[h-1] = P(first entry into terminal at step tau+h)
  double residual = 0.0;
  double already_failed = 0.0;
};

FailureTimeDistribution failure_time_distribution(const TiedMixtureHmm& m, const Belief& b,
                                                  int horizon);

/// Same computation for a bare transition matrix (used where only chain
/// dynamics are available, e.g. policy simulation).
FailureTimeDistribution first_passage_distribution(const Eigen::MatrixXd& trans, int terminal,
                                                   const Eigen::VectorXd& probs, int horizon);

/// S[h-1] = P(not yet failed by step tau+h); non-increasing, in [0, 1].
Eigen::VectorXd survival_curve(const TiedMixtureHmm& m, const Belief& b, int horizon);

/// A categorical mixture of degradation processes sharing one sensor layout.
struct ProfileLibrary {
  std::vector<TiedMixtureHmm> profiles;
  Eigen::VectorXd prior;

  int n_profiles() const { return static_cast<int>(profiles.size()); }
  std::vector<Violation> validate() const;
  static ProfileLibrary single(TiedMixtureHmm m);
};

struct ProfilePosterior {
  Eigen::VectorXd posterior;
  double entropy_bits = 0.0;
  std::vector<double> logliks;  // per-profile data log-evidence
};

/// Posterior over which degradation profile produced the prefix, via
/// per-profile forward filtering; entropy is in bits.
ProfilePosterior profile_posterior(const ProfileLibrary& lib, const ObservationSequence& prefix);

enum class PpcStatistic {
  MeanTimeToFailure,
  ObservationMean,
  ObservationVariance,
  CensoringFraction,
};

std::vector<PpcStatistic> default_ppc_statistics();

struct PpcConfig {
  int nreps = 200;
  /// Horizon used when sampling replicate sequences; -1 derives the longest
  /// observed length from the data.
  int maxlen = -1;
  std::uint64_t seed = 0;
};

struct PpcResult {
  /// Statistic name -> one-sided p-value P(replicate >= observed).
  std::vector<std::pair<std::string, double>> p_values;
};

/// Posterior predictive check: simulates nreps replicate datasets of the
/// same size as `data` and reports, per built-in statistic, the fraction of
/// replicates at or above the observed value.
PpcResult posterior_predictive_check(const TiedMixtureHmm& m,
                                     const std::vector<ObservationSequence>& data,
                                     const std::vector<PpcStatistic>& statistics,
                                     const PpcConfig& cfg);

struct TradeoffPoint {
  double threshold = 0.0;
  double failure_rate = 0.0;
  double mean_uptime = 0.0;
};

/// Risk/uptime trade-off of the threshold policy "replace when the predicted
/// probability of failing within `lookahead` steps reaches theta", replayed
/// over a fleet of natural histories. failure_rate is the fleet fraction
/// that reaches the terminal state before replacement.
std::vector<TradeoffPoint> tradeoff_curve(const TiedMixtureHmm& m,
                                          const std::vector<ObservationSequence>& fleet,
                                          const std::vector<double>& thresholds,
                                          int lookahead = 5);

/// Library variant: beliefs are tracked per profile and risk is averaged
/// under the online profile posterior.
std::vector<TradeoffPoint> tradeoff_curve(const ProfileLibrary& lib,
                                          const std::vector<ObservationSequence>& fleet,
                                          const std::vector<double>& thresholds,
                                          int lookahead = 5);

}  // namespace prognos
