#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "prognos/distributions.hpp"
#include "prognos/rng.hpp"

namespace prognos {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class EndLabel { Failed, Censored };

std::string_view end_label_name(EndLabel label);

/// One asset's time series. Steps are indices on a uniform grid; a fully
/// masked step means the chain advanced without data. For Failed sequences
/// the final step is the failure event itself (by default it carries no
/// sensor values).
struct ObservationSequence {
  std::vector<std::int64_t> times;
  std::vector<Eigen::VectorXd> obs;
  std::vector<Mask> masks;
  EndLabel end_label = EndLabel::Censored;
  std::string id;

  int length() const { return static_cast<int>(times.size()); }
  int dim() const { return obs.empty() ? 0 : static_cast<int>(obs.front().size()); }
  bool contiguous() const;

  /// First `len` steps. Proper prefixes are labeled Censored (the asset was
  /// still operating at the cut); the full-length prefix keeps its label.
  ObservationSequence prefix(int len) const;

  /// Fills gaps in `times` with fully masked steps so every algorithm sees
  /// one chain transition per step.
  ObservationSequence densified() const;

  /// Throws InvalidInputError unless lengths match, there is at least one
  /// step and times increase strictly.
  void check() const;
};

struct Violation {
  std::string message;
  int row = -1;
  int col = -1;
};

/// Tied-mixture absorbing hidden Markov model. All states emit through
/// mixtures over one shared pool of components; states differ only in their
/// mixing weights. `terminal` is the absorbing failure state.
struct TiedMixtureHmm {
  Eigen::VectorXd initial;     // N
  Eigen::MatrixXd trans;       // N x N, row-stochastic, zero where !mask
  BoolMatrix mask;             // structural support of trans
  Eigen::MatrixXd mix_weights; // N x K, row-stochastic
  std::vector<ComponentParams> components;  // K shared components
  int terminal = -1;
  /// Whether the failure step of a Failed sequence carries an emission term.
  bool emit_at_failure = false;

  int n_states() const { return static_cast<int>(initial.size()); }
  int n_components() const { return static_cast<int>(components.size()); }
  int obs_dim() const { return components.empty() ? 0 : components.front().dim(); }

  /// Every invariant violation, with offending row/column where applicable.
  /// Empty result means the model is valid.
  std::vector<Violation> validate() const;

  /// log p(x | z = i) for every state i: a log-sum-exp over the shared
  /// components weighted by the state's mixing row. A fully masked x gives
  /// the zero vector.
  Eigen::VectorXd state_loglik(const Eigen::VectorXd& x, const Mask& mask) const;

  /// Per-state posterior over components given x: row i holds
  /// p(y = k | z = i, x), the prior mixing row when x is fully masked.
  Eigen::MatrixXd component_posteriors(const Eigen::VectorXd& x, const Mask& mask) const;

  /// Upper-triangular support (no transition from a less healthy state back
  /// toward a healthier one); the last state is absorbing.
  static BoolMatrix absorbing_mask(int n_states);
  static BoolMatrix full_mask(int n_states);
};

struct ForwardResult {
  Eigen::MatrixXd beliefs;  // T x N filtering posteriors
  double loglik = 0.0;
};

/// Scaled forward recursion. The terminal state cannot produce sensor data,
/// so every row with observed values conditions on the operational states;
/// fully masked rows are pure Markov prediction steps. The end label
/// conditions the final step: Failed clamps it to the terminal state,
/// Censored removes the terminal state. Throws ZeroLikelihoodError naming
/// the step when an observation has probability zero under the model.
ForwardResult forward_filter(const TiedMixtureHmm& m, const ObservationSequence& seq);

struct PosteriorBundle {
  Eigen::MatrixXd gamma;                   // T x N state posteriors
  std::vector<Eigen::MatrixXd> xi;         // T-1 pairwise posteriors, N x N
  std::vector<Eigen::MatrixXd> comp_resp;  // T joint (state, component) posteriors, N x K
  double loglik = 0.0;
};

PosteriorBundle forward_backward(const TiedMixtureHmm& m, const ObservationSequence& seq);

struct ViterbiResult {
  std::vector<int> path;
  double logprob = 0.0;
};

/// MAP state path among end-label-feasible paths; ties break toward the
/// lower state index.
ViterbiResult viterbi(const TiedMixtureHmm& m, const ObservationSequence& seq);

struct EmConfig {
  int max_iters = 100;
  double tol = 1e-6;
  /// Symmetric Dirichlet smoothing on transition rows; 1.0 is pure MLE.
  double dirichlet_alpha = 1.05;
  std::uint64_t seed = 0;
  double variance_floor = kDefaultVarianceFloor;
};

struct EmResult {
  TiedMixtureHmm model;
  std::vector<double> loglik_trace;
  bool converged = false;
  std::vector<std::string> warnings;
};

/// Baum-Welch with tied components: the E-step runs forward_backward per
/// sequence (in parallel, merged in sequence order), the M-step pools
/// component responsibilities across all states and sequences. Structural
/// zeros of the mask survive every iteration exactly.
EmResult em_fit(const TiedMixtureHmm& init, const std::vector<ObservationSequence>& data,
                const EmConfig& cfg);

struct SampleResult {
  ObservationSequence seq;
  std::vector<int> path;
};

/// Generative draw. Entering the terminal state appends a fully masked
/// failure step and ends the sequence (Failed); surviving maxlen steps ends
/// it Censored.
SampleResult sample_sequence(const TiedMixtureHmm& m, int maxlen, Rng& rng);

/// Deterministic data-driven starting point for em_fit: component parameters
/// from a seeded k-means over pooled complete observations, mixing weights
/// near-uniform with seeded jitter, transitions uniform over the mask
/// support, initial uniform over non-terminal states.
TiedMixtureHmm make_initial_model(const std::vector<ObservationSequence>& data, int n_states,
                                  int n_components, const BoolMatrix& mask,
                                  const std::vector<Family>& families, std::uint64_t seed,
                                  int terminal = -1);

}  // namespace prognos
