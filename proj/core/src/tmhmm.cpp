#include "prognos/tmhmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include "prognos/errors.hpp"
#include "prognos/parallel.hpp"

namespace prognos {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kRowSumTol = 1e-9;

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (int i = 0; i < v.size(); ++i) acc += std::exp(v[i] - m);
  return m + std::log(acc);
}

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

int sample_categorical(const Eigen::VectorXd& probs, Rng& rng) {
  std::discrete_distribution<int> dist(probs.data(), probs.data() + probs.size());
  return dist(rng);
}

bool fully_masked(const Mask& mask) {
  return std::none_of(mask.begin(), mask.end(), [](std::uint8_t b) { return b != 0; });
}

/// Per-step log emission terms. The terminal state has no observation
/// distribution, so any row carrying sensor data excludes it; fully masked
/// rows are pure prediction steps. The final row applies the end label:
/// Failed keeps only the terminal state (emission term 1 unless
/// emit_at_failure), Censored excludes it even without data.
Eigen::MatrixXd log_emissions(const TiedMixtureHmm& m, const ObservationSequence& seq) {
  const int T = seq.length();
  const int N = m.n_states();
  Eigen::MatrixXd logE(T, N);
  for (int t = 0; t < T; ++t) {
    const bool last = (t == T - 1);
    const bool has_obs = !fully_masked(seq.masks[static_cast<std::size_t>(t)]);
    if (last && seq.end_label == EndLabel::Failed) {
      logE.row(t).setConstant(kNegInf);
      logE(t, m.terminal) = m.emit_at_failure && has_obs
                                ? m.state_loglik(seq.obs[t], seq.masks[t])[m.terminal]
                                : 0.0;
      continue;
    }
    if (has_obs) {
      logE.row(t) = m.state_loglik(seq.obs[t], seq.masks[t]).transpose();
      logE(t, m.terminal) = kNegInf;
    } else {
      logE.row(t).setZero();
      if (last && seq.end_label == EndLabel::Censored) logE(t, m.terminal) = kNegInf;
    }
  }
  return logE;
}

struct ScaledPass {
  Eigen::MatrixXd alpha;      // T x N, rows normalized (filtering posteriors)
  Eigen::MatrixXd emissions;  // T x N, exp(logE - rowmax)
  Eigen::VectorXd row_max;    // per-step max of logE
  Eigen::VectorXd scale;      // per-step normalizers of the scaled recursion
  double loglik = 0.0;
};

ScaledPass scaled_forward(const TiedMixtureHmm& m, const ObservationSequence& seq,
                          const Eigen::MatrixXd& logE) {
  const int T = seq.length();
  const int N = m.n_states();
  ScaledPass fw;
  fw.alpha.resize(T, N);
  fw.emissions.resize(T, N);
  fw.row_max.resize(T);
  fw.scale.resize(T);

  for (int t = 0; t < T; ++t) {
    const double row_max = logE.row(t).maxCoeff();
    if (row_max == kNegInf) {
      throw ZeroLikelihoodError(
          "observation at step " + std::to_string(t) + " is impossible under the model", t,
          seq.id);
    }
    fw.row_max[t] = row_max;
    for (int j = 0; j < N; ++j) {
      const double le = logE(t, j);
      fw.emissions(t, j) = le == kNegInf ? 0.0 : std::exp(le - row_max);
    }

    Eigen::VectorXd u(N);
    if (t == 0) {
      u = m.initial.cwiseProduct(fw.emissions.row(0).transpose());
    } else {
      const Eigen::VectorXd pred = m.trans.transpose() * fw.alpha.row(t - 1).transpose();
      u = pred.cwiseProduct(fw.emissions.row(t).transpose());
    }
    const double c = u.sum();
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw ZeroLikelihoodError(
          "zero-probability observation at step " + std::to_string(t), t, seq.id);
    }
    fw.alpha.row(t) = (u / c).transpose();
    fw.scale[t] = c;
    fw.loglik += row_max + std::log(c);
  }
  return fw;
}

Eigen::MatrixXd scaled_backward(const TiedMixtureHmm& m, const ScaledPass& fw) {
  const int T = static_cast<int>(fw.alpha.rows());
  const int N = m.n_states();
  Eigen::MatrixXd beta(T, N);
  beta.row(T - 1).setOnes();
  for (int t = T - 2; t >= 0; --t) {
    const Eigen::VectorXd weighted =
        fw.emissions.row(t + 1).transpose().cwiseProduct(beta.row(t + 1).transpose());
    beta.row(t) = (m.trans * weighted).transpose() / fw.scale[t + 1];
  }
  return beta;
}

void check_sequence_for(const TiedMixtureHmm& m, const ObservationSequence& seq) {
  seq.check();
  if (!seq.contiguous()) {
    throw InvalidInputError(
        "sequence '" + seq.id + "' has gaps in its step indices; densify it first");
  }
  if (seq.dim() != m.obs_dim()) {
    throw InvalidInputError("sequence '" + seq.id + "' dimension " +
                            std::to_string(seq.dim()) + " does not match model dimension " +
                            std::to_string(m.obs_dim()));
  }
}

}  // namespace

std::string_view end_label_name(EndLabel label) {
  return label == EndLabel::Failed ? "failed" : "censored";
}

bool ObservationSequence::contiguous() const {
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (times[i] != times[i - 1] + 1) return false;
  }
  return true;
}

ObservationSequence ObservationSequence::prefix(int len) const {
  if (len < 1 || len > length()) throw InvalidInputError("prefix length out of range");
  ObservationSequence out;
  out.times.assign(times.begin(), times.begin() + len);
  out.obs.assign(obs.begin(), obs.begin() + len);
  out.masks.assign(masks.begin(), masks.begin() + len);
  out.end_label = len == length() ? end_label : EndLabel::Censored;
  out.id = id;
  return out;
}

ObservationSequence ObservationSequence::densified() const {
  check();
  if (contiguous()) return *this;
  ObservationSequence out;
  out.end_label = end_label;
  out.id = id;
  const int d = dim();
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (i > 0) {
      for (std::int64_t t = times[i - 1] + 1; t < times[i]; ++t) {
        out.times.push_back(t);
        out.obs.push_back(Eigen::VectorXd::Zero(d));
        out.masks.push_back(none_observed(d));
      }
    }
    out.times.push_back(times[i]);
    out.obs.push_back(obs[i]);
    out.masks.push_back(masks[i]);
  }
  return out;
}

void ObservationSequence::check() const {
  if (times.empty()) throw InvalidInputError("sequence '" + id + "' has no steps");
  if (obs.size() != times.size() || masks.size() != times.size()) {
    throw InvalidInputError("sequence '" + id + "': times/obs/masks lengths differ");
  }
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (times[i] <= times[i - 1]) {
      throw InvalidInputError("sequence '" + id + "': steps must increase strictly");
    }
  }
  const int d = dim();
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (static_cast<int>(obs[i].size()) != d || static_cast<int>(masks[i].size()) != d) {
      throw InvalidInputError("sequence '" + id + "': inconsistent observation dimension");
    }
  }
}

BoolMatrix TiedMixtureHmm::absorbing_mask(int n_states) {
  BoolMatrix mask(n_states, n_states);
  for (int i = 0; i < n_states; ++i) {
    for (int j = 0; j < n_states; ++j) mask(i, j) = j >= i;
  }
  return mask;
}

BoolMatrix TiedMixtureHmm::full_mask(int n_states) {
  return BoolMatrix::Constant(n_states, n_states, true);
}

std::vector<Violation> TiedMixtureHmm::validate() const {
  std::vector<Violation> out;
  const int n = n_states();
  const int k = n_components();

  if (n < 1) {
    out.push_back({"model has no states", -1, -1});
    return out;
  }
  if (terminal < 0 || terminal >= n) {
    out.push_back({"terminal index " + std::to_string(terminal) + " out of range", -1, -1});
  }
  if (trans.rows() != n || trans.cols() != n) {
    out.push_back({"transition matrix is not N x N", -1, -1});
    return out;
  }
  if (mask.rows() != n || mask.cols() != n) {
    out.push_back({"mask is not N x N", -1, -1});
    return out;
  }
  if (mix_weights.rows() != n || k == 0 || mix_weights.cols() != k) {
    out.push_back({"mixing-weight matrix is not N x K", -1, -1});
    return out;
  }
  for (int c = 1; c < k; ++c) {
    if (components[static_cast<std::size_t>(c)].dim() != components.front().dim()) {
      out.push_back({"components disagree on sensor dimension", -1, c});
    }
  }

  if (std::abs(initial.sum() - 1.0) > kRowSumTol) {
    out.push_back({"initial distribution sums to " + std::to_string(initial.sum()), -1, -1});
  }
  for (int i = 0; i < n; ++i) {
    if (initial[i] < 0.0) out.push_back({"initial has a negative entry", i, -1});
  }

  for (int i = 0; i < n; ++i) {
    const double row_sum = trans.row(i).sum();
    if (std::abs(row_sum - 1.0) > kRowSumTol) {
      out.push_back({"transition row " + std::to_string(i) + " sums to " +
                         std::to_string(row_sum),
                     i, -1});
    }
    for (int j = 0; j < n; ++j) {
      if (trans(i, j) < 0.0) {
        out.push_back({"negative transition probability", i, j});
      }
      if (!mask(i, j) && trans(i, j) != 0.0) {
        out.push_back({"structural zero violated at (" + std::to_string(i) + "," +
                           std::to_string(j) + ")",
                       i, j});
      }
    }
  }
  if (terminal >= 0 && terminal < n && std::abs(trans(terminal, terminal) - 1.0) > kRowSumTol) {
    out.push_back({"terminal state is not absorbing", terminal, terminal});
  }

  for (int i = 0; i < n; ++i) {
    const double row_sum = mix_weights.row(i).sum();
    if (std::abs(row_sum - 1.0) > kRowSumTol) {
      out.push_back({"mixing-weight row " + std::to_string(i) + " sums to " +
                         std::to_string(row_sum),
                     i, -1});
    }
    for (int c = 0; c < k; ++c) {
      if (mix_weights(i, c) < 0.0) out.push_back({"negative mixing weight", i, c});
    }
  }
  return out;
}

Eigen::VectorXd TiedMixtureHmm::state_loglik(const Eigen::VectorXd& x, const Mask& mask) const {
  const int n = n_states();
  const int k = n_components();
  if (fully_masked(mask)) return Eigen::VectorXd::Zero(n);  // empty product
  Eigen::VectorXd comp_loglik(k);
  for (int c = 0; c < k; ++c) {
    comp_loglik[c] = components[static_cast<std::size_t>(c)].log_pdf(x, mask);
  }
  Eigen::VectorXd out(n);
  Eigen::VectorXd terms(k);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) {
      terms[c] = safe_log(mix_weights(i, c)) + comp_loglik[c];
    }
    out[i] = log_sum_exp(terms);
  }
  return out;
}

Eigen::MatrixXd TiedMixtureHmm::component_posteriors(const Eigen::VectorXd& x,
                                                     const Mask& mask) const {
  const int n = n_states();
  const int k = n_components();
  Eigen::MatrixXd out(n, k);
  if (fully_masked(mask)) {
    out = mix_weights;
    return out;
  }
  Eigen::VectorXd comp_loglik(k);
  for (int c = 0; c < k; ++c) {
    comp_loglik[c] = components[static_cast<std::size_t>(c)].log_pdf(x, mask);
  }
  Eigen::VectorXd terms(k);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) terms[c] = safe_log(mix_weights(i, c)) + comp_loglik[c];
    const double norm = log_sum_exp(terms);
    if (norm == kNegInf) {
      out.row(i) = mix_weights.row(i);  // state impossible here; prior keeps rows stochastic
      continue;
    }
    for (int c = 0; c < k; ++c) {
      out(i, c) = terms[c] == kNegInf ? 0.0 : std::exp(terms[c] - norm);
    }
  }
  return out;
}

ForwardResult forward_filter(const TiedMixtureHmm& m, const ObservationSequence& seq) {
  check_sequence_for(m, seq);
  const Eigen::MatrixXd logE = log_emissions(m, seq);
  ScaledPass fw = scaled_forward(m, seq, logE);
  return {std::move(fw.alpha), fw.loglik};
}

PosteriorBundle forward_backward(const TiedMixtureHmm& m, const ObservationSequence& seq) {
  check_sequence_for(m, seq);
  const int T = seq.length();
  const int N = m.n_states();
  const Eigen::MatrixXd logE = log_emissions(m, seq);
  const ScaledPass fw = scaled_forward(m, seq, logE);
  const Eigen::MatrixXd beta = scaled_backward(m, fw);

  PosteriorBundle out;
  out.loglik = fw.loglik;
  out.gamma.resize(T, N);
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd g = fw.alpha.row(t).transpose().cwiseProduct(beta.row(t).transpose());
    out.gamma.row(t) = (g / g.sum()).transpose();
  }

  out.xi.reserve(static_cast<std::size_t>(std::max(T - 1, 0)));
  for (int t = 0; t + 1 < T; ++t) {
    Eigen::MatrixXd slice(N, N);
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) {
        slice(i, j) = fw.alpha(t, i) * m.trans(i, j) * fw.emissions(t + 1, j) *
                      beta(t + 1, j) / fw.scale[t + 1];
      }
    }
    const double s = slice.sum();
    if (s > 0.0) slice /= s;
    out.xi.push_back(std::move(slice));
  }

  out.comp_resp.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const bool failure_step = (t == T - 1 && seq.end_label == EndLabel::Failed &&
                               !m.emit_at_failure);
    Eigen::MatrixXd w = failure_step ? m.mix_weights
                                     : m.component_posteriors(seq.obs[t], seq.masks[t]);
    for (int i = 0; i < N; ++i) w.row(i) *= out.gamma(t, i);
    out.comp_resp.push_back(std::move(w));
  }
  return out;
}

ViterbiResult viterbi(const TiedMixtureHmm& m, const ObservationSequence& seq) {
  check_sequence_for(m, seq);
  const int T = seq.length();
  const int N = m.n_states();
  const Eigen::MatrixXd logE = log_emissions(m, seq);

  Eigen::MatrixXd log_trans(N, N);
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) log_trans(i, j) = safe_log(m.trans(i, j));
  }

  Eigen::MatrixXd delta(T, N);
  Eigen::MatrixXi backptr(T, N);
  for (int j = 0; j < N; ++j) delta(0, j) = safe_log(m.initial[j]) + logE(0, j);
  backptr.row(0).setConstant(-1);

  for (int t = 1; t < T; ++t) {
    for (int j = 0; j < N; ++j) {
      double best = kNegInf;
      int arg = 0;
      for (int i = 0; i < N; ++i) {
        const double cand = delta(t - 1, i) + log_trans(i, j);
        if (cand > best) {  // strict '>' keeps the lowest index on ties
          best = cand;
          arg = i;
        }
      }
      delta(t, j) = best + logE(t, j);
      backptr(t, j) = arg;
    }
  }

  double best = kNegInf;
  int arg = 0;
  for (int j = 0; j < N; ++j) {
    if (delta(T - 1, j) > best) {
      best = delta(T - 1, j);
      arg = j;
    }
  }
  if (best == kNegInf) {
    throw ZeroLikelihoodError("no feasible state path for sequence", T - 1, seq.id);
  }

  ViterbiResult out;
  out.logprob = best;
  out.path.assign(static_cast<std::size_t>(T), 0);
  out.path[static_cast<std::size_t>(T - 1)] = arg;
  for (int t = T - 1; t > 0; --t) {
    arg = backptr(t, arg);
    out.path[static_cast<std::size_t>(t - 1)] = arg;
  }
  return out;
}

namespace {

void warn_once(std::vector<std::string>& warnings, std::string message) {
  if (std::find(warnings.begin(), warnings.end(), message) == warnings.end()) {
    warnings.push_back(std::move(message));
  }
}

struct EmPartial {
  Eigen::VectorXd init_acc;
  Eigen::MatrixXd trans_counts;
  Eigen::MatrixXd mix_counts;
  std::vector<SuffStats> comp_stats;
  double loglik = 0.0;
  std::optional<ZeroLikelihoodError> error;
};

EmPartial e_step_one(const TiedMixtureHmm& m, const ObservationSequence& seq) {
  const int N = m.n_states();
  const int K = m.n_components();
  EmPartial p;
  p.init_acc = Eigen::VectorXd::Zero(N);
  p.trans_counts = Eigen::MatrixXd::Zero(N, N);
  p.mix_counts = Eigen::MatrixXd::Zero(N, K);
  p.comp_stats.assign(static_cast<std::size_t>(K), SuffStats(m.obs_dim()));
  try {
    const PosteriorBundle bundle = forward_backward(m, seq);
    p.loglik = bundle.loglik;
    p.init_acc = bundle.gamma.row(0).transpose();
    for (const Eigen::MatrixXd& slice : bundle.xi) p.trans_counts += slice;
    for (int t = 0; t < seq.length(); ++t) {
      p.mix_counts += bundle.comp_resp[static_cast<std::size_t>(t)];
      const Eigen::VectorXd comp_weight =
          bundle.comp_resp[static_cast<std::size_t>(t)].colwise().sum().transpose();
      for (int k = 0; k < K; ++k) {
        p.comp_stats[static_cast<std::size_t>(k)].accumulate(seq.obs[static_cast<std::size_t>(t)],
                                                             seq.masks[static_cast<std::size_t>(t)],
                                                             comp_weight[k]);
      }
    }
  } catch (const ZeroLikelihoodError& e) {
    p.error = e;
  }
  return p;
}

}  // namespace

EmResult em_fit(const TiedMixtureHmm& init, const std::vector<ObservationSequence>& data,
                const EmConfig& cfg) {
  if (data.empty()) throw InvalidInputError("em_fit: no sequences");
  if (cfg.max_iters < 1) throw InvalidInputError("em_fit: max_iters must be >= 1");
  if (cfg.dirichlet_alpha < 1.0) {
    throw InvalidInputError("em_fit: dirichlet_alpha must be >= 1");
  }
  {
    const auto violations = init.validate();
    if (!violations.empty()) {
      throw InvalidInputError("em_fit: invalid initial model: " + violations.front().message);
    }
  }

  const int N = init.n_states();
  const int K = init.n_components();
  std::vector<Family> families;
  families.reserve(static_cast<std::size_t>(init.obs_dim()));
  for (const DimParams& dp : init.components.front().dims()) families.push_back(dp.family);

  EmResult result;
  result.model = init;

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    const TiedMixtureHmm& model = result.model;
    std::vector<EmPartial> partials = parallel_map<EmPartial>(
        data.size(), [&](std::size_t s) { return e_step_one(model, data[s]); });

    double loglik = 0.0;
    Eigen::VectorXd init_acc = Eigen::VectorXd::Zero(N);
    Eigen::MatrixXd trans_counts = Eigen::MatrixXd::Zero(N, N);
    Eigen::MatrixXd mix_counts = Eigen::MatrixXd::Zero(N, K);
    std::vector<SuffStats> comp_stats(static_cast<std::size_t>(K), SuffStats(init.obs_dim()));
    for (std::size_t s = 0; s < partials.size(); ++s) {
      EmPartial& p = partials[s];
      if (p.error) {
        throw ZeroLikelihoodError("sequence '" + data[s].id + "' (index " + std::to_string(s) +
                                      ") has zero likelihood at step " +
                                      std::to_string(p.error->step()) +
                                      "; widen the initial model",
                                  p.error->step(), data[s].id);
      }
      loglik += p.loglik;
      init_acc += p.init_acc;
      trans_counts += p.trans_counts;
      mix_counts += p.mix_counts;
      for (int k = 0; k < K; ++k) {
        comp_stats[static_cast<std::size_t>(k)].merge(p.comp_stats[static_cast<std::size_t>(k)]);
      }
    }

    result.loglik_trace.push_back(loglik);
    if (iter > 0 &&
        loglik - result.loglik_trace[static_cast<std::size_t>(iter - 1)] < cfg.tol) {
      result.converged = true;
      break;
    }

    TiedMixtureHmm next = result.model;

    next.initial = init_acc / init_acc.sum();

    const double pseudo = cfg.dirichlet_alpha - 1.0;
    for (int i = 0; i < N; ++i) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(N);
      double row_sum = 0.0;
      for (int j = 0; j < N; ++j) {
        if (!init.mask(i, j)) continue;
        row[j] = trans_counts(i, j) + pseudo;
        row_sum += row[j];
      }
      if (row_sum > 0.0) {
        next.trans.row(i) = (row / row_sum).transpose();
      } else {
        warn_once(result.warnings, "transition row " + std::to_string(i) +
                                       " received no counts; kept previous row");
      }
    }

    for (int i = 0; i < N; ++i) {
      const double row_sum = mix_counts.row(i).sum();
      if (row_sum > kStarvedWeight) {
        next.mix_weights.row(i) = mix_counts.row(i) / row_sum;
      } else {
        warn_once(result.warnings, "mixing row " + std::to_string(i) +
                                       " received no responsibility; kept previous row");
      }
    }

    for (int k = 0; k < K; ++k) {
      try {
        next.components[static_cast<std::size_t>(k)] = mle_update(
            comp_stats[static_cast<std::size_t>(k)], families, cfg.variance_floor);
      } catch (const StarvedComponentError& e) {
        warn_once(result.warnings, "component " + std::to_string(k) + " starved (" + e.what() +
                                       "); kept previous parameters");
      }
    }

    result.model = std::move(next);
  }
  return result;
}

SampleResult sample_sequence(const TiedMixtureHmm& m, int maxlen, Rng& rng) {
  if (maxlen < 1) throw InvalidInputError("sample_sequence: maxlen must be >= 1");
  const int d = m.obs_dim();
  SampleResult out;
  out.seq.end_label = EndLabel::Censored;

  int state = sample_categorical(m.initial, rng);
  for (std::int64_t t = 0;; ++t) {
    if (state == m.terminal) {
      out.seq.times.push_back(t);
      out.seq.obs.push_back(Eigen::VectorXd::Zero(d));
      out.seq.masks.push_back(none_observed(d));
      out.path.push_back(state);
      out.seq.end_label = EndLabel::Failed;
      break;
    }
    if (t >= maxlen) break;

    const int comp = sample_categorical(m.mix_weights.row(state).transpose(), rng);
    out.seq.times.push_back(t);
    out.seq.obs.push_back(m.components[static_cast<std::size_t>(comp)].sample(rng));
    out.seq.masks.push_back(all_observed(d));
    out.path.push_back(state);

    state = sample_categorical(m.trans.row(state).transpose(), rng);
  }
  return out;
}

namespace {

/// Seeded k-means (k-means++ start, Lloyd refinement) over complete rows.
std::vector<Eigen::VectorXd> kmeans_centers(const std::vector<Eigen::VectorXd>& points, int k,
                                            Rng& rng) {
  std::vector<Eigen::VectorXd> centers;
  centers.reserve(static_cast<std::size_t>(k));
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  centers.push_back(points[pick(rng)]);
  std::vector<double> dist2(points.size());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::max();
      for (const auto& c : centers) best = std::min(best, (points[i] - c).squaredNorm());
      dist2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      centers.push_back(points[pick(rng)]);
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    std::size_t chosen = points.size() - 1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      target -= dist2[i];
      if (target <= 0.0) {
        chosen = i;
        break;
      }
    }
    centers.push_back(points[chosen]);
  }

  std::vector<int> assign(points.size(), 0);
  for (int iter = 0; iter < 20; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::max();
      int arg = 0;
      for (int c = 0; c < k; ++c) {
        const double dd = (points[i] - centers[static_cast<std::size_t>(c)]).squaredNorm();
        if (dd < best) {
          best = dd;
          arg = c;
        }
      }
      if (assign[i] != arg) {
        assign[i] = arg;
        changed = true;
      }
    }
    for (int c = 0; c < k; ++c) {
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(points.front().size());
      int count = 0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (assign[i] == c) {
          mean += points[i];
          ++count;
        }
      }
      if (count > 0) {
        centers[static_cast<std::size_t>(c)] = mean / count;
      } else {
        // re-seed an empty cluster at the point farthest from its center
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
          const double dd =
              (points[i] - centers[static_cast<std::size_t>(assign[i])]).squaredNorm();
          if (dd > far_d) {
            far_d = dd;
            far = i;
          }
        }
        centers[static_cast<std::size_t>(c)] = points[far];
      }
    }
    if (!changed) break;
  }
  return centers;
}

DimParams dim_params_for(Family family, double mean, double var, double floor) {
  switch (family) {
    case Family::Gaussian:
      return DimParams::gaussian(mean, std::max(var, floor));
    case Family::Poisson:
      return DimParams::poisson(std::max(mean, 1e-3));
    case Family::Exponential:
      return DimParams::exponential(1.0 / std::max(mean, 1e-3));
    case Family::Gamma: {
      const double m2 = std::max(mean, 1e-3);
      const double v2 = std::max(var, 1e-6);
      const double shape = std::clamp(m2 * m2 / v2, 1e-2, 1e4);
      return DimParams::gamma(shape, shape / m2);
    }
  }
  return DimParams::gaussian(mean, std::max(var, floor));
}

}  // namespace

TiedMixtureHmm make_initial_model(const std::vector<ObservationSequence>& data, int n_states,
                                  int n_components, const BoolMatrix& mask,
                                  const std::vector<Family>& families, std::uint64_t seed,
                                  int terminal) {
  if (n_states < 2) throw InvalidInputError("need at least 2 states (one terminal)");
  if (n_components < 1) throw InvalidInputError("need at least 1 component");
  if (data.empty()) throw InvalidInputError("no sequences");
  const int d = data.front().dim();
  if (static_cast<int>(families.size()) != d) {
    throw InvalidInputError("family list does not match data dimension");
  }
  if (mask.rows() != n_states || mask.cols() != n_states) {
    throw InvalidInputError("mask is not N x N");
  }
  if (terminal < 0) terminal = n_states - 1;

  // Pool complete rows (subsampled deterministically when large), keeping
  // each row's relative position within its sequence: for absorbing chains
  // the order in which clusters appear over an asset's life is the natural
  // state ordering.
  std::vector<Eigen::VectorXd> complete;
  std::vector<double> position;
  Eigen::VectorXd pooled_sum = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd pooled_sum_sq = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd pooled_count = Eigen::VectorXd::Zero(d);
  for (const ObservationSequence& seq : data) {
    seq.check();
    if (seq.dim() != d) throw InvalidInputError("sequences disagree on sensor dimension");
    for (int t = 0; t < seq.length(); ++t) {
      bool all = true;
      for (int j = 0; j < d; ++j) {
        if (seq.masks[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)]) {
          const double v = seq.obs[static_cast<std::size_t>(t)][j];
          pooled_sum[j] += v;
          pooled_sum_sq[j] += v * v;
          pooled_count[j] += 1.0;
        } else {
          all = false;
        }
      }
      if (all) {
        complete.push_back(seq.obs[static_cast<std::size_t>(t)]);
        position.push_back(seq.length() > 1 ? static_cast<double>(t) / (seq.length() - 1)
                                            : 0.5);
      }
    }
  }
  constexpr std::size_t kPoolCap = 50000;
  if (complete.size() > kPoolCap) {
    std::vector<Eigen::VectorXd> sub;
    std::vector<double> sub_pos;
    const std::size_t stride = complete.size() / kPoolCap + 1;
    for (std::size_t i = 0; i < complete.size(); i += stride) {
      sub.push_back(complete[i]);
      sub_pos.push_back(position[i]);
    }
    complete.swap(sub);
    position.swap(sub_pos);
  }

  Eigen::VectorXd pooled_mean(d), pooled_var(d);
  for (int j = 0; j < d; ++j) {
    const double c = std::max(pooled_count[j], 1.0);
    pooled_mean[j] = pooled_sum[j] / c;
    pooled_var[j] = std::max(pooled_sum_sq[j] / c - pooled_mean[j] * pooled_mean[j], 1e-12);
  }

  TiedMixtureHmm m;
  m.terminal = terminal;
  m.mask = mask;
  m.components.reserve(static_cast<std::size_t>(n_components));

  Rng rng = substream(seed, 0);
  std::vector<double> cluster_position;  // mean relative time of each component
  if (!complete.empty()) {
    auto centers = kmeans_centers(complete, n_components, rng);
    // cluster second moments and mean positions
    std::vector<Eigen::VectorXd> var(static_cast<std::size_t>(n_components),
                                     Eigen::VectorXd::Zero(d));
    std::vector<int> counts(static_cast<std::size_t>(n_components), 0);
    std::vector<double> pos_sum(static_cast<std::size_t>(n_components), 0.0);
    for (std::size_t i = 0; i < complete.size(); ++i) {
      const Eigen::VectorXd& x = complete[i];
      int arg = 0;
      double best = std::numeric_limits<double>::max();
      for (int c = 0; c < n_components; ++c) {
        const double dd = (x - centers[static_cast<std::size_t>(c)]).squaredNorm();
        if (dd < best) {
          best = dd;
          arg = c;
        }
      }
      var[static_cast<std::size_t>(arg)] +=
          (x - centers[static_cast<std::size_t>(arg)]).cwiseAbs2();
      counts[static_cast<std::size_t>(arg)] += 1;
      pos_sum[static_cast<std::size_t>(arg)] += position[i];
    }
    // order clusters by their mean appearance time
    std::vector<int> order(static_cast<std::size_t>(n_components));
    for (int c = 0; c < n_components; ++c) {
      order[static_cast<std::size_t>(c)] = c;
      pos_sum[static_cast<std::size_t>(c)] /=
          std::max(counts[static_cast<std::size_t>(c)], 1);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return pos_sum[static_cast<std::size_t>(a)] <
                                                pos_sum[static_cast<std::size_t>(b)]; });
    for (int rank = 0; rank < n_components; ++rank) {
      const int c = order[static_cast<std::size_t>(rank)];
      std::vector<DimParams> dims;
      dims.reserve(static_cast<std::size_t>(d));
      for (int j = 0; j < d; ++j) {
        const double cluster_var =
            counts[static_cast<std::size_t>(c)] > 1
                ? var[static_cast<std::size_t>(c)][j] / counts[static_cast<std::size_t>(c)]
                : pooled_var[j];
        // keep some spread so no data point starts impossibly unlikely
        const double v = std::max(cluster_var, 0.1 * pooled_var[j]);
        dims.push_back(dim_params_for(families[static_cast<std::size_t>(j)],
                                      centers[static_cast<std::size_t>(c)][j], v, 1e-6));
      }
      m.components.emplace_back(std::move(dims));
      cluster_position.push_back(pos_sum[static_cast<std::size_t>(c)]);
    }
  } else {
    // no complete rows: spread components along per-dimension pooled moments
    for (int c = 0; c < n_components; ++c) {
      const double offset =
          n_components == 1 ? 0.0 : (2.0 * c / (n_components - 1.0) - 1.0);
      std::vector<DimParams> dims;
      dims.reserve(static_cast<std::size_t>(d));
      for (int j = 0; j < d; ++j) {
        const double center = pooled_mean[j] + offset * std::sqrt(pooled_var[j]);
        dims.push_back(
            dim_params_for(families[static_cast<std::size_t>(j)], center, pooled_var[j], 1e-6));
      }
      m.components.emplace_back(std::move(dims));
    }
  }

  m.initial = Eigen::VectorXd::Zero(n_states);
  for (int i = 0; i < n_states; ++i) {
    if (i != terminal) m.initial[i] = 1.0 / (n_states - 1);
  }

  // Transitions: sticky self-loop where allowed, the rest spread uniformly
  // over the remaining support.
  m.trans = Eigen::MatrixXd::Zero(n_states, n_states);
  for (int i = 0; i < n_states; ++i) {
    int support = 0;
    for (int j = 0; j < n_states; ++j) support += mask(i, j) ? 1 : 0;
    if (support == 0) throw InvalidInputError("mask row " + std::to_string(i) + " is empty");
    const bool self = mask(i, i);
    const int others = support - (self ? 1 : 0);
    for (int j = 0; j < n_states; ++j) {
      if (!mask(i, j)) continue;
      if (j == i) {
        m.trans(i, j) = others > 0 ? 0.8 : 1.0;
      } else {
        m.trans(i, j) = (self ? 0.2 : 1.0) / others;
      }
    }
  }
  if (!mask(terminal, terminal)) {
    throw InvalidInputError("mask must allow the terminal self-transition");
  }
  m.trans.row(terminal).setZero();
  m.trans(terminal, terminal) = 1.0;

  // Mixing weights: transient state of rank s leans toward the component
  // whose cluster appears at the matching point of the lifetime; this breaks
  // the state/phase symmetry that otherwise traps EM.
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  m.mix_weights.resize(n_states, n_components);
  const int transients = n_states - 1;
  for (int i = 0; i < n_states; ++i) {
    int favored = -1;
    if (i != terminal && n_components > 1 && !cluster_position.empty()) {
      const int rank = i < terminal ? i : i - 1;  // rank among transient states
      favored = static_cast<int>(std::lround(
          static_cast<double>(rank) * (n_components - 1) / std::max(transients - 1, 1)));
    }
    double row_sum = 0.0;
    for (int c = 0; c < n_components; ++c) {
      double w = 1.0 + 0.05 * jitter(rng);
      if (favored >= 0) w += c == favored ? 2.0 : 0.0;
      m.mix_weights(i, c) = w;
      row_sum += w;
    }
    m.mix_weights.row(i) /= row_sum;
  }
  return m;
}

}  // namespace prognos
