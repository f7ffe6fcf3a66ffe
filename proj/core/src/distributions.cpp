#include "prognos/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "prognos/errors.hpp"

namespace prognos {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5*log(2*pi)

bool is_integer_value(double x) { return std::floor(x) == x; }

void check_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw InvalidInputError(std::string(what) + " must be positive and finite");
  }
}

}  // namespace

Mask all_observed(int dim) { return Mask(static_cast<std::size_t>(dim), 1); }
Mask none_observed(int dim) { return Mask(static_cast<std::size_t>(dim), 0); }

std::string_view family_name(Family f) {
  switch (f) {
    case Family::Gaussian: return "gaussian";
    case Family::Gamma: return "gamma";
    case Family::Poisson: return "poisson";
    case Family::Exponential: return "exponential";
  }
  return "unknown";
}

std::optional<Family> family_from_name(std::string_view name) {
  if (name == "gaussian" || name == "normal") return Family::Gaussian;
  if (name == "gamma") return Family::Gamma;
  if (name == "poisson") return Family::Poisson;
  if (name == "exponential") return Family::Exponential;
  return std::nullopt;
}

double DimParams::mean() const {
  switch (family) {
    case Family::Gaussian: return p1;
    case Family::Gamma: return p1 / p2;
    case Family::Poisson: return p1;
    case Family::Exponential: return 1.0 / p1;
  }
  return 0.0;
}

ComponentParams::ComponentParams(std::vector<DimParams> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw InvalidInputError("component must have at least one dimension");
  for (const DimParams& d : dims_) {
    switch (d.family) {
      case Family::Gaussian:
        if (!std::isfinite(d.p1)) throw InvalidInputError("Gaussian mean must be finite");
        check_positive(d.p2, "Gaussian variance");
        break;
      case Family::Gamma:
        check_positive(d.p1, "Gamma shape");
        check_positive(d.p2, "Gamma rate");
        break;
      case Family::Poisson:
        check_positive(d.p1, "Poisson rate");
        break;
      case Family::Exponential:
        check_positive(d.p1, "Exponential rate");
        break;
    }
  }
}

double ComponentParams::log_pdf(const Eigen::VectorXd& x, const Mask& mask) const {
  if (x.size() != dim() || static_cast<int>(mask.size()) != dim()) {
    throw InvalidInputError("log_pdf: observation dimension mismatch");
  }
  double total = 0.0;
  for (int d = 0; d < dim(); ++d) {
    if (!mask[static_cast<std::size_t>(d)]) continue;
    const double v = x[d];
    if (!std::isfinite(v)) {
      throw InvalidInputError("log_pdf: non-finite value in observed dimension " +
                              std::to_string(d));
    }
    const DimParams& p = dims_[static_cast<std::size_t>(d)];
    switch (p.family) {
      case Family::Gaussian: {
        const double diff = v - p.p1;
        total += -kHalfLog2Pi - 0.5 * std::log(p.p2) - 0.5 * diff * diff / p.p2;
        break;
      }
      case Family::Gamma: {
        if (v <= 0.0) return kNegInf;
        total += p.p1 * std::log(p.p2) - std::lgamma(p.p1) + (p.p1 - 1.0) * std::log(v) -
                 p.p2 * v;
        break;
      }
      case Family::Poisson: {
        if (!is_integer_value(v)) {
          throw InvalidInputError("log_pdf: non-integer value " + std::to_string(v) +
                                  " in Poisson dimension " + std::to_string(d));
        }
        if (v < 0.0) return kNegInf;
        total += v * std::log(p.p1) - p.p1 - std::lgamma(v + 1.0);
        break;
      }
      case Family::Exponential: {
        if (v < 0.0) return kNegInf;
        total += std::log(p.p1) - p.p1 * v;
        break;
      }
    }
  }
  return total;
}

Eigen::VectorXd ComponentParams::sample(Rng& rng) const {
  Eigen::VectorXd out(dim());
  for (int d = 0; d < dim(); ++d) {
    const DimParams& p = dims_[static_cast<std::size_t>(d)];
    switch (p.family) {
      case Family::Gaussian: {
        std::normal_distribution<double> dist(p.p1, std::sqrt(p.p2));
        out[d] = dist(rng);
        break;
      }
      case Family::Gamma: {
        std::gamma_distribution<double> dist(p.p1, 1.0 / p.p2);
        out[d] = dist(rng);
        break;
      }
      case Family::Poisson: {
        std::poisson_distribution<long> dist(p.p1);
        out[d] = static_cast<double>(dist(rng));
        break;
      }
      case Family::Exponential: {
        std::exponential_distribution<double> dist(p.p1);
        out[d] = dist(rng);
        break;
      }
    }
  }
  return out;
}

SuffStats::SuffStats(int dim)
    : weight_(static_cast<std::size_t>(dim), 0.0),
      sum_(static_cast<std::size_t>(dim), 0.0),
      sum_sq_(static_cast<std::size_t>(dim), 0.0),
      sum_log_(static_cast<std::size_t>(dim), 0.0) {
  if (dim <= 0) throw InvalidInputError("SuffStats dimension must be positive");
}

void SuffStats::accumulate(const Eigen::VectorXd& x, const Mask& mask, double w) {
  if (w < 0.0 || !std::isfinite(w)) {
    throw InvalidInputError("accumulate: weight must be nonnegative and finite");
  }
  if (x.size() != dim() || static_cast<int>(mask.size()) != dim()) {
    throw InvalidInputError("accumulate: dimension mismatch");
  }
  if (w == 0.0) return;
  for (int d = 0; d < dim(); ++d) {
    if (!mask[static_cast<std::size_t>(d)]) continue;
    const double v = x[d];
    const auto i = static_cast<std::size_t>(d);
    weight_[i] += w;
    sum_[i] += w * v;
    sum_sq_[i] += w * v * v;
    if (v > 0.0) sum_log_[i] += w * std::log(v);
  }
}

void SuffStats::merge(const SuffStats& other) {
  if (other.dim() != dim()) throw InvalidInputError("merge: dimension mismatch");
  for (std::size_t i = 0; i < weight_.size(); ++i) {
    weight_[i] += other.weight_[i];
    sum_[i] += other.sum_[i];
    sum_sq_[i] += other.sum_sq_[i];
    sum_log_[i] += other.sum_log_[i];
  }
}

double digamma(double x) {
  // Recurrence up to x >= 10, then the asymptotic series through x^-8.
  double value = 0.0;
  while (x < 10.0) {
    value -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  value += std::log(x) - 0.5 * inv -
           inv2 * (1.0 / 12.0 -
                   inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
  return value;
}

double trigamma(double x) {
  double value = 0.0;
  while (x < 10.0) {
    value += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  value += inv * (1.0 + 0.5 * inv +
                  inv2 * (1.0 / 6.0 -
                          inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0))));
  return value;
}

double gamma_shape_mle(double s, double moment_shape) {
  constexpr double kMinShape = 1e-8;
  constexpr double kMaxShape = 1e8;
  constexpr int kMaxIters = 50;
  constexpr double kTol = 1e-10;

  if (!(s > 0.0)) return kMaxShape;  // degenerate: all mass on one value

  // Minka's closed-form start; fall back to the method-of-moments estimate
  // when it misbehaves.
  double k = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
  if (!(k > 0.0) || !std::isfinite(k)) k = moment_shape > 0.0 ? moment_shape : 1.0;
  k = std::clamp(k, kMinShape, kMaxShape);

  for (int it = 0; it < kMaxIters; ++it) {
    const double f = std::log(k) - digamma(k) - s;
    const double fp = 1.0 / k - trigamma(k);
    double next = k - f / fp;
    if (!(next > 0.0) || !std::isfinite(next)) next = 0.5 * k;  // safeguard: halve
    next = std::clamp(next, kMinShape, kMaxShape);
    if (std::abs(next - k) <= kTol * std::max(1.0, k)) return next;
    k = next;
  }
  return k;
}

ComponentParams mle_update(const SuffStats& stats, const std::vector<Family>& families,
                           double variance_floor) {
  if (static_cast<int>(families.size()) != stats.dim()) {
    throw InvalidInputError("mle_update: family list does not match stats dimension");
  }
  std::vector<DimParams> dims;
  dims.reserve(families.size());
  for (int d = 0; d < stats.dim(); ++d) {
    const double w = stats.weight(d);
    if (w < kStarvedWeight) {
      throw StarvedComponentError(
          "mle_update: dimension " + std::to_string(d) + " has total weight " +
              std::to_string(w),
          d);
    }
    const double mean = stats.sum(d) / w;
    switch (families[static_cast<std::size_t>(d)]) {
      case Family::Gaussian: {
        const double var = std::max(stats.sum_sq(d) / w - mean * mean, variance_floor);
        dims.push_back(DimParams::gaussian(mean, var));
        break;
      }
      case Family::Poisson: {
        dims.push_back(DimParams::poisson(std::max(mean, 1e-12)));
        break;
      }
      case Family::Exponential: {
        dims.push_back(DimParams::exponential(1.0 / std::max(mean, 1e-12)));
        break;
      }
      case Family::Gamma: {
        const double mean_log = stats.sum_log(d) / w;
        const double s = std::log(std::max(mean, 1e-300)) - mean_log;
        const double var = std::max(stats.sum_sq(d) / w - mean * mean, 1e-12);
        const double shape = gamma_shape_mle(s, mean * mean / var);
        dims.push_back(DimParams::gamma(shape, shape / std::max(mean, 1e-300)));
        break;
      }
    }
  }
  return ComponentParams(std::move(dims));
}

}  // namespace prognos
