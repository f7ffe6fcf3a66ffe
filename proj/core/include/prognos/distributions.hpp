#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prognos/rng.hpp"

namespace prognos {

/// Which channels of an observation vector were actually recorded.
/// mask[d] != 0 means dimension d is observed.
using Mask = std::vector<std::uint8_t>;

Mask all_observed(int dim);
Mask none_observed(int dim);

enum class Family { Gaussian, Gamma, Poisson, Exponential };

std::string_view family_name(Family f);
std::optional<Family> family_from_name(std::string_view name);

/// Parameters of one univariate exponential-family density.
struct DimParams {
  Family family = Family::Gaussian;
  double p1 = 0.0;  // Gaussian mean | Gamma shape | Poisson rate | Exponential rate
  double p2 = 1.0;  // Gaussian variance | Gamma rate | unused otherwise

  static DimParams gaussian(double mean, double variance) {
    return {Family::Gaussian, mean, variance};
  }
  static DimParams gamma(double shape, double rate) { return {Family::Gamma, shape, rate}; }
  static DimParams poisson(double rate) { return {Family::Poisson, rate, 0.0}; }
  static DimParams exponential(double rate) { return {Family::Exponential, rate, 0.0}; }

  /// Expected value of the density (used for seeding and diagnostics).
  double mean() const;
};

/// One shared mixture component: a product of independent univariate
/// densities, one per sensor dimension. Immutable after construction;
/// the constructor rejects non-positive variances, shapes and rates.
class ComponentParams {
 public:
  ComponentParams() = default;
  explicit ComponentParams(std::vector<DimParams> dims);

  int dim() const { return static_cast<int>(dims_.size()); }
  const DimParams& dim_params(int d) const { return dims_[static_cast<std::size_t>(d)]; }
  const std::vector<DimParams>& dims() const { return dims_; }

  /// Sum of per-dimension log densities over observed dimensions.
  /// A fully masked observation contributes log 1 = 0. Values outside a
  /// family's support yield -inf; non-finite observed values and
  /// non-integer Poisson values throw InvalidInputError.
  double log_pdf(const Eigen::VectorXd& x, const Mask& mask) const;

  /// Independent per-dimension draw. Deterministic given the generator state.
  Eigen::VectorXd sample(Rng& rng) const;

 private:
  std::vector<DimParams> dims_;
};

/// Weighted per-dimension accumulators feeding the closed-form M-step.
/// Additive: merging two stats equals accumulating the union of their data.
class SuffStats {
 public:
  SuffStats() = default;
  explicit SuffStats(int dim);

  int dim() const { return static_cast<int>(weight_.size()); }

  /// Adds w-weighted contributions of the observed dimensions of x.
  /// Negative weight throws InvalidInputError.
  void accumulate(const Eigen::VectorXd& x, const Mask& mask, double w);
  void merge(const SuffStats& other);

  double weight(int d) const { return weight_[static_cast<std::size_t>(d)]; }
  double sum(int d) const { return sum_[static_cast<std::size_t>(d)]; }
  double sum_sq(int d) const { return sum_sq_[static_cast<std::size_t>(d)]; }
  /// Weighted sum of log(x); accumulated only for x > 0 (Gamma M-step input).
  double sum_log(int d) const { return sum_log_[static_cast<std::size_t>(d)]; }

 private:
  std::vector<double> weight_, sum_, sum_sq_, sum_log_;
};

inline constexpr double kDefaultVarianceFloor = 1e-6;
/// Below this responsibility mass a component update is considered starved.
inline constexpr double kStarvedWeight = 1e-8;

/// Closed-form weighted maximum-likelihood update per family.
/// Gaussian: weighted mean and floored second central moment. Poisson and
/// Exponential: rate from the weighted mean. Gamma: shape from a safeguarded
/// Newton solve of the weighted MLE equation, rate = shape / weighted mean.
/// Throws StarvedComponentError when any dimension's weight is below
/// kStarvedWeight.
ComponentParams mle_update(const SuffStats& stats, const std::vector<Family>& families,
                           double variance_floor = kDefaultVarianceFloor);

/// Solves log(k) - digamma(k) = s for the Gamma shape k. s must be > 0;
/// values <= 0 (numerically degenerate data) clamp to the solver's upper
/// bound. moment_shape, when positive, is used as a fallback start.
double gamma_shape_mle(double s, double moment_shape = -1.0);

double digamma(double x);
double trigamma(double x);

}  // namespace prognos
