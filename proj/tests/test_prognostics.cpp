#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "prognos/errors.hpp"
#include "prognos/fleetsim.hpp"
#include "prognos/prognostics.hpp"
#include "support.hpp"

using namespace prognos;
using namespace testsupport;

namespace {

/// Single transient state with self-loop p and hazard 1-p into the terminal.
TiedMixtureHmm geometric_model(double stay) {
  TiedMixtureHmm m;
  m.terminal = 1;
  m.mask = TiedMixtureHmm::absorbing_mask(2);
  m.initial = Eigen::VectorXd::Zero(2);
  m.initial[0] = 1.0;
  m.trans.resize(2, 2);
  m.trans << stay, 1.0 - stay, 0.0, 1.0;
  m.mix_weights = Eigen::MatrixXd::Constant(2, 1, 1.0);
  m.components = {ComponentParams({DimParams::gaussian(0.0, 1.0)})};
  return m;
}

/// Two profiles sharing the same two components but mixing them oppositely,
/// with different hazards: distinguishable from data.
ProfileLibrary two_profile_library() {
  auto make = [](double stay, double w) {
    TiedMixtureHmm m;
    m.terminal = 2;
    m.mask = TiedMixtureHmm::absorbing_mask(3);
    m.initial = Eigen::VectorXd::Zero(3);
    m.initial[0] = 1.0;
    m.trans.resize(3, 3);
    m.trans << stay, 1.0 - stay - 0.01, 0.01, 0.0, stay, 1.0 - stay, 0.0, 0.0, 1.0;
    m.mix_weights.resize(3, 2);
    m.mix_weights << w, 1.0 - w, 1.0 - w, w, 0.5, 0.5;
    m.components = {ComponentParams({DimParams::gaussian(0.0, 1.0)}),
                    ComponentParams({DimParams::gaussian(2.5, 1.0)})};
    return m;
  };
  ProfileLibrary lib;
  lib.profiles = {make(0.97, 0.8), make(0.90, 0.2)};
  lib.prior = Eigen::VectorXd::Constant(2, 0.5);
  return lib;
}

}  // namespace

TEST_CASE("update_belief: masked prediction, absorption, forward agreement") {
  Rng rng(3);
  TiedMixtureHmm m = random_model(4, 2, 2, true, rng);

  SUBCASE("fully masked update is the Markov prediction") {
    Belief b{normalized(Eigen::VectorXd::Random(4).cwiseAbs()), 0};
    const Belief next = update_belief(m, b, Eigen::VectorXd::Zero(2), none_observed(2));
    const Eigen::VectorXd expect = m.trans.transpose() * b.probs;
    for (int i = 0; i < 4; ++i) CHECK(next.probs[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    CHECK(next.step == 1);
  }

  SUBCASE("terminal point mass stays absorbed under prediction") {
    Belief b{Eigen::VectorXd::Zero(4), 0};
    b.probs[m.terminal] = 1.0;
    const Belief next = update_belief(m, b, Eigen::VectorXd::Zero(2), none_observed(2));
    CHECK(next.probs[m.terminal] == doctest::Approx(1.0));
  }

  SUBCASE("folding update_belief reproduces the forward filter") {
    const ObservationSequence seq = random_sequence(m, 8, EndLabel::Censored, rng);
    const ForwardResult fwd = forward_filter(m, seq);
    Belief b = start_belief(m, seq.obs[0], seq.masks[0]);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(b.probs[i] - fwd.beliefs(0, i)) <= 1e-12);
    for (int t = 1; t < seq.length() - 1; ++t) {  // final step is end-conditioned
      b = update_belief(m, b, seq.obs[static_cast<std::size_t>(t)],
                        seq.masks[static_cast<std::size_t>(t)]);
      for (int i = 0; i < 4; ++i) CHECK(std::abs(b.probs[i] - fwd.beliefs(t, i)) <= 1e-12);
    }
  }

  SUBCASE("zero posterior mass raises") {
    TiedMixtureHmm bad = m;
    bad.components.assign(2, ComponentParams({DimParams::exponential(1.0),
                                              DimParams::exponential(1.0)}));
    Belief b{normalized(Eigen::VectorXd::Ones(4)), 0};
    CHECK_THROWS_AS(update_belief(bad, b, Eigen::VectorXd::Constant(2, -1.0), all_observed(2)),
                    ZeroLikelihoodError);
  }
}

TEST_CASE("failure time distribution: limits, geometric form, mass identity") {
  TiedMixtureHmm geo = geometric_model(0.9);

  SUBCASE("already failed belief") {
    Belief b{Eigen::VectorXd::Zero(2), 0};
    b.probs[1] = 1.0;
    const FailureTimeDistribution f = failure_time_distribution(geo, b, 10);
    CHECK(f.already_failed == 1.0);
    CHECK(f.pmf.cwiseAbs().maxCoeff() == 0.0);
    CHECK(f.residual == 0.0);
  }

  SUBCASE("geometric first passage, exact") {
    const Belief b = initial_belief(geo);
    const int horizon = 40;
    const FailureTimeDistribution f = failure_time_distribution(geo, b, horizon);
    for (int h = 1; h <= horizon; ++h) {
      CHECK(std::abs(f.pmf[h - 1] - std::pow(0.9, h - 1) * 0.1) <= 1e-12);
    }
    CHECK(std::abs(f.residual - std::pow(0.9, horizon)) <= 1e-12);
    CHECK(f.already_failed == 0.0);
  }

  SUBCASE("mass identity on random absorbing models") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
      TiedMixtureHmm m = random_model(2 + static_cast<int>(rng() % 4), 1, 1, true, rng);
      Belief b{normalized(Eigen::VectorXd::Random(m.n_states()).cwiseAbs()), 0};
      const int horizon = 1 + static_cast<int>(rng() % 30);
      const FailureTimeDistribution f = failure_time_distribution(m, b, horizon);
      CHECK(std::abs(f.already_failed + f.pmf.sum() + f.residual - 1.0) <= 1e-9);
      CHECK(f.pmf.minCoeff() >= 0.0);
    }
  }

  SUBCASE("matches a Monte Carlo rollout oracle") {
    Rng rng(23);
    TiedMixtureHmm m = random_model(4, 1, 1, true, rng);
    Belief b{normalized(Eigen::VectorXd::Random(4).cwiseAbs()), 0};
    const int horizon = 12;
    const FailureTimeDistribution f = failure_time_distribution(m, b, horizon);
    const Eigen::VectorXd mc =
        mc_first_passage(m.trans, m.terminal, b.probs, horizon, 100000, 99);
    double tv = std::abs(f.already_failed - mc[0]);
    for (int h = 1; h <= horizon; ++h) tv += std::abs(f.pmf[h - 1] - mc[h]);
    tv += std::abs(f.residual - mc[horizon + 1]);
    CHECK(0.5 * tv <= 0.01);
  }
}

TEST_CASE("survival curve: geometric form, residual identity, two routes") {
  TiedMixtureHmm geo = geometric_model(0.9);
  const Belief b = initial_belief(geo);
  const int horizon = 25;
  const Eigen::VectorXd s = survival_curve(geo, b, horizon);
  for (int h = 1; h <= horizon; ++h) {
    CHECK(std::abs(s[h - 1] - std::pow(0.9, h)) <= 1e-12);
  }
  const FailureTimeDistribution f = failure_time_distribution(geo, b, horizon);
  CHECK(std::abs(s[horizon - 1] - f.residual) <= 1e-12);

  SUBCASE("independent route via transient-block matrix powers") {
    Rng rng(29);
    TiedMixtureHmm m = random_model(5, 1, 1, true, rng);
    Belief belief{normalized(Eigen::VectorXd::Random(5).cwiseAbs()), 0};
    const Eigen::VectorXd curve = survival_curve(m, belief, 15);

    // Q^h route: survival = mass still inside the transient block
    std::vector<int> transient;
    for (int i = 0; i < 5; ++i) {
      if (i != m.terminal) transient.push_back(i);
    }
    Eigen::MatrixXd q(4, 4);
    Eigen::VectorXd v(4);
    for (int a = 0; a < 4; ++a) {
      v[a] = belief.probs[transient[static_cast<std::size_t>(a)]];
      for (int c = 0; c < 4; ++c) {
        q(a, c) = m.trans(transient[static_cast<std::size_t>(a)],
                          transient[static_cast<std::size_t>(c)]);
      }
    }
    Eigen::MatrixXd qh = Eigen::MatrixXd::Identity(4, 4);
    for (int h = 1; h <= 15; ++h) {
      qh = qh * q;
      const double expect = (v.transpose() * qh).sum();
      CHECK(std::abs(curve[h - 1] - expect) <= 1e-10);
    }
  }

  SUBCASE("monotone and bounded on random beliefs") {
    Rng rng(31);
    TiedMixtureHmm m = random_model(4, 1, 1, true, rng);
    for (int trial = 0; trial < 10; ++trial) {
      Belief belief{normalized(Eigen::VectorXd::Random(4).cwiseAbs()), 0};
      const Eigen::VectorXd curve = survival_curve(m, belief, 30);
      for (int h = 0; h < curve.size(); ++h) {
        CHECK(curve[h] >= 0.0);
        CHECK(curve[h] <= 1.0);
        if (h > 0) CHECK(curve[h] <= curve[h - 1] + 1e-12);
      }
    }
  }
}

TEST_CASE("profile posterior: identical profiles, entropy, identification") {
  SUBCASE("identical profiles keep the prior") {
    TiedMixtureHmm m = geometric_model(0.93);
    ProfileLibrary lib;
    lib.profiles = {m, m};
    lib.prior.resize(2);
    lib.prior << 0.3, 0.7;
    Rng rng(5);
    const ObservationSequence seq = sample_sequence(m, 20, rng).seq;
    const ProfilePosterior post = profile_posterior(lib, seq.prefix(seq.length() - 1));
    CHECK(post.posterior[0] == doctest::Approx(0.3).epsilon(1e-9));
    CHECK(post.posterior[1] == doctest::Approx(0.7).epsilon(1e-9));
  }

  SUBCASE("uniform two-profile posterior has exactly one bit of entropy") {
    TiedMixtureHmm m = geometric_model(0.93);
    ProfileLibrary lib;
    lib.profiles = {m, m};
    lib.prior = Eigen::VectorXd::Constant(2, 0.5);
    Rng rng(6);
    const ObservationSequence seq = sample_sequence(m, 15, rng).seq;
    const ProfilePosterior post = profile_posterior(lib, seq.prefix(1));
    CHECK(post.entropy_bits == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("profile-1 data is identified by prefix 50 in at least 90 of 100 trials") {
    const ProfileLibrary lib = two_profile_library();
    int identified = 0;
    for (int trial = 0; trial < 100; ++trial) {
      Rng rng = substream(1234, static_cast<std::uint64_t>(trial));
      const ObservationSequence seq = sample_sequence(lib.profiles[0], 200, rng).seq;
      const int len = std::min(seq.length(), 50);
      const ProfilePosterior post = profile_posterior(lib, seq.prefix(len));
      if (post.posterior[0] > 0.9) ++identified;
    }
    CHECK(identified >= 90);
  }

  SUBCASE("cohort entropy falls between prefix 10 and prefix 50") {
    const ProfileLibrary lib = two_profile_library();
    double entropy10 = 0.0, entropy50 = 0.0;
    const int cohort = 60;
    for (int a = 0; a < cohort; ++a) {
      Rng rng = substream(777, static_cast<std::uint64_t>(a));
      const int profile = a % 2;
      const ObservationSequence seq =
          sample_sequence(lib.profiles[static_cast<std::size_t>(profile)], 200, rng).seq;
      entropy10 +=
          profile_posterior(lib, seq.prefix(std::min(seq.length(), 10))).entropy_bits;
      entropy50 +=
          profile_posterior(lib, seq.prefix(std::min(seq.length(), 50))).entropy_bits;
    }
    CHECK(entropy50 / cohort < entropy10 / cohort);
  }

  SUBCASE("entropy stays within [0, log2 P]") {
    const ProfileLibrary lib = two_profile_library();
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
      const ObservationSequence seq =
          sample_sequence(lib.profiles[static_cast<std::size_t>(trial % 2)], 80, rng).seq;
      const ProfilePosterior post =
          profile_posterior(lib, seq.prefix(1 + trial % seq.length()));
      CHECK(post.entropy_bits >= 0.0);
      CHECK(post.entropy_bits <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("posterior predictive checks") {
  SUBCASE("degenerate statistic gives p-value 1") {
    TiedMixtureHmm never_fails = geometric_model(1.0);
    never_fails.mask(0, 1) = true;  // hazard zero but structurally allowed
    ProfileLibrary lib = ProfileLibrary::single(never_fails);
    const FleetDataset data = generate_fleet(lib, 30, 12, 0.0, 3);

    PpcConfig cfg;
    cfg.nreps = 100;
    cfg.seed = 5;
    const PpcResult r = posterior_predictive_check(never_fails, data.sequences,
                                                   {PpcStatistic::CensoringFraction}, cfg);
    REQUIRE(r.p_values.size() == 1);
    CHECK(r.p_values[0].second == 1.0);  // every replicate is fully censored too
  }

  SUBCASE("misfit detection: doubled hazard is flagged") {
    TiedMixtureHmm truth = degradation_model();
    TiedMixtureHmm misfit = truth;
    for (int i = 0; i < 3; ++i) {
      const double hazard = truth.trans(i, 3);
      const double doubled = std::min(2.0 * hazard, 0.9);
      misfit.trans.row(i) *= (1.0 - doubled) / (1.0 - hazard);
      misfit.trans(i, 3) = doubled;
    }

    int flagged = 0;
    const int runs = 10;
    for (int run = 0; run < runs; ++run) {
      const FleetDataset data = generate_fleet(ProfileLibrary::single(truth), 120, 120, 0.0,
                                               1000 + static_cast<std::uint64_t>(run));
      PpcConfig cfg;
      cfg.nreps = 120;
      cfg.seed = 2000 + static_cast<std::uint64_t>(run);
      const PpcResult r = posterior_predictive_check(misfit, data.sequences,
                                                     {PpcStatistic::MeanTimeToFailure}, cfg);
      if (r.p_values[0].second < 0.05) ++flagged;
    }
    CHECK(flagged >= 9);
  }

  SUBCASE("nreps below 100 is rejected") {
    TiedMixtureHmm m = degradation_model();
    const FleetDataset data = generate_fleet(ProfileLibrary::single(m), 10, 50, 0.0, 1);
    PpcConfig cfg;
    cfg.nreps = 50;
    CHECK_THROWS_AS(
        posterior_predictive_check(m, data.sequences, default_ppc_statistics(), cfg),
        InvalidInputError);
  }
}

TEST_CASE("tradeoff curve: limits and deterministic monotonicity") {
  TiedMixtureHmm m = degradation_model();
  const FleetDataset fleet = generate_fleet(ProfileLibrary::single(m), 150, 400, 0.0, 77);

  std::vector<double> thresholds;
  for (int i = 1; i <= 40; ++i) thresholds.push_back(i / 41.0);
  const auto curve = tradeoff_curve(m, fleet.sequences, thresholds, 5);
  REQUIRE(curve.size() == thresholds.size());

  for (std::size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].failure_rate >= curve[i - 1].failure_rate - 1e-12);
    CHECK(curve[i].mean_uptime >= curve[i - 1].mean_uptime - 1e-12);
  }

  // replace-immediately end: almost nothing fails, uptime is one step
  const auto tiny = tradeoff_curve(m, fleet.sequences, {1e-6}, 5);
  CHECK(tiny[0].failure_rate <= 0.02);
  CHECK(tiny[0].mean_uptime == doctest::Approx(1.0));

  // never-replace end: every asset runs to its natural failure
  const auto huge = tradeoff_curve(m, fleet.sequences, {0.999999}, 5);
  CHECK(huge[0].failure_rate >= 0.98);
  double natural = 0.0;
  for (const auto& seq : fleet.sequences) {
    natural += seq.end_label == EndLabel::Failed ? seq.length() - 1 : seq.length();
  }
  CHECK(huge[0].mean_uptime == doctest::Approx(natural / fleet.sequences.size()));

  CHECK_THROWS_AS(tradeoff_curve(m, fleet.sequences, {0.0}, 5), InvalidInputError);
  CHECK_THROWS_AS(tradeoff_curve(m, fleet.sequences, {1.0}, 5), InvalidInputError);

  SUBCASE("library variant agrees with the single-model curve for one profile") {
    const auto lib_curve =
        tradeoff_curve(ProfileLibrary::single(m), fleet.sequences, {0.2, 0.4}, 5);
    const auto single_curve = tradeoff_curve(m, fleet.sequences, {0.2, 0.4}, 5);
    for (std::size_t i = 0; i < lib_curve.size(); ++i) {
      CHECK(lib_curve[i].failure_rate == doctest::Approx(single_curve[i].failure_rate));
      CHECK(lib_curve[i].mean_uptime ==
            doctest::Approx(single_curve[i].mean_uptime).epsilon(1e-9));
    }
  }
}
