// Spike CDF, answer probabilities, censoring intervals and derived quantities.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "cvm/errors.hpp"
#include "cvm/model.hpp"
#include "oracle.hpp"

using namespace cvm;
using Catch::Approx;

namespace {

const std::vector<double> kNone;

SpikeParams model1() { return {0.991, {}, 0.181}; }

}  // namespace

TEST_CASE("spike_cdf matches the closed form", "[model][spike_cdf]") {
    CHECK(spike_cdf(model1(), kNone, 0.0) == Approx(0.2707).margin(5e-5));
    CHECK(spike_cdf({0.0, {}, 1.0}, kNone, 0.0) == 0.5);
    CHECK(spike_cdf(model1(), kNone, -5.0) == 0.0);
    // frozen from oracle::G
    CHECK(spike_cdf(model1(), kNone, 7219.4) == Approx(0.5782787333925437).epsilon(1e-12));
    CHECK(spike_cdf(model1(), kNone, 7219.4) == Approx(oracle::G(0.991, 0.181, 7219.4)).epsilon(1e-14));
}

TEST_CASE("spike_cdf rejects non-finite input", "[model][spike_cdf]") {
    CHECK_THROWS_AS(spike_cdf(model1(), kNone, NAN), InvalidArgument);
    CHECK_THROWS_AS(spike_cdf({INFINITY, {}, 0.1}, kNone, 10.0), InvalidArgument);
    const std::vector<double> bad{NAN};
    CHECK_THROWS_AS(spike_cdf({0.0, {1.0}, 0.1}, bad, 10.0), InvalidArgument);
}

TEST_CASE("spike_cdf is stable for extreme indices", "[model][spike_cdf]") {
    CHECK(spike_cdf({700.0, {}, 0.1}, kNone, 0.0) == Approx(0.0).margin(1e-300));
    CHECK(spike_cdf({-700.0, {}, 0.1}, kNone, 0.0) == Approx(1.0));
    CHECK(std::isfinite(spike_cdf({0.0, {}, 10.0}, kNone, 70'000.0)));
}

TEST_CASE("prob_yes", "[model][prob_yes]") {
    CHECK(prob_yes(model1(), kNone, 1000.0) == Approx(0.6921095043017882).epsilon(1e-12));
    CHECK(prob_yes({0.0, {}, 1.0}, kNone, 1e-9) == Approx(0.5).margin(1e-9));
    CHECK(prob_yes({1.0, {}, 5.0}, kNone, 20'000.0) < 1e-40);
    CHECK_THROWS_AS(prob_yes(model1(), kNone, 0.0), InvalidArgument);
    for (double bid : {500.0, 3000.0, 12'345.0})
        CHECK(prob_yes(model1(), kNone, bid) == Approx(1.0 - spike_cdf(model1(), kNone, bid)).epsilon(1e-12));
}

TEST_CASE("outcome_to_interval maps the eight outcomes", "[model][intervals]") {
    const BidPair bids{1000, 2000};
    auto pz = outcome_to_interval(Arm::UpperFirst, bids, Outcome::U_NNN);
    CHECK(pz.kind == CensorKind::PointZero);

    auto mid = outcome_to_interval(Arm::LowerFirst, bids, Outcome::L_YN);
    CHECK(mid.kind == CensorKind::Between);
    CHECK(mid.lo == 1000);
    CHECK(mid.hi == 2000);

    auto top = outcome_to_interval(Arm::UpperFirst, {17000, 20000}, Outcome::U_Y);
    CHECK(top.kind == CensorKind::Above);
    CHECK(top.lo == 20000);

    auto low = outcome_to_interval(Arm::UpperFirst, bids, Outcome::U_NNY);
    CHECK(low.kind == CensorKind::Between);
    CHECK(low.lo == 0.0);
    CHECK(low.hi == 1000);

    CHECK_THROWS_AS(outcome_to_interval(Arm::LowerFirst, bids, Outcome::U_Y), InvalidArgument);
    CHECK_THROWS_AS(outcome_to_interval(Arm::UpperFirst, bids, Outcome::L_NN), InvalidArgument);
    CHECK_THROWS_AS(outcome_to_interval(Arm::UpperFirst, {2000, 1000}, Outcome::U_Y), InvalidArgument);
}

TEST_CASE("equivalent outcomes across arms share an interval", "[model][intervals][property]") {
    const std::pair<Outcome, Outcome> pairs[] = {{Outcome::U_Y, Outcome::L_YY},
                                                 {Outcome::U_NY, Outcome::L_YN},
                                                 {Outcome::U_NNY, Outcome::L_NY},
                                                 {Outcome::U_NNN, Outcome::L_NN}};
    const BidPair bids{3000, 4000};
    for (auto [u, l] : pairs) {
        auto cu = outcome_to_interval(Arm::UpperFirst, bids, u);
        auto cl = outcome_to_interval(Arm::LowerFirst, bids, l);
        CHECK(cu.same_interval(cl));
    }
}

TEST_CASE("spike_probability and mean_wtp", "[model][derived]") {
    CHECK(spike_probability(model1(), kNone) == Approx(0.2707146041821026).epsilon(1e-12));
    CHECK(spike_probability({0.0, {}, 1.0}, kNone) == 0.5);
    CHECK(spike_probability({1.005, {}, 0.183}, kNone) == Approx(0.2679594981583682).epsilon(1e-12));

    CHECK(mean_wtp(model1(), kNone) == Approx(7219.28250896877).epsilon(1e-12));
    CHECK(mean_wtp({0.0, {}, 1.0}, kNone) == Approx(1000.0 * std::log(2.0)).epsilon(1e-14));
    CHECK(mean_wtp({1.078, {}, 0.197}, kNone) == Approx(6958.756916261367).epsilon(1e-12));
    CHECK_THROWS_AS(mean_wtp({1.0, {}, 0.0}, kNone), InvalidArgument);
    CHECK_THROWS_AS(mean_wtp({1.0, {}, -0.1}, kNone), InvalidArgument);
}

TEST_CASE("covariates shift the logistic index", "[model][derived]") {
    const SpikeParams p{0.2, {0.5, -0.25}, 0.3};
    const std::vector<double> s{1.0, 2.0};
    // abar = 0.2 + 0.5 - 0.5 = 0.2
    CHECK(spike_probability(p, s) == spike_probability({0.2, {}, 0.3}, kNone));
    CHECK(spike_cdf(p, s, 4000) == Approx(oracle::G(0.2, 0.3, 4000)).epsilon(1e-14));
    CHECK_THROWS_AS(spike_probability(p, kNone), InvalidArgument);
}

TEST_CASE("model invariants over random parameters", "[model][property]") {
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> ua(-4.0, 4.0), ub(0.01, 2.0), ubid(1.0, 30'000.0);
    for (int trial = 0; trial < 500; ++trial) {
        const SpikeParams p{ua(rng), {}, ub(rng)};

        // spike identity (exact)
        CHECK(spike_probability(p, kNone) == spike_cdf(p, kNone, 0.0));

        // monotone in A over a sorted grid
        std::vector<double> grid(25);
        for (auto& g : grid) g = ubid(rng);
        std::sort(grid.begin(), grid.end());
        double prev = spike_cdf(p, kNone, 0.0);
        for (double A : grid) {
            const double g = spike_cdf(p, kNone, A);
            CHECK(g >= prev);
            prev = g;
        }

        // total probability of the four interval terms
        double lo = ubid(rng), hi = ubid(rng);
        if (lo > hi) std::swap(lo, hi);
        if (lo == hi) hi += 1.0;
        const double total = interval_probability(p, kNone, CensorObservation::above(hi)) +
                             interval_probability(p, kNone, CensorObservation::between(lo, hi)) +
                             interval_probability(p, kNone, CensorObservation::between(0.0, lo)) +
                             interval_probability(p, kNone, CensorObservation::point_zero());
        CHECK(std::abs(total - 1.0) < 1e-12);

        // exp(b * WTP_scaled) == 1 / spike
        const double spike = spike_probability(p, kNone);
        const double wtp_scaled = mean_wtp(p, kNone) / kBidScale;
        CHECK(std::exp(p.b * wtp_scaled) == Approx(1.0 / spike).epsilon(1e-10));
    }
}

TEST_CASE("censor observation invariants", "[model][intervals]") {
    CHECK_THROWS_AS(CensorObservation::between(2000, 1000), InvalidArgument);
    CHECK_THROWS_AS(CensorObservation::between(-1, 1000), InvalidArgument);
    CHECK_THROWS_AS(CensorObservation::above(0.0), InvalidArgument);
    CHECK_THROWS_AS(CensorObservation::point_zero(0), InvalidArgument);
    CHECK_NOTHROW(CensorObservation::between(0.0, 1000));
}

TEST_CASE("codes round-trip", "[model]") {
    for (auto o : kAllOutcomes) CHECK(parse_outcome(to_string(o)) == o);
    CHECK(parse_arm("upper") == Arm::UpperFirst);
    CHECK(parse_arm("lower") == Arm::LowerFirst);
    CHECK_THROWS_AS(parse_outcome("U_YY"), InvalidArgument);
    CHECK_THROWS_AS(parse_arm("up"), InvalidArgument);
}
