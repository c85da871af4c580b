// Krinsky-Robb intervals and the synthetic respondent generator.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cvm/data_io.hpp"
#include "cvm/errors.hpp"
#include "cvm/estimation.hpp"
#include "cvm/uncertainty.hpp"

using namespace cvm;
using Catch::Approx;

namespace {

const FitResult& model1() {
    static const FitResult f =
        fit(to_observations(load_aggregate(std::string(CVM_DATA_DIR) + "/reference_counts.csv")), {});
    return f;
}

double width(const ConfidenceInterval& ci) { return ci.hi - ci.lo; }

}  // namespace

TEST_CASE("Krinsky-Robb intervals for Model 1", "[uncertainty][kr]") {
    const auto r = krinsky_robb_ci(model1(), {});
    REQUIRE(r.intervals.size() == 2);
    const auto& ci95 = r.intervals[0];
    const auto& ci99 = r.intervals[1];
    CHECK(ci95.level == 0.95);
    CHECK(ci95.lo == Approx(6716.89).epsilon(0.02));
    CHECK(ci95.hi == Approx(7744.53).epsilon(0.02));
    CHECK(ci99.lo == Approx(6589.88).epsilon(0.02));
    CHECK(ci99.hi == Approx(7917.09).epsilon(0.02));
    CHECK(ci99.lo <= ci95.lo);
    CHECK(ci99.hi >= ci95.hi);
    CHECK(ci95.lo < model1().mean_wtp);
    CHECK(model1().mean_wtp < ci95.hi);
    CHECK(r.sorted_wtp.size() == 5000);
    CHECK(std::is_sorted(r.sorted_wtp.begin(), r.sorted_wtp.end()));
    CHECK(r.rejected_draws == 0);
}

TEST_CASE("Krinsky-Robb is deterministic and thread-count independent", "[uncertainty][kr][kernels]") {
    KrinskyRobbConfig cfg;
    cfg.replications = 2000;
    cfg.seed = 99;
    const auto serial = krinsky_robb_ci(model1(), cfg, Execution::Serial);
    const auto par = krinsky_robb_ci(model1(), cfg, Execution::Parallel);
    CHECK(serial.sorted_wtp == par.sorted_wtp);
    CHECK(krinsky_robb_ci(model1(), cfg).sorted_wtp == par.sorted_wtp);

#ifdef _OPENMP
    const int saved = omp_get_max_threads();
    omp_set_num_threads(4);
    const auto four = krinsky_robb_ci(model1(), cfg, Execution::Parallel);
    omp_set_num_threads(saved);
    CHECK(four.sorted_wtp == serial.sorted_wtp);
#endif

    cfg.seed = 100;
    CHECK(krinsky_robb_ci(model1(), cfg).sorted_wtp != par.sorted_wtp);
}

TEST_CASE("Krinsky-Robb edge cases", "[uncertainty][kr]") {
    FitResult tiny = model1();
    tiny.covariance = Eigen::Matrix2d::Identity() * 1e-20;
    const auto r = krinsky_robb_ci(tiny, {});
    for (const auto& ci : r.intervals) {
        CHECK(ci.lo == Approx(tiny.mean_wtp).epsilon(1e-6));
        CHECK(ci.hi == Approx(tiny.mean_wtp).epsilon(1e-6));
    }

    FitResult bad = model1();
    bad.covariance = Eigen::Matrix2d{{1.0, 2.0}, {2.0, 1.0}};
    CHECK_THROWS_AS(krinsky_robb_ci(bad, {}), SingularMatrixError);

    // b close to zero relative to its spread: negative draws are redrawn
    FitResult loose = model1();
    loose.covariance(1, 1) = 0.05 * 0.05;
    loose.covariance(0, 1) = loose.covariance(1, 0) = 0.0;
    loose.params.b = 0.06;
    const auto lr = krinsky_robb_ci(loose, {});
    CHECK(lr.rejected_draws > 0);
    CHECK(lr.sorted_wtp.front() > 0.0);

    KrinskyRobbConfig few;
    few.replications = 10;
    CHECK_THROWS_AS(krinsky_robb_ci(model1(), few), InvalidArgument);
    KrinskyRobbConfig odd;
    odd.levels = {1.0};
    CHECK_THROWS_AS(krinsky_robb_ci(model1(), odd), InvalidArgument);
}

TEST_CASE("interval width shrinks like one over root n", "[uncertainty][kr][synthetic]") {
    const SpikeParams truth{1.0, {}, 0.2};
    auto ci_width = [&](std::size_t n) {
        const auto sim = simulate_population(truth, reference_design(), n, 4242);
        const auto f = fit(to_observations(sim.table.records, {}), {});
        return width(krinsky_robb_ci(f, {}).intervals[0]);
    };
    const double ratio = ci_width(20'000) / ci_width(10'000);
    CHECK(ratio == Approx(std::sqrt(0.5)).margin(0.05));
}

TEST_CASE("generator: spike share and extreme limits", "[uncertainty][simulate]") {
    const auto half = simulate_population({0.0, {}, 0.2}, reference_design(), 10'000, 1);
    std::size_t zeros = 0;
    for (const auto& r : half.table.records) zeros += is_zero_outcome(r.outcome);
    const double share = static_cast<double>(zeros) / 10'000.0;
    CHECK(share >= 0.48);
    CHECK(share <= 0.52);

    const auto rich = simulate_population({60.0, {}, 1e-3}, reference_design(), 2000, 2);
    for (const auto& r : rich.table.records)
        CHECK((r.outcome == Outcome::U_Y || r.outcome == Outcome::L_YY));
}

TEST_CASE("generator: latent WTP lies in the recorded interval", "[uncertainty][simulate][property]") {
    const auto sim = simulate_population({0.7, {0.1}, 0.25}, reference_design(), 5000, 3);
    std::size_t arm_upper = 0;
    for (std::size_t i = 0; i < sim.wtp.size(); ++i) {
        const auto& r = sim.table.records[i];
        const double w = sim.wtp[i];
        const auto c = outcome_to_interval(r.arm, r.bids, r.outcome);
        switch (c.kind) {
            case CensorKind::PointZero: CHECK(w == 0.0); break;
            case CensorKind::Above: CHECK(w >= c.lo); break;
            case CensorKind::Between:
                CHECK(w > 0.0);
                CHECK(w >= c.lo);
                CHECK(w < c.hi);
                break;
        }
        CHECK(r.zero_reason.has_value() == is_zero_outcome(r.outcome));
        CHECK(r.covariates.size() == 1);
        CHECK_NOTHROW(r.validate());
        arm_upper += r.arm == Arm::UpperFirst;
    }
    CHECK(std::abs(static_cast<double>(arm_upper) / 5000.0 - 0.5) < 0.02);
    CHECK(sim.table.covariate_columns == std::vector<std::string>{"x1"});
}

TEST_CASE("respond follows the bid rules", "[uncertainty][simulate]") {
    const BidPair p{3000, 5000};
    CHECK(respond(Arm::UpperFirst, p, 5000) == Outcome::U_Y);
    CHECK(respond(Arm::UpperFirst, p, 4999) == Outcome::U_NY);
    CHECK(respond(Arm::UpperFirst, p, 1) == Outcome::U_NNY);
    CHECK(respond(Arm::UpperFirst, p, 0) == Outcome::U_NNN);
    CHECK(respond(Arm::LowerFirst, p, 6000) == Outcome::L_YY);
    CHECK(respond(Arm::LowerFirst, p, 3000) == Outcome::L_YN);
    CHECK(respond(Arm::LowerFirst, p, 2999) == Outcome::L_NY);
    CHECK(respond(Arm::LowerFirst, p, 0) == Outcome::L_NN);
}

TEST_CASE("generator round trip at large n", "[uncertainty][synthetic]") {
    const SpikeParams truth{1.2, {}, 0.15};
    const auto sim = simulate_population(truth, reference_design(), 50'000, 5150);
    const auto f = fit(to_observations(sim.table.records, {}), {});
    const auto v = truth.pack();
    for (Eigen::Index i = 0; i < 2; ++i)
        CHECK(std::abs(f.params.pack()[i] - v[i]) < 2 * std::sqrt(f.covariance(i, i)));
    CHECK(f.spike == Approx(spike_probability(truth, {})).margin(0.01));

    CHECK_THROWS_AS(simulate_population({1.0, {}, -0.1}, reference_design(), 10, 1), InvalidArgument);
    CHECK_THROWS_AS(simulate_population(truth, reference_design(), 0, 1), InvalidArgument);
    CHECK(simulate_population(truth, reference_design(), 100, 9).wtp ==
          simulate_population(truth, reference_design(), 100, 9).wtp);
}
