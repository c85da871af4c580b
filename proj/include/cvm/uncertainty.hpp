#pragma once

// Krinsky-Robb confidence intervals for mean WTP, and a synthetic respondent
// generator used to validate the estimator.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "cvm/data_io.hpp"
#include "cvm/estimation.hpp"
#include "cvm/model.hpp"

namespace cvm {

struct KrinskyRobbConfig {
    std::int64_t replications = 5000;
    std::vector<double> levels{0.95, 0.99};
    std::uint64_t seed = 20210209;

    void validate() const;
};

struct ConfidenceInterval {
    double level = 0.0;
    double lo = 0.0;  // KRW
    double hi = 0.0;  // KRW
};

struct KrinskyRobbResult {
    std::vector<ConfidenceInterval> intervals;
    std::int64_t rejected_draws = 0;  // b <= 0 draws that were redrawn
    std::vector<double> sorted_wtp;
};

enum class Execution : std::uint8_t { Parallel, Serial };

/// Equal-tailed percentile intervals of simulated mean WTP, evaluated at the
/// fit's covariate means. Deterministic given the seed.
KrinskyRobbResult krinsky_robb_ci(const FitResult& fit, const KrinskyRobbConfig& cfg,
                                  Execution execution = Execution::Parallel);

struct SimulatedPopulation {
    RespondentTable table;
    std::vector<double> wtp;  // drawn latent WTP per record, KRW
    SpikeParams truth;
    BidDesign design;
    std::uint64_t seed = 0;
};

/// Draws latent WTP (KRW) by inverting the spike-logistic CDF: zero with the
/// spike probability, otherwise the logistic conditional on W > 0.
double draw_wtp(const SpikeParams& params, std::span<const double> s, std::mt19937_64& rng);

/// Outcome a respondent with latent WTP `wtp` produces in the given arm.
/// Bids are accepted when WTP >= bid; the KRW-1 follow-up is accepted when
/// WTP > 0.
Outcome respond(Arm arm, const BidPair& bids, double wtp);

/// Synthetic survey: bid pairs round-robin over the design, arm by seeded
/// fair coin. Covariates (only when truth.theta is non-empty) are Likert codes
/// 1..5 named x1, x2, ...; zero outcomes get a reason drawn with the
/// reference survey's reason shares.
SimulatedPopulation simulate_population(const SpikeParams& truth, const BidDesign& design,
                                        std::size_t n, std::uint64_t seed);

}  // namespace cvm
