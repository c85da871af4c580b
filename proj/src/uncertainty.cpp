#include "cvm/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cvm/errors.hpp"
#include "cvm/kernels.hpp"

namespace cvm {

namespace {

// Zero-WTP reason counts in the reference survey, in ZeroReason order.
constexpr double kReasonShares[] = {43, 90, 38, 43, 28, 7};

}  // namespace

void KrinskyRobbConfig::validate() const {
    if (replications < 100) throw InvalidArgument("Krinsky-Robb needs at least 100 replications");
    if (levels.empty()) throw InvalidArgument("no confidence levels requested");
    for (double l : levels)
        if (!(l > 0.0 && l < 1.0)) throw InvalidArgument("confidence levels must lie in (0, 1)");
}

KrinskyRobbResult krinsky_robb_ci(const FitResult& fit, const KrinskyRobbConfig& cfg,
                                  Execution execution) {
    cfg.validate();
    const Eigen::VectorXd mean = fit.params.pack();
    if (fit.covariance.rows() != mean.size() || fit.covariance.cols() != mean.size())
        throw InvalidArgument("covariance does not match the coefficient vector");
    Eigen::LLT<Eigen::MatrixXd> llt(fit.covariance);
    if (llt.info() != Eigen::Success)
        throw SingularMatrixError("Cholesky factorisation of the coefficient covariance failed");
    const Eigen::MatrixXd lower = llt.matrixL();

    auto draws = execution == Execution::Parallel
                     ? kernels::krinsky_robb_parallel(mean, lower, fit.covariate_means,
                                                      cfg.replications, cfg.seed)
                     : kernels::krinsky_robb_serial(mean, lower, fit.covariate_means,
                                                    cfg.replications, cfg.seed);
    KrinskyRobbResult out;
    out.rejected_draws = draws.rejected;
    out.sorted_wtp = std::move(draws.wtp);
    std::sort(out.sorted_wtp.begin(), out.sorted_wtp.end());
    for (double level : cfg.levels) {
        const double tail = 0.5 * (1.0 - level);
        out.intervals.push_back({level, sorted_quantile(out.sorted_wtp, tail),
                                 sorted_quantile(out.sorted_wtp, 1.0 - tail)});
    }
    return out;
}

double draw_wtp(const SpikeParams& params, std::span<const double> s, std::mt19937_64& rng) {
    if (!(params.b > 0.0)) throw InvalidArgument("simulation requires b > 0");
    const double abar = params.index(s);
    const double spike = logistic(-abar);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(rng);
    if (u <= spike) return 0.0;
    // G(w) = 1 / (1 + exp(abar - b w))  =>  w = (abar - ln(1/u - 1)) / b
    const double w = (abar - std::log((1.0 - u) / u)) / params.b;
    return std::max(w, 0.0) * kBidScale;
}

Outcome respond(Arm arm, const BidPair& bids, double wtp) {
    const bool yes_upper = wtp >= bids.upper;
    const bool yes_lower = wtp >= bids.lower;
    const bool positive = wtp > 0.0;
    if (arm == Arm::UpperFirst) {
        if (yes_upper) return Outcome::U_Y;
        if (yes_lower) return Outcome::U_NY;
        return positive ? Outcome::U_NNY : Outcome::U_NNN;
    }
    if (yes_lower) return yes_upper ? Outcome::L_YY : Outcome::L_YN;
    return positive ? Outcome::L_NY : Outcome::L_NN;
}

SimulatedPopulation simulate_population(const SpikeParams& truth, const BidDesign& design,
                                        std::size_t n, std::uint64_t seed) {
    if (n < 1) throw InvalidArgument("population size must be positive");
    design.validate();
    truth.validate_finite();
    if (!(truth.b > 0.0)) throw InvalidArgument("simulation requires b > 0");

    SimulatedPopulation pop;
    pop.truth = truth;
    pop.design = design;
    pop.seed = seed;
    for (std::size_t j = 0; j < truth.theta.size(); ++j)
        pop.table.covariate_columns.push_back("x" + std::to_string(j + 1));

    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    std::uniform_int_distribution<int> likert(1, 5);
    std::discrete_distribution<int> reason(std::begin(kReasonShares), std::end(kReasonShares));
    std::vector<double> s(truth.theta.size());
    pop.table.records.reserve(n);
    pop.wtp.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        RespondentRecord r;
        r.id = "sim-" + std::to_string(i + 1);
        r.bids = design.pairs[i % design.pairs.size()];
        r.arm = coin(rng) ? Arm::UpperFirst : Arm::LowerFirst;
        for (std::size_t j = 0; j < s.size(); ++j) {
            s[j] = likert(rng);
            r.covariates[pop.table.covariate_columns[j]] = s[j];
        }
        const double w = draw_wtp(truth, s, rng);
        r.outcome = respond(r.arm, r.bids, w);
        if (is_zero_outcome(r.outcome)) r.zero_reason = static_cast<ZeroReason>(reason(rng));
        pop.table.records.push_back(std::move(r));
        pop.wtp.push_back(w);
    }
    return pop;
}

}  // namespace cvm
