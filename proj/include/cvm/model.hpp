#pragma once

// Spike-logistic WTP model for one-and-one-half-bounded dichotomous choice
// data: CDF, answer probabilities, censoring intervals, log-likelihood and
// closed-form derived quantities.
//
// Money is carried in KRW at every public boundary. Internally bids enter the
// logistic index in thousands of KRW (kBidScale), which is the scale the bid
// coefficient b is expressed on.

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace cvm {

inline constexpr double kBidScale = 1000.0;

struct BidPair {
    double lower = 0.0;  // KRW
    double upper = 0.0;  // KRW

    /// Throws InvalidArgument unless 0 < lower < upper.
    void validate() const;

    friend bool operator==(const BidPair&, const BidPair&) = default;
    friend auto operator<=>(const BidPair&, const BidPair&) = default;
};

enum class Arm : std::uint8_t { UpperFirst, LowerFirst };

enum class Outcome : std::uint8_t { U_Y, U_NY, U_NNY, U_NNN, L_YY, L_YN, L_NY, L_NN };

inline constexpr Outcome kAllOutcomes[] = {Outcome::U_Y,  Outcome::U_NY, Outcome::U_NNY,
                                           Outcome::U_NNN, Outcome::L_YY, Outcome::L_YN,
                                           Outcome::L_NY, Outcome::L_NN};

Arm arm_of(Outcome outcome) noexcept;
bool is_zero_outcome(Outcome outcome) noexcept;

std::string_view to_string(Outcome outcome) noexcept;
std::string_view to_string(Arm arm) noexcept;
/// Throws InvalidArgument on an unknown code.
Outcome parse_outcome(std::string_view code);
Arm parse_arm(std::string_view code);

enum class CensorKind : std::uint8_t { PointZero, Between, Above };

/// Interval in which a respondent's latent WTP is known to lie.
///   PointZero      W = 0
///   Between(l, h)  l < W < h; l == 0 encodes the open interval (0, A^L)
///   Above(l)       l < W
struct CensorObservation {
    CensorKind kind = CensorKind::PointZero;
    double lo = 0.0;  // KRW
    double hi = 0.0;  // KRW; +inf for Above
    std::int64_t weight = 1;

    static CensorObservation point_zero(std::int64_t weight = 1);
    static CensorObservation between(double lo, double hi, std::int64_t weight = 1);
    static CensorObservation above(double lo, std::int64_t weight = 1);

    void validate() const;

    /// Same interval, ignoring weight.
    bool same_interval(const CensorObservation& other) const noexcept {
        return kind == other.kind && lo == other.lo && hi == other.hi;
    }
};

/// One likelihood row: a censoring interval plus the respondent's covariates.
struct Observation {
    CensorObservation censor;
    std::vector<double> covariates;
};

struct SpikeParams {
    double a = 0.0;
    std::vector<double> theta;
    double b = 0.0;

    std::size_t size() const noexcept { return theta.size() + 2; }

    /// Packed as (a, theta..., b).
    Eigen::VectorXd pack() const;
    static SpikeParams unpack(const Eigen::VectorXd& v);

    /// a + theta . s
    double index(std::span<const double> s) const;

    void validate_finite() const;
};

/// Numerically stable logistic function 1 / (1 + exp(-x)).
double logistic(double x) noexcept;

/// G_W(A): probability that WTP is at most A (KRW).
double spike_cdf(const SpikeParams& params, std::span<const double> s, double bid);

/// Probability of a "yes" at bid A > 0.
double prob_yes(const SpikeParams& params, std::span<const double> s, double bid);

/// Mass of the point at zero, [1 + exp(a + theta.s)]^-1.
double spike_probability(const SpikeParams& params, std::span<const double> s);

/// Mean WTP in KRW, (1/b) ln(1 + exp(a + theta.s)) rescaled from thousands.
double mean_wtp(const SpikeParams& params, std::span<const double> s);

CensorObservation outcome_to_interval(Arm arm, const BidPair& bids, Outcome outcome);

/// Probability mass of the censoring interval under the model. Not floored.
double interval_probability(const SpikeParams& params, std::span<const double> s,
                            const CensorObservation& obs);

struct LikelihoodDiagnostics {
    std::size_t floored_terms = 0;
};

double log_likelihood(const SpikeParams& params, std::span<const Observation> data,
                      LikelihoodDiagnostics* diagnostics = nullptr);

Eigen::VectorXd log_likelihood_gradient(const SpikeParams& params,
                                        std::span<const Observation> data);

struct LikelihoodDerivatives {
    double value = 0.0;
    Eigen::VectorXd gradient;
    Eigen::MatrixXd hessian;
    LikelihoodDiagnostics diagnostics;
};

/// Value, analytic gradient and analytic Hessian in one pass.
LikelihoodDerivatives log_likelihood_derivatives(const SpikeParams& params,
                                                 std::span<const Observation> data);

/// Smallest probability passed to ln() before a term is reported as floored.
inline constexpr double kProbabilityFloor = 1e-300;

}  // namespace cvm
