#include "cvm/model.hpp"

#include <array>
#include <cmath>
#include <string>

#include "cvm/errors.hpp"
#include "cvm/kernels.hpp"
#include "terms.hpp"

namespace cvm {

namespace {

constexpr std::array<std::string_view, 8> kOutcomeCodes = {"U_Y",  "U_NY", "U_NNY", "U_NNN",
                                                           "L_YY", "L_YN", "L_NY",  "L_NN"};

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + " must be finite");
}

void require_finite(std::span<const double> s) {
    for (double v : s) require_finite(v, "covariate");
}

}  // namespace

void BidPair::validate() const {
    if (!std::isfinite(lower) || !std::isfinite(upper))
        throw InvalidArgument("bid pair must be finite");
    if (!(lower > 0.0)) throw InvalidArgument("lower bid must be positive");
    if (!(upper > lower)) throw InvalidArgument("upper bid must exceed lower bid");
}

Arm arm_of(Outcome outcome) noexcept {
    switch (outcome) {
        case Outcome::U_Y:
        case Outcome::U_NY:
        case Outcome::U_NNY:
        case Outcome::U_NNN:
            return Arm::UpperFirst;
        default:
            return Arm::LowerFirst;
    }
}

bool is_zero_outcome(Outcome outcome) noexcept {
    return outcome == Outcome::U_NNN || outcome == Outcome::L_NN;
}

std::string_view to_string(Outcome outcome) noexcept {
    return kOutcomeCodes[static_cast<std::size_t>(outcome)];
}

std::string_view to_string(Arm arm) noexcept {
    return arm == Arm::UpperFirst ? "upper" : "lower";
}

Outcome parse_outcome(std::string_view code) {
    for (std::size_t i = 0; i < kOutcomeCodes.size(); ++i)
        if (kOutcomeCodes[i] == code) return static_cast<Outcome>(i);
    throw InvalidArgument("unknown outcome code '" + std::string(code) + "'");
}

Arm parse_arm(std::string_view code) {
    if (code == "upper") return Arm::UpperFirst;
    if (code == "lower") return Arm::LowerFirst;
    throw InvalidArgument("unknown arm '" + std::string(code) + "' (expected upper|lower)");
}

CensorObservation CensorObservation::point_zero(std::int64_t weight) {
    CensorObservation c{CensorKind::PointZero, 0.0, 0.0, weight};
    c.validate();
    return c;
}

CensorObservation CensorObservation::between(double lo, double hi, std::int64_t weight) {
    CensorObservation c{CensorKind::Between, lo, hi, weight};
    c.validate();
    return c;
}

CensorObservation CensorObservation::above(double lo, std::int64_t weight) {
    CensorObservation c{CensorKind::Above, lo, std::numeric_limits<double>::infinity(), weight};
    c.validate();
    return c;
}

void CensorObservation::validate() const {
    if (weight < 1) throw InvalidArgument("observation weight must be >= 1");
    switch (kind) {
        case CensorKind::PointZero:
            return;
        case CensorKind::Between:
            if (!std::isfinite(lo) || !std::isfinite(hi) || lo < 0.0 || !(hi > lo))
                throw InvalidArgument("Between interval requires 0 <= lo < hi");
            return;
        case CensorKind::Above:
            if (!std::isfinite(lo) || !(lo > 0.0))
                throw InvalidArgument("Above interval requires a positive lower bound");
            return;
    }
}

Eigen::VectorXd SpikeParams::pack() const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(size()));
    v[0] = a;
    for (std::size_t j = 0; j < theta.size(); ++j) v[static_cast<Eigen::Index>(j + 1)] = theta[j];
    v[v.size() - 1] = b;
    return v;
}

SpikeParams SpikeParams::unpack(const Eigen::VectorXd& v) {
    if (v.size() < 2) throw InvalidArgument("parameter vector needs at least (a, b)");
    SpikeParams p;
    p.a = v[0];
    p.theta.assign(v.data() + 1, v.data() + v.size() - 1);
    p.b = v[v.size() - 1];
    return p;
}

double SpikeParams::index(std::span<const double> s) const {
    if (s.size() != theta.size())
        throw InvalidArgument("covariate vector length " + std::to_string(s.size()) +
                              " does not match " + std::to_string(theta.size()) + " coefficients");
    double out = a;
    for (std::size_t j = 0; j < s.size(); ++j) out += theta[j] * s[j];
    return out;
}

void SpikeParams::validate_finite() const {
    require_finite(a, "a");
    require_finite(b, "b");
    for (double t : theta) require_finite(t, "theta");
}

double logistic(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double spike_cdf(const SpikeParams& params, std::span<const double> s, double bid) {
    params.validate_finite();
    require_finite(s);
    require_finite(bid, "bid");
    if (bid < 0.0) return 0.0;
    const double abar = params.index(s);
    if (bid == 0.0) return logistic(-abar);
    return logistic(-detail::bid_index(abar, params.b, bid));
}

double prob_yes(const SpikeParams& params, std::span<const double> s, double bid) {
    params.validate_finite();
    require_finite(s);
    require_finite(bid, "bid");
    if (!(bid > 0.0)) throw InvalidArgument("prob_yes requires a positive bid");
    return logistic(detail::bid_index(params.index(s), params.b, bid));
}

double spike_probability(const SpikeParams& params, std::span<const double> s) {
    return logistic(-params.index(s));
}

double mean_wtp(const SpikeParams& params, std::span<const double> s) {
    if (!(params.b > 0.0)) throw InvalidArgument("mean WTP requires b > 0");
    return kBidScale * detail::log1pexp(params.index(s)) / params.b;
}

CensorObservation outcome_to_interval(Arm arm, const BidPair& bids, Outcome outcome) {
    bids.validate();
    if (arm_of(outcome) != arm)
        throw InvalidArgument("outcome " + std::string(to_string(outcome)) +
                              " is not valid for the " + std::string(to_string(arm)) +
                              "-first arm");
    switch (outcome) {
        case Outcome::U_Y:
        case Outcome::L_YY:
            return CensorObservation::above(bids.upper);
        case Outcome::U_NY:
        case Outcome::L_YN:
            return CensorObservation::between(bids.lower, bids.upper);
        case Outcome::U_NNY:
        case Outcome::L_NY:
            return CensorObservation::between(0.0, bids.lower);
        case Outcome::U_NNN:
        case Outcome::L_NN:
            return CensorObservation::point_zero();
    }
    throw InvalidArgument("unreachable outcome");
}

double interval_probability(const SpikeParams& params, std::span<const double> s,
                            const CensorObservation& obs) {
    const double abar = params.index(s);
    const double lo = obs.kind == CensorKind::PointZero ? 0.0 : obs.lo;
    const double z_lo = detail::bid_index(abar, params.b, lo);
    const double z_hi = obs.kind == CensorKind::Between ? detail::bid_index(abar, params.b, obs.hi)
                                                        : 0.0;
    return detail::interval_probability_from_index(obs.kind, z_lo, z_hi, abar);
}

double log_likelihood(const SpikeParams& params, std::span<const Observation> data,
                      LikelihoodDiagnostics* diagnostics) {
    auto r = kernels::likelihood_parallel(params, data, kernels::Order::Value);
    if (diagnostics) *diagnostics = r.diagnostics;
    return r.value;
}

Eigen::VectorXd log_likelihood_gradient(const SpikeParams& params,
                                        std::span<const Observation> data) {
    return kernels::likelihood_parallel(params, data, kernels::Order::Gradient).gradient;
}

LikelihoodDerivatives log_likelihood_derivatives(const SpikeParams& params,
                                                 std::span<const Observation> data) {
    return kernels::likelihood_parallel(params, data, kernels::Order::Hessian);
}

}  // namespace cvm
