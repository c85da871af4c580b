#pragma once

// Per-observation likelihood term. Shared by the serial and parallel kernels.

#include <cmath>
#include <span>

#include <Eigen/Dense>

#include "cvm/model.hpp"

namespace cvm::detail {

/// Logistic index z(A) = a + theta.s - b A, A in thousands of KRW.
inline double bid_index(double abar, double b, double bid_krw) {
    return abar - b * (bid_krw / kBidScale);
}

inline double log1pexp(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Regressor vector dz/dparams = (1, s..., -A).
inline void fill_regressor(Eigen::Ref<Eigen::VectorXd> x, std::span<const double> s,
                           double bid_krw) {
    x[0] = 1.0;
    for (std::size_t j = 0; j < s.size(); ++j) x[static_cast<Eigen::Index>(j + 1)] = s[j];
    x[x.size() - 1] = -(bid_krw / kBidScale);
}

/// Interval probability written in terms of logistic indices, choosing the
/// complement form that avoids cancellation.
inline double interval_probability_from_index(CensorKind kind, double z_lo, double z_hi,
                                              double abar) {
    switch (kind) {
        case CensorKind::PointZero:
            return logistic(-abar);
        case CensorKind::Above:
            return logistic(z_lo);
        case CensorKind::Between:
            // G(hi) - G(lo) == (1 - G(lo)) - (1 - G(hi))
            if (z_lo < 0.0) return logistic(z_lo) - logistic(z_hi);
            return logistic(-z_hi) - logistic(-z_lo);
    }
    return 0.0;
}

struct TermScratch {
    Eigen::VectorXd x_lo, x_hi, dp;

    explicit TermScratch(Eigen::Index k) : x_lo(k), x_hi(k), dp(k) {}
};

enum class TermStatus { Ok, Floored, Negative };

/// Adds weight * ln P and (optionally) its first and second derivatives.
/// want: 0 value only, 1 gradient, 2 Hessian.
inline TermStatus accumulate_term(const SpikeParams& params, const Observation& obs, int want,
                                  TermScratch& scratch, double& value,
                                  Eigen::Ref<Eigen::VectorXd> grad,
                                  Eigen::Ref<Eigen::MatrixXd> hess) {
    const auto& c = obs.censor;
    const double abar = params.index(obs.covariates);
    const double lo = c.kind == CensorKind::PointZero ? 0.0 : c.lo;
    const double z_lo = bid_index(abar, params.b, lo);
    const double z_hi = c.kind == CensorKind::Between ? bid_index(abar, params.b, c.hi) : 0.0;

    double p = interval_probability_from_index(c.kind, z_lo, z_hi, abar);
    if (!(p >= 0.0)) return TermStatus::Negative;  // negative or NaN
    TermStatus status = TermStatus::Ok;
    if (p < kProbabilityFloor) {
        p = kProbabilityFloor;
        status = TermStatus::Floored;
    }
    const double w = static_cast<double>(c.weight);
    value += w * std::log(p);
    if (want == 0) return status;

    // P = const + sum_k c_k G(A_k);  dG/dparams = -G(1-G) x;
    // d2G = G(1-G)(1-2G) x x'.
    // Lower point carries c = -1 for Between/Above, +1 for PointZero.
    const double sign_lo = c.kind == CensorKind::PointZero ? 1.0 : -1.0;
    const double g_lo = logistic(z_lo) * logistic(-z_lo);
    fill_regressor(scratch.x_lo, obs.covariates, lo);
    scratch.dp = (-sign_lo * g_lo) * scratch.x_lo;
    double g_hi = 0.0;
    if (c.kind == CensorKind::Between) {
        g_hi = logistic(z_hi) * logistic(-z_hi);
        fill_regressor(scratch.x_hi, obs.covariates, c.hi);
        scratch.dp.noalias() -= g_hi * scratch.x_hi;
    }
    grad.noalias() += (w / p) * scratch.dp;
    if (want < 2) return status;

    // 1 - 2G = tanh(z / 2)
    const double curv_lo = sign_lo * g_lo * std::tanh(0.5 * z_lo);
    hess.noalias() += (w * curv_lo / p) * scratch.x_lo * scratch.x_lo.transpose();
    if (c.kind == CensorKind::Between) {
        const double curv_hi = g_hi * std::tanh(0.5 * z_hi);
        hess.noalias() += (w * curv_hi / p) * scratch.x_hi * scratch.x_hi.transpose();
    }
    hess.noalias() -= (w / (p * p)) * scratch.dp * scratch.dp.transpose();
    return status;
}

}  // namespace cvm::detail
