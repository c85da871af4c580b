#include "cvm/kernels.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cvm/errors.hpp"
#include "terms.hpp"

namespace cvm::kernels {

namespace {

int want_of(Order order) { return static_cast<int>(order); }

void check_inputs(const SpikeParams& params, std::span<const Observation> data) {
    if (data.empty()) throw InvalidArgument("log-likelihood needs at least one observation");
    params.validate_finite();
    for (const auto& obs : data) {
        if (obs.covariates.size() != params.theta.size())
            throw InvalidArgument("covariate vector length " +
                                  std::to_string(obs.covariates.size()) + " does not match " +
                                  std::to_string(params.theta.size()) + " coefficients");
        obs.censor.validate();
    }
}

[[noreturn]] void throw_negative(std::size_t index) {
    throw NumericDomainError(
        "non-positive probability for observation " + std::to_string(index) +
            " (is b <= 0?)",
        index);
}

LikelihoodDerivatives make_result(Eigen::Index k, Order order) {
    LikelihoodDerivatives r;
    r.gradient = Eigen::VectorXd::Zero(order == Order::Value ? 0 : k);
    r.hessian = Eigen::MatrixXd::Zero(order == Order::Hessian ? k : 0, order == Order::Hessian ? k : 0);
    return r;
}

std::mt19937_64 replicate_engine(std::uint64_t seed, std::int64_t replicate) {
    const auto r = static_cast<std::uint64_t>(replicate);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(r >> 32)};
    return std::mt19937_64(seq);
}

struct ReplicateDraw {
    double wtp = 0.0;
    int rejected = 0;
    bool ok = true;
};

ReplicateDraw draw_replicate(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower,
                             std::span<const double> covariates, std::uint64_t seed,
                             std::int64_t replicate, Eigen::VectorXd& z, Eigen::VectorXd& beta) {
    auto engine = replicate_engine(seed, replicate);
    std::normal_distribution<double> normal;
    ReplicateDraw out;
    const Eigen::Index k = mean.size();
    for (;;) {
        for (Eigen::Index i = 0; i < k; ++i) z[i] = normal(engine);
        beta.noalias() = mean + chol_lower.triangularView<Eigen::Lower>() * z;
        if (beta[k - 1] > 0.0) break;
        if (++out.rejected >= kMaxRedraws) {
            out.ok = false;
            return out;
        }
    }
    double abar = beta[0];
    for (std::size_t j = 0; j < covariates.size(); ++j)
        abar += beta[static_cast<Eigen::Index>(j + 1)] * covariates[j];
    out.wtp = kBidScale * detail::log1pexp(abar) / beta[k - 1];
    return out;
}

void check_draw_inputs(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower,
                       std::span<const double> covariates, std::int64_t replications) {
    if (replications < 1) throw InvalidArgument("replications must be positive");
    if (mean.size() < 2 || chol_lower.rows() != mean.size() || chol_lower.cols() != mean.size())
        throw InvalidArgument("covariance factor does not match coefficient vector");
    if (static_cast<Eigen::Index>(covariates.size()) != mean.size() - 2)
        throw InvalidArgument("covariate evaluation point does not match coefficient vector");
}

}  // namespace

int max_threads() noexcept {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

LikelihoodDerivatives likelihood_serial(const SpikeParams& params,
                                        std::span<const Observation> data, Order order) {
    check_inputs(params, data);
    const auto k = static_cast<Eigen::Index>(params.size());
    auto r = make_result(k, order);
    detail::TermScratch scratch(k);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(k, k);
    for (std::size_t i = 0; i < data.size(); ++i) {
        switch (detail::accumulate_term(params, data[i], want_of(order), scratch, r.value, grad,
                                        hess)) {
            case detail::TermStatus::Negative:
                throw_negative(i);
            case detail::TermStatus::Floored:
                ++r.diagnostics.floored_terms;
                break;
            case detail::TermStatus::Ok:
                break;
        }
    }
    if (order != Order::Value) r.gradient = grad;
    if (order == Order::Hessian) r.hessian = hess;
    return r;
}

LikelihoodDerivatives likelihood_parallel(const SpikeParams& params,
                                          std::span<const Observation> data, Order order) {
    check_inputs(params, data);
    const auto k = static_cast<Eigen::Index>(params.size());
    const std::size_t n = data.size();
    const std::size_t blocks = (n + kLikelihoodBlock - 1) / kLikelihoodBlock;
    const int want = want_of(order);

    std::vector<double> values(blocks, 0.0);
    std::vector<std::size_t> floored(blocks, 0);
    std::vector<std::size_t> first_bad(blocks, std::numeric_limits<std::size_t>::max());
    Eigen::MatrixXd grads = Eigen::MatrixXd::Zero(k, order == Order::Value ? 0 : blocks);
    std::vector<Eigen::MatrixXd> hessians(order == Order::Hessian ? blocks : 0);

    const auto nblocks = static_cast<std::int64_t>(blocks);
#pragma omp parallel for schedule(static) if (nblocks > 1)
    for (std::int64_t blk = 0; blk < nblocks; ++blk) {
        const auto b = static_cast<std::size_t>(blk);
        detail::TermScratch scratch(k);
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(k);
        Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(k, k);
        double value = 0.0;
        const std::size_t end = std::min(n, (b + 1) * kLikelihoodBlock);
        for (std::size_t i = b * kLikelihoodBlock; i < end; ++i) {
            const auto status =
                detail::accumulate_term(params, data[i], want, scratch, value, grad, hess);
            if (status == detail::TermStatus::Negative) {
                first_bad[b] = i;
                break;
            }
            if (status == detail::TermStatus::Floored) ++floored[b];
        }
        values[b] = value;
        if (order != Order::Value) grads.col(static_cast<Eigen::Index>(b)) = grad;
        if (order == Order::Hessian) hessians[b] = std::move(hess);
    }

    const auto bad = std::min_element(first_bad.begin(), first_bad.end());
    if (*bad != std::numeric_limits<std::size_t>::max()) throw_negative(*bad);

    auto r = make_result(k, order);
    for (std::size_t b = 0; b < blocks; ++b) {
        r.value += values[b];
        r.diagnostics.floored_terms += floored[b];
        if (order != Order::Value) r.gradient += grads.col(static_cast<Eigen::Index>(b));
        if (order == Order::Hessian) r.hessian += hessians[b];
    }
    return r;
}

WtpDraws krinsky_robb_serial(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower,
                             std::span<const double> covariates, std::int64_t replications,
                             std::uint64_t seed) {
    check_draw_inputs(mean, chol_lower, covariates, replications);
    WtpDraws out;
    out.wtp.resize(static_cast<std::size_t>(replications));
    Eigen::VectorXd z(mean.size()), beta(mean.size());
    for (std::int64_t r = 0; r < replications; ++r) {
        const auto d = draw_replicate(mean, chol_lower, covariates, seed, r, z, beta);
        if (!d.ok)
            throw std::runtime_error("replicate " + std::to_string(r) +
                                     " exceeded the b <= 0 redraw limit");
        out.wtp[static_cast<std::size_t>(r)] = d.wtp;
        out.rejected += d.rejected;
    }
    return out;
}

WtpDraws krinsky_robb_parallel(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower,
                               std::span<const double> covariates, std::int64_t replications,
                               std::uint64_t seed) {
    check_draw_inputs(mean, chol_lower, covariates, replications);
    WtpDraws out;
    out.wtp.resize(static_cast<std::size_t>(replications));
    std::int64_t rejected = 0;
    std::int64_t failed = -1;
#pragma omp parallel reduction(+ : rejected)
    {
        Eigen::VectorXd z(mean.size()), beta(mean.size());
#pragma omp for schedule(static)
        for (std::int64_t r = 0; r < replications; ++r) {
            const auto d = draw_replicate(mean, chol_lower, covariates, seed, r, z, beta);
            if (!d.ok) {
#pragma omp critical
                failed = std::max(failed, r);
            }
            out.wtp[static_cast<std::size_t>(r)] = d.wtp;
            rejected += d.rejected;
        }
    }
    if (failed >= 0)
        throw std::runtime_error("replicate " + std::to_string(failed) +
                                 " exceeded the b <= 0 redraw limit");
    out.rejected = rejected;
    return out;
}

}  // namespace cvm::kernels
