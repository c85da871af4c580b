#pragma once

// Data-parallel kernels. Every kernel has a serial reference twin that the
// tests compare against; the parallel versions are deterministic under any
// thread count.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cvm/model.hpp"

namespace cvm::kernels {

enum class Order : std::uint8_t { Value, Gradient, Hessian };

/// Observations are processed in fixed blocks of this size; partial sums are
/// combined in block order so the result does not depend on scheduling.
inline constexpr std::size_t kLikelihoodBlock = 256;

LikelihoodDerivatives likelihood_serial(const SpikeParams& params,
                                        std::span<const Observation> data, Order order);
LikelihoodDerivatives likelihood_parallel(const SpikeParams& params,
                                          std::span<const Observation> data, Order order);

struct WtpDraws {
    std::vector<double> wtp;  // KRW, one per replicate, in replicate order
    std::int64_t rejected = 0;
};

/// Krinsky-Robb replication kernel: coefficient vectors drawn as
/// mean + L z with z ~ N(0, I), L the lower Cholesky factor of the
/// covariance. Draws with b <= 0 are redrawn from the same replicate stream.
/// Replicate r uses an engine seeded from (seed, r) only.
WtpDraws krinsky_robb_serial(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower,
                             std::span<const double> covariates, std::int64_t replications,
                             std::uint64_t seed);
WtpDraws krinsky_robb_parallel(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower,
                               std::span<const double> covariates, std::int64_t replications,
                               std::uint64_t seed);

/// Upper bound on consecutive b <= 0 redraws for one replicate.
inline constexpr int kMaxRedraws = 10000;

int max_threads() noexcept;

}  // namespace cvm::kernels
