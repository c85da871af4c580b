#pragma once

// Maximum likelihood for the spike model: Newton ascent, observed-information
// covariance, Wald tests and delta-method standard errors.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cvm/model.hpp"

namespace cvm {

struct ModelSpec {
    std::vector<std::string> covariate_names;  // empty: no-covariate model
    bool include_protest_as_zero = true;

    void validate() const;
};

struct FitOptions {
    double tol = 1e-8;  // gradient infinity-norm on the thousand-KRW scale
    int max_iter = 200;
    std::optional<SpikeParams> start;
};

struct WaldResult {
    double stat = 0.0;
    int df = 0;
    double p_value = 1.0;
};

struct FitResult {
    std::vector<std::string> coefficient_names;  // "constant", covariates..., "bid"
    SpikeParams params;
    Eigen::MatrixXd covariance;
    double log_lik = 0.0;
    Eigen::VectorXd gradient;
    Eigen::VectorXd t_stats;
    WaldResult wald;
    std::vector<double> covariate_means;  // weighted sample means, evaluation point
    double spike = 0.0;
    double mean_wtp = 0.0;
    double mean_wtp_se = 0.0;
    double mean_wtp_t = 0.0;
    /// Mean WTP per distinct likelihood row (covariate models); KRW.
    std::vector<double> observation_wtp;
    std::size_t observations = 0;  // total weight
    bool converged = false;
    int iterations = 0;
    std::size_t floored_terms = 0;
};

/// Merges rows with identical interval and covariates into one weighted row;
/// result is in a canonical sorted order.
std::vector<Observation> compress(std::span<const Observation> data);

SpikeParams default_start(std::span<const Observation> data, std::size_t n_covariates);

FitResult fit(std::span<const Observation> data, const ModelSpec& spec,
              const FitOptions& options = {});

/// Wald statistic for the joint hypothesis that the selected coefficients
/// (indices into the packed (a, theta..., b) vector) are zero.
WaldResult wald_joint(const FitResult& fit, std::span<const std::size_t> which);

struct DeltaResult {
    double se = 0.0;
    double t = 0.0;
};

/// Gradient of mean WTP (KRW) with respect to (a, theta..., b).
Eigen::VectorXd mean_wtp_gradient(const SpikeParams& params, std::span<const double> s);

DeltaResult delta_se_mean_wtp(const FitResult& fit);

/// Upper-tail chi-square probability.
double chi_square_sf(double stat, int df);

}  // namespace cvm
