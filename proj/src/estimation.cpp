#include "cvm/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>
#include <fmt/format.h>

#include "cvm/errors.hpp"
#include "terms.hpp"

namespace cvm {

namespace {

bool interval_less(const CensorObservation& x, const CensorObservation& y) {
    if (x.kind != y.kind) return x.kind < y.kind;
    if (x.lo != y.lo) return x.lo < y.lo;
    return x.hi < y.hi;
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

std::vector<std::string> coefficient_names(const ModelSpec& spec) {
    std::vector<std::string> names{"constant"};
    names.insert(names.end(), spec.covariate_names.begin(), spec.covariate_names.end());
    names.emplace_back("bid");
    return names;
}

void check_identifiable(std::span<const Observation> data) {
    std::set<double> levels;
    bool any_positive = false;
    for (const auto& obs : data) {
        const auto& c = obs.censor;
        if (c.kind == CensorKind::PointZero) continue;
        any_positive = true;
        if (c.lo > 0.0) levels.insert(c.lo);
        if (c.kind == CensorKind::Between) levels.insert(c.hi);
    }
    if (!any_positive)
        throw DegenerateDataError("every observation is a zero-WTP point; the bid coefficient is "
                                  "not identified");
    if (levels.size() < 2)
        throw DegenerateDataError("need at least two distinct bid levels to identify the model");
}

/// Value only; NaN when the point lies outside the model's domain.
double value_or_nan(const SpikeParams& p, std::span<const Observation> data) {
    try {
        return log_likelihood(p, data);
    } catch (const NumericDomainError&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

Eigen::MatrixXd invert_information(const Eigen::MatrixXd& information,
                                   const std::vector<std::string>& names) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(information);
    const auto& values = eig.eigenvalues();
    const double largest = std::max(values.cwiseAbs().maxCoeff(), 1e-300);
    if (values[0] <= 1e-12 * largest) {
        const Eigen::VectorXd v = eig.eigenvectors().col(0);
        std::string cols;
        for (Eigen::Index j = 0; j < v.size(); ++j)
            if (std::abs(v[j]) > 0.3) cols += (cols.empty() ? "" : ", ") + names[static_cast<std::size_t>(j)];
        throw SingularMatrixError(fmt::format(
            "information matrix is singular or indefinite at the optimum (smallest eigenvalue "
            "{:.3g}); near-collinear columns: {}",
            values[0], cols.empty() ? "unknown" : cols));
    }
    const Eigen::VectorXd inv = values.cwiseInverse();
    Eigen::MatrixXd cov = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (cov + cov.transpose());
}

}  // namespace

void ModelSpec::validate() const {
    std::set<std::string> seen;
    for (const auto& n : covariate_names) {
        if (n.empty()) throw InvalidArgument("empty covariate name");
        if (!seen.insert(n).second) throw InvalidArgument("duplicate covariate '" + n + "'");
    }
}

std::vector<Observation> compress(std::span<const Observation> data) {
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto less = [&](std::size_t i, std::size_t j) {
        const auto& x = data[i];
        const auto& y = data[j];
        if (!x.censor.same_interval(y.censor)) return interval_less(x.censor, y.censor);
        return x.covariates < y.covariates;
    };
    std::sort(order.begin(), order.end(), less);
    std::vector<Observation> out;
    for (std::size_t i : order) {
        const auto& obs = data[i];
        if (!out.empty() && out.back().censor.same_interval(obs.censor) &&
            out.back().covariates == obs.covariates) {
            out.back().censor.weight += obs.censor.weight;
        } else {
            out.push_back(obs);
        }
    }
    return out;
}

SpikeParams default_start(std::span<const Observation> data, std::size_t n_covariates) {
    double total = 0.0, zeros = 0.0, bid_sum = 0.0, bid_weight = 0.0;
    for (const auto& obs : data) {
        const auto w = static_cast<double>(obs.censor.weight);
        total += w;
        const auto& c = obs.censor;
        if (c.kind == CensorKind::PointZero) {
            zeros += w;
            continue;
        }
        if (c.lo > 0.0) {
            bid_sum += w * c.lo;
            bid_weight += w;
        }
        if (c.kind == CensorKind::Between) {
            bid_sum += w * c.hi;
            bid_weight += w;
        }
    }
    SpikeParams p;
    const double positive_share = std::clamp(1.0 - zeros / std::max(total, 1.0), 0.01, 0.99);
    p.a = std::log(positive_share / (1.0 - positive_share));
    p.theta.assign(n_covariates, 0.0);
    const double mean_bid = bid_weight > 0.0 ? bid_sum / bid_weight / kBidScale : 1.0;
    p.b = 1.0 / mean_bid;
    return p;
}

FitResult fit(std::span<const Observation> raw, const ModelSpec& spec, const FitOptions& options) {
    spec.validate();
    if (raw.empty()) throw InvalidArgument("fit needs at least one observation");
    if (!(options.tol > 0.0) || options.max_iter < 1)
        throw InvalidArgument("fit options need tol > 0 and max_iter >= 1");
    const std::size_t k_cov = spec.covariate_names.size();
    for (const auto& obs : raw) {
        if (obs.covariates.size() != k_cov)
            throw InvalidArgument(fmt::format("observation has {} covariates, model expects {}",
                                              obs.covariates.size(), k_cov));
        obs.censor.validate();
    }
    const auto data = compress(raw);
    check_identifiable(data);

    SpikeParams params = options.start ? *options.start : default_start(data, k_cov);
    if (params.theta.size() != k_cov)
        throw InvalidArgument("starting value has the wrong number of covariate coefficients");
    params.validate_finite();
    if (std::isnan(value_or_nan(params, data)))
        throw InvalidArgument("starting value lies outside the model domain (b must be > 0)");

    FitResult result;
    result.coefficient_names = coefficient_names(spec);
    std::deque<std::string> trace;

    LikelihoodDerivatives d = log_likelihood_derivatives(params, data);
    int iter = 0;
    for (; iter < options.max_iter; ++iter) {
        const double gnorm = inf_norm(d.gradient);
        trace.push_back(fmt::format("iter {}: loglik {:.10g}, |grad| {:.3g}", iter, d.value, gnorm));
        if (trace.size() > 5) trace.pop_front();
        if (gnorm <= options.tol) {
            result.converged = true;
            break;
        }
        const Eigen::MatrixXd information = -d.hessian;
        const auto k = information.rows();
        const double scale = std::max(1.0, information.diagonal().cwiseAbs().maxCoeff());
        Eigen::VectorXd dir;
        bool newton = false;
        // Plain Newton first; if the information is not positive definite
        // (flat or collinear directions), damp it before giving up on curvature.
        for (double damping = 0.0; !newton && damping <= 1e-2 * scale;
             damping = damping == 0.0 ? 1e-10 * scale : damping * 100.0) {
            Eigen::LLT<Eigen::MatrixXd> llt(information +
                                            damping * Eigen::MatrixXd::Identity(k, k));
            if (llt.info() != Eigen::Success) continue;
            dir = llt.solve(d.gradient);
            newton = dir.allFinite() && dir.dot(d.gradient) > 0.0;
        }
        if (!newton) dir = d.gradient / d.gradient.norm();

        const Eigen::VectorXd x = params.pack();
        const double slope = d.gradient.dot(dir);
        const double slack = 1e-12 * std::max(1.0, std::abs(d.value));
        double step = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
            const auto trial = SpikeParams::unpack(x + step * dir);
            const double v = value_or_nan(trial, data);
            if (!std::isnan(v) && v >= d.value + 1e-4 * step * slope - slack) {
                params = trial;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        d = log_likelihood_derivatives(params, data);
    }
    if (!result.converged) {
        std::ostringstream msg;
        msg << "maximum likelihood did not converge after " << iter << " iterations";
        for (const auto& t : trace) msg << "\n  " << t;
        throw ConvergenceError(msg.str());
    }

    result.params = params;
    result.iterations = iter;
    result.log_lik = d.value;
    result.gradient = d.gradient;
    result.floored_terms = d.diagnostics.floored_terms;
    result.covariance = invert_information(-d.hessian, result.coefficient_names);

    const Eigen::VectorXd coef = params.pack();
    result.t_stats = coef.cwiseQuotient(result.covariance.diagonal().cwiseSqrt());

    std::vector<std::size_t> all(coef.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    result.wald = wald_joint(result, all);

    double total = 0.0;
    result.covariate_means.assign(k_cov, 0.0);
    for (const auto& obs : data) {
        const auto w = static_cast<double>(obs.censor.weight);
        total += w;
        for (std::size_t j = 0; j < k_cov; ++j) result.covariate_means[j] += w * obs.covariates[j];
    }
    for (auto& m : result.covariate_means) m /= total;
    result.observations = static_cast<std::size_t>(total);

    result.spike = spike_probability(params, result.covariate_means);
    result.mean_wtp = mean_wtp(params, result.covariate_means);
    if (k_cov > 0) {
        result.observation_wtp.reserve(data.size());
        for (const auto& obs : data) result.observation_wtp.push_back(mean_wtp(params, obs.covariates));
    }
    const auto delta = delta_se_mean_wtp(result);
    result.mean_wtp_se = delta.se;
    result.mean_wtp_t = delta.t;
    return result;
}

WaldResult wald_joint(const FitResult& fit, std::span<const std::size_t> which) {
    const auto k = static_cast<std::size_t>(fit.covariance.rows());
    if (which.empty()) throw InvalidArgument("Wald test needs at least one coefficient");
    std::set<std::size_t> unique(which.begin(), which.end());
    if (unique.size() != which.size()) throw InvalidArgument("Wald subset has duplicates");
    if (*unique.rbegin() >= k) throw InvalidArgument("Wald subset index out of range");

    const Eigen::VectorXd coef = fit.params.pack();
    const auto m = static_cast<Eigen::Index>(which.size());
    Eigen::VectorXd c(m);
    Eigen::MatrixXd v(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto wi = static_cast<Eigen::Index>(which[static_cast<std::size_t>(i)]);
        c[i] = coef[wi];
        for (Eigen::Index j = 0; j < m; ++j)
            v(i, j) = fit.covariance(wi, static_cast<Eigen::Index>(which[static_cast<std::size_t>(j)]));
    }
    Eigen::LLT<Eigen::MatrixXd> llt(v);
    if (llt.info() != Eigen::Success)
        throw SingularMatrixError("covariance block for the Wald test is not positive definite");
    WaldResult out;
    out.stat = c.dot(llt.solve(c));
    out.df = static_cast<int>(m);
    out.p_value = chi_square_sf(out.stat, out.df);
    return out;
}

Eigen::VectorXd mean_wtp_gradient(const SpikeParams& params, std::span<const double> s) {
    if (!(params.b > 0.0)) throw InvalidArgument("mean WTP requires b > 0");
    const double abar = params.index(s);
    const double wtp = kBidScale * detail::log1pexp(abar) / params.b;
    const double dwda = kBidScale * logistic(abar) / params.b;
    Eigen::VectorXd g(static_cast<Eigen::Index>(params.size()));
    g[0] = dwda;
    for (std::size_t j = 0; j < s.size(); ++j) g[static_cast<Eigen::Index>(j + 1)] = dwda * s[j];
    g[g.size() - 1] = -wtp / params.b;
    return g;
}

DeltaResult delta_se_mean_wtp(const FitResult& fit) {
    const auto& cov = fit.covariance;
    if (cov.rows() != static_cast<Eigen::Index>(fit.params.size()) || cov.cols() != cov.rows())
        throw InvalidArgument("covariance does not match the coefficient vector");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
    if (eig.eigenvalues()[0] < -1e-8 * scale)
        throw SingularMatrixError("covariance matrix is not positive semi-definite");
    const auto g = mean_wtp_gradient(fit.params, fit.covariate_means);
    const double var = std::max(0.0, g.dot(cov * g));
    DeltaResult out;
    out.se = std::sqrt(var);
    const double wtp = mean_wtp(fit.params, fit.covariate_means);
    out.t = out.se > 0.0 ? wtp / out.se : std::numeric_limits<double>::infinity();
    return out;
}

double chi_square_sf(double stat, int df) {
    if (df < 1) throw InvalidArgument("chi-square needs df >= 1");
    if (!(stat >= 0.0)) throw InvalidArgument("chi-square statistic must be non-negative");
    boost::math::chi_squared dist(df);
    return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace cvm
