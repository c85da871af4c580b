#include "cvm/report.hpp"

#include <array>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "cvm/errors.hpp"

namespace cvm {

using nlohmann::json;

AggregateValue aggregate_value(double mean_wtp, std::int64_t households, std::int64_t years) {
    if (!(mean_wtp > 0.0) || !std::isfinite(mean_wtp))
        throw InvalidArgument("mean WTP must be positive and finite");
    if (households < 1 || years < 1)
        throw InvalidArgument("household count and years must be positive");
    AggregateValue v{mean_wtp, households, years};
    const long double annual = static_cast<long double>(mean_wtp) * households;
    const long double total = annual * years;
    if (!std::isfinite(total) || total > std::numeric_limits<double>::max())
        throw InvalidArgument("aggregate value overflows");
    v.annual = static_cast<double>(annual);
    v.total = static_cast<double>(total);
    return v;
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "' for hashing");
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
    std::array<char, 1 << 14> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string stars(double t) {
    // two-sided normal critical values
    const double a = std::abs(t);
    if (a >= 2.5758293035489) return "**";
    if (a >= 1.9599639845401) return "*";
    return "";
}

}  // namespace

json to_json(const ReportBundle& r) {
    const auto& f = r.fit;
    json coefs = json::array();
    const Eigen::VectorXd packed = f.params.pack();
    for (Eigen::Index i = 0; i < packed.size(); ++i) {
        const auto name = f.coefficient_names[static_cast<std::size_t>(i)];
        coefs.push_back({{"name", name},
                         {"estimate", packed[i]},
                         {"std_error", std::sqrt(f.covariance(i, i))},
                         {"t_stat", f.t_stats[i]}});
    }
    json cov = json::array();
    for (Eigen::Index i = 0; i < f.covariance.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < f.covariance.cols(); ++j) row.push_back(f.covariance(i, j));
        cov.push_back(row);
    }
    json cis = json::array();
    for (const auto& ci : r.cis.intervals)
        cis.push_back({{"level", ci.level}, {"lower", ci.lo}, {"upper", ci.hi}});

    json out{
        {"schema", std::string(kReportSchemaVersion)},
        {"fit",
         {{"coefficients", coefs},
          {"covariance", cov},
          {"log_likelihood", f.log_lik},
          {"wald", {{"statistic", f.wald.stat}, {"df", f.wald.df}, {"p_value", f.wald.p_value}}},
          {"spike", f.spike},
          {"mean_wtp", f.mean_wtp},
          {"mean_wtp_se", f.mean_wtp_se},
          {"mean_wtp_t", finite_or_null(f.mean_wtp_t)},
          {"covariate_means", f.covariate_means},
          {"observations", f.observations},
          {"converged", f.converged},
          {"iterations", f.iterations},
          {"floored_terms", f.floored_terms}}},
        {"confidence_intervals",
         {{"method", "krinsky-robb"},
          {"replications", r.provenance.replications},
          {"rejected_draws", r.cis.rejected_draws},
          {"intervals", cis}}},
        {"aggregation",
         {{"mean_wtp", r.aggregation.mean_wtp},
          {"households", r.aggregation.households},
          {"years", r.aggregation.years},
          {"annual", r.aggregation.annual},
          {"total", r.aggregation.total}}},
        {"provenance",
         {{"input_path", r.provenance.input_path},
          {"input_sha256", r.provenance.input_sha256},
          {"input_format", r.provenance.input_format},
          {"seed", r.provenance.seed},
          {"protest_policy", r.provenance.protest_policy},
          {"tool_version", r.provenance.tool_version}}},
    };
    if (!f.observation_wtp.empty()) out["fit"]["observation_wtp"] = f.observation_wtp;
    if (r.protest_audit)
        out["protest_audit"] = {{"total", r.protest_audit->total},
                                {"zero_responses", r.protest_audit->zero_responses},
                                {"protest", r.protest_audit->protest},
                                {"removed", r.protest_audit->removed}};
    return out;
}

std::string format_table(const ReportBundle& r) {
    const auto& f = r.fit;
    std::string out;
    auto row = [&out](std::string_view label, const std::string& value) {
        out += fmt::format("{:<28}{:>28}\n", label, value);
    };
    out += fmt::format("{:<28}{:>28}\n", "Variables", "Estimate (t)");
    out += std::string(56, '-') + "\n";
    const Eigen::VectorXd packed = f.params.pack();
    for (Eigen::Index i = 0; i < packed.size(); ++i) {
        const auto& name = f.coefficient_names[static_cast<std::size_t>(i)];
        const std::string label = name == "constant" ? "Constant" : name == "bid" ? "Bid (KRW 1,000)" : name;
        row(label, fmt::format("{:.3f} ({:.2f}) {:<2}", packed[i], f.t_stats[i], stars(f.t_stats[i])));
    }
    const double spike_se = std::sqrt(std::max(0.0, [&] {
        // d spike / d(a, theta) = -spike (1 - spike) (1, s)
        Eigen::VectorXd g = Eigen::VectorXd::Zero(packed.size());
        g[0] = -f.spike * (1.0 - f.spike);
        for (std::size_t j = 0; j < f.covariate_means.size(); ++j)
            g[static_cast<Eigen::Index>(j + 1)] = g[0] * f.covariate_means[j];
        return g.dot(f.covariance * g);
    }()));
    const double spike_t = spike_se > 0 ? f.spike / spike_se : 0.0;
    row("Spike", fmt::format("{:.3f} ({:.2f}) {:<2}", f.spike, spike_t, stars(spike_t)));
    row("Log-likelihood", fmt::format("{:.2f}   ", f.log_lik));
    row("Wald statistic (p-value)", fmt::format("{:.2f} ({:.3f})   ", f.wald.stat, f.wald.p_value));
    row("Mean WTP (KRW)", fmt::format("{:.2f} ({:.2f}) {:<2}", f.mean_wtp, f.mean_wtp_t, stars(f.mean_wtp_t)));
    for (const auto& ci : r.cis.intervals)
        row(fmt::format("{:g}% Confidence interval", ci.level * 100),
            fmt::format("{:.2f}-{:.2f}   ", ci.lo, ci.hi));
    out += std::string(56, '-') + "\n";
    out += fmt::format("N = {}; t-statistics in brackets; * 5%, ** 1% significance\n", f.observations);
    out += fmt::format("Annual national WTP: KRW {:.2f} billion ({} households)\n",
                       r.aggregation.annual / 1e9, r.aggregation.households);
    out += fmt::format("Total over {} years: KRW {:.2f} billion\n", r.aggregation.years,
                       r.aggregation.total / 1e9);
    if (r.cis.rejected_draws > 0)
        out += fmt::format("Krinsky-Robb: {} draws with b <= 0 were redrawn\n", r.cis.rejected_draws);
    return out;
}

}  // namespace cvm
