#include "cvm/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "cvm/data_io.hpp"
#include "cvm/errors.hpp"
#include "cvm/estimation.hpp"
#include "cvm/report.hpp"
#include "cvm/service.hpp"
#include "cvm/uncertainty.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>

namespace cvm::cli {

namespace {

/// Invalid flag or flag combination.
class FlagError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

constexpr std::uint64_t kDefaultSeed = 20210209;

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    if (s.empty() || s == "none") return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("CVM_SEED")) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (used == std::string(env).size()) return v;
        } catch (const std::exception&) {
        }
        throw FlagError(std::string("CVM_SEED is not an unsigned integer: '") + env + "'");
    }
    return kDefaultSeed;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FlagError("cannot write '" + path + "'");
    out << text;
}

struct EstimateArgs {
    std::string input;
    std::string covariates = "none";
    std::string protest = "include";
    std::optional<std::uint64_t> seed;
    std::int64_t reps = 5000;
    std::string out;
    std::string format = "table";
    std::int64_t households = kDefaultHouseholds;
    std::int64_t years = kDefaultYears;
    double tol = 1e-8;
    int max_iter = 200;
};

int cmd_estimate(const EstimateArgs& a, std::ostream& out) {
    const auto names = split_list(a.covariates);
    const auto policy = a.protest == "exclude" ? ProtestPolicy::Exclude : ProtestPolicy::IncludeAsZero;
    const auto format = detect_format(a.input);

    ReportBundle report;
    std::vector<Observation> data;
    if (format == InputFormat::Aggregate) {
        if (!names.empty())
            throw FlagError("aggregate input carries no covariates; use --covariates none");
        if (policy == ProtestPolicy::Exclude)
            throw FlagError("protest status is unavailable in aggregate input; use --protest include");
        data = to_observations(load_aggregate(a.input));
    } else {
        const auto table = load_respondents(a.input);
        for (const auto& n : names)
            if (std::find(table.covariate_columns.begin(), table.covariate_columns.end(), n) ==
                table.covariate_columns.end())
                throw FlagError("covariate '" + n + "' is not a column of " + a.input);
        auto filtered = apply_protest_policy(table.records, policy);
        report.protest_audit = filtered.audit;
        data = to_observations(filtered.records, names);
    }

    ModelSpec spec{names, policy == ProtestPolicy::IncludeAsZero};
    FitOptions options;
    options.tol = a.tol;
    options.max_iter = a.max_iter;
    report.fit = fit(data, spec, options);

    KrinskyRobbConfig kr;
    kr.replications = a.reps;
    kr.seed = resolve_seed(a.seed);
    report.cis = krinsky_robb_ci(report.fit, kr);
    report.cis.sorted_wtp.clear();
    report.aggregation = aggregate_value(report.fit.mean_wtp, a.households, a.years);
    report.provenance.input_path = a.input;
    report.provenance.input_sha256 = sha256_file(a.input);
    report.provenance.input_format = format == InputFormat::Aggregate ? "aggregate" : "respondent";
    report.provenance.seed = kr.seed;
    report.provenance.replications = kr.replications;
    report.provenance.protest_policy = a.protest;

    const std::string json_text = to_json(report).dump(2) + "\n";
    if (!a.out.empty()) write_file(a.out, json_text);
    out << (a.format == "json" ? json_text : format_table(report));
    return kOk;
}

int cmd_aggregate_value(double wtp, std::int64_t households, std::int64_t years, std::ostream& out) {
    const auto v = aggregate_value(wtp, households, years);
    out << nlohmann::json{{"mean_wtp", v.mean_wtp},
                          {"households", v.households},
                          {"years", v.years},
                          {"annual", v.annual},
                          {"total", v.total}}
               .dump(2)
        << "\n";
    return kOk;
}

struct SimulateArgs {
    double a = 1.0;
    double b = 0.2;
    std::string theta;
    std::size_t n = 1000;
    std::optional<std::uint64_t> seed;
    std::string design;
    std::string out;
};

BidDesign load_design(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open design '" + path + "'");
    BidDesign d;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || (row == 1 && line.rfind("lower", 0) == 0)) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 2) throw ParseError("expected lower,upper", row);
        try {
            d.pairs.push_back({std::stod(f[0]), std::stod(f[1])});
        } catch (const std::exception&) {
            throw ParseError("bid is not a number", row);
        }
    }
    d.validate();
    return d;
}

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
    SpikeParams truth;
    truth.a = a.a;
    truth.b = a.b;
    for (const auto& t : split_list(a.theta)) truth.theta.push_back(std::stod(t));
    const auto design = a.design.empty() ? reference_design() : load_design(a.design);
    const auto pop = simulate_population(truth, design, a.n, resolve_seed(a.seed));
    std::ostringstream csv;
    write_respondents(csv, pop.table);
    if (a.out.empty()) out << csv.str();
    else write_file(a.out, csv.str());
    return kOk;
}

std::vector<double> load_pilot(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open pilot '" + path + "'");
    std::vector<double> v;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        try {
            std::size_t used = 0;
            v.push_back(std::stod(f.back(), &used));
            if (used != f.back().size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            if (row == 1) continue;  // header
            throw ParseError("pilot WTP is not a number", row, f.size());
        }
    }
    return v;
}

int cmd_design_bids(const std::string& pilot, std::size_t pairs, double trim, std::ostream& out) {
    const auto design = design_bids(load_pilot(pilot), pairs, trim);
    out << "lower,upper\n";
    for (const auto& p : design.pairs) out << fmt::format("{},{}\n", p.lower, p.upper);
    return kOk;
}

struct ServeArgs {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string survey;
    std::string store = "survey-store";
    std::optional<std::uint64_t> seed;
    std::string token;
    std::string cors_origin = "*";
    double idle_hours = 24.0;
};

std::string random_token() {
    std::random_device rd;
    return fmt::format("{:08x}{:08x}{:08x}{:08x}", rd(), rd(), rd(), rd());
}

int cmd_serve(const ServeArgs& a, std::ostream& out) {
    survey::ServiceConfig cfg;
    cfg.seed = resolve_seed(a.seed);
    cfg.idle_timeout = std::chrono::seconds(static_cast<std::int64_t>(a.idle_hours * 3600));
    cfg.cors_origin = a.cors_origin;
    cfg.export_token = a.token;
    if (cfg.export_token.empty())
        if (const char* env = std::getenv("CVM_EXPORT_TOKEN")) cfg.export_token = env;
    const bool generated = cfg.export_token.empty();
    if (generated) cfg.export_token = random_token();

    survey::SurveyService service(survey::SurveyDefinition::load(a.survey),
                                  std::filesystem::path(a.store) / "responses.jsonl", cfg);
    httplib::Server server;
    survey::install_routes(server, service);
    const int port = a.port == 0 ? server.bind_to_any_port(a.host)
                                 : (server.bind_to_port(a.host, a.port) ? a.port : -1);
    if (port < 0) throw FlagError(fmt::format("cannot bind {}:{}", a.host, a.port));
    out << fmt::format("listening on http://{}:{}\n", a.host, port);
    if (generated) out << "export token: " << cfg.export_token << "\n";
    out.flush();
    return server.listen_after_bind() ? kOk : kFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spike-model contingent valuation toolkit"};
    app.require_subcommand(1);

    EstimateArgs est;
    auto* estimate = app.add_subcommand("estimate", "Fit the spike model and report WTP");
    estimate->add_option("--input", est.input, "Respondent or aggregate CSV")->required()->check(CLI::ExistingFile);
    estimate->add_option("--covariates", est.covariates, "Comma-separated covariate columns, or none");
    estimate->add_option("--protest", est.protest, "Protest zeros: include|exclude")
        ->check(CLI::IsMember({"include", "exclude"}));
    estimate->add_option("--seed", est.seed, "Krinsky-Robb seed (falls back to CVM_SEED)");
    estimate->add_option("--reps", est.reps, "Krinsky-Robb replications")->check(CLI::Range(100, 10'000'000));
    estimate->add_option("--out", est.out, "Write the JSON report here");
    estimate->add_option("--format", est.format, "Stdout format: table|json")
        ->check(CLI::IsMember({"table", "json"}));
    estimate->add_option("--households", est.households, "Households for aggregation")->check(CLI::PositiveNumber);
    estimate->add_option("--years", est.years, "Payment years for aggregation")->check(CLI::PositiveNumber);
    estimate->add_option("--tol", est.tol, "Gradient tolerance")->check(CLI::PositiveNumber);
    estimate->add_option("--max-iter", est.max_iter, "Newton iteration limit")->check(CLI::PositiveNumber);

    double agg_wtp = 0.0;
    std::int64_t agg_households = kDefaultHouseholds, agg_years = kDefaultYears;
    auto* aggregate_cmd = app.add_subcommand("aggregate-value", "Scale household WTP to a national value");
    aggregate_cmd->add_option("--mean-wtp", agg_wtp, "Mean WTP per household per year (KRW)")->required();
    aggregate_cmd->add_option("--households", agg_households, "Number of households");
    aggregate_cmd->add_option("--years", agg_years, "Payment years");

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Write a synthetic respondent CSV");
    simulate->add_option("--a", sim.a, "Constant");
    simulate->add_option("--b", sim.b, "Bid coefficient (per KRW 1,000)");
    simulate->add_option("--theta", sim.theta, "Comma-separated covariate coefficients");
    simulate->add_option("--n", sim.n, "Respondents")->check(CLI::PositiveNumber);
    simulate->add_option("--seed", sim.seed, "Seed (falls back to CVM_SEED)");
    simulate->add_option("--design", sim.design, "Bid design CSV (lower,upper); default reference design");
    simulate->add_option("--out", sim.out, "Output path (default stdout)");

    std::string pilot;
    std::size_t n_pairs = 10;
    double trim = 0.05;
    auto* design = app.add_subcommand("design-bids", "Derive bid pairs from pilot WTP answers");
    design->add_option("--pilot", pilot, "CSV with one WTP value per line")->required()->check(CLI::ExistingFile);
    design->add_option("--pairs", n_pairs, "Number of bid pairs")->check(CLI::PositiveNumber);
    design->add_option("--trim", trim, "Fraction trimmed from each tail")->check(CLI::Range(0.0, 0.49));

    ServeArgs srv;
    auto* serve = app.add_subcommand("serve", "Run the survey HTTP service");
    serve->add_option("--host", srv.host, "Bind address");
    serve->add_option("--port", srv.port, "Port (0 picks an ephemeral port)")->check(CLI::Range(0, 65535));
    serve->add_option("--survey", srv.survey, "Survey definition JSON")->required()->check(CLI::ExistingFile);
    serve->add_option("--store", srv.store, "Directory for the response log");
    serve->add_option("--seed", srv.seed, "Arm-assignment seed (falls back to CVM_SEED)");
    serve->add_option("--export-token", srv.token, "Token for GET /export (or CVM_EXPORT_TOKEN)");
    serve->add_option("--cors-origin", srv.cors_origin, "Allowed browser origin");
    serve->add_option("--idle-timeout-hours", srv.idle_hours, "Session idle timeout")->check(CLI::PositiveNumber);

    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kFlagError;
    }

    try {
        if (estimate->parsed()) return cmd_estimate(est, out);
        if (aggregate_cmd->parsed()) return cmd_aggregate_value(agg_wtp, agg_households, agg_years, out);
        if (simulate->parsed()) return cmd_simulate(sim, out);
        if (design->parsed()) return cmd_design_bids(pilot, n_pairs, trim, out);
        if (serve->parsed()) return cmd_serve(srv, out);
    } catch (const FlagError& e) {
        err << "error: " << e.what() << "\n";
        return kFlagError;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << "\n";
        return kParseError;
    } catch (const ConvergenceError& e) {
        err << "estimation failed: " << e.what() << "\n";
        return kConvergenceError;
    } catch (const SingularMatrixError& e) {
        err << "estimation failed: " << e.what() << "\n";
        return kConvergenceError;
    } catch (const DegenerateDataError& e) {
        err << "estimation failed: " << e.what() << "\n";
        return kConvergenceError;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << "\n";
        return kFlagError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kFailure;
}

}  // namespace cvm::cli
