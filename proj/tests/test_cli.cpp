// Command-line front end: subcommands, exit codes, report schema.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cvm/cli.hpp"
#include "cvm/data_io.hpp"
#include "cvm/report.hpp"

#include <nlohmann/json.hpp>

using namespace cvm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cvm_run(std::vector<std::string> args) {
    args.insert(args.begin(), "cvm");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("cvm-cli-" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

const std::string kReference = std::string(CVM_DATA_DIR) + "/reference_counts.csv";

// Enough of JSON Schema for the report: type, const, required, properties, items.
void validate(const json& value, const json& schema, const std::string& where,
              std::vector<std::string>& problems) {
    if (schema.contains("type")) {
        std::vector<std::string> types;
        if (schema["type"].is_array()) types = schema["type"].get<std::vector<std::string>>();
        else types.push_back(schema["type"]);
        bool ok = false;
        for (const auto& t : types) {
            ok |= (t == "object" && value.is_object()) || (t == "array" && value.is_array()) ||
                  (t == "string" && value.is_string()) || (t == "boolean" && value.is_boolean()) ||
                  (t == "null" && value.is_null()) || (t == "number" && value.is_number()) ||
                  (t == "integer" && value.is_number_integer());
        }
        if (!ok) problems.push_back(where + ": wrong type");
    }
    if (schema.contains("const") && value != schema["const"]) problems.push_back(where + ": const mismatch");
    if (value.is_object()) {
        const auto required = schema.value("required", json::array());
        for (const auto& key : required)
            if (!value.contains(key.get<std::string>())) problems.push_back(where + ": missing " + key.get<std::string>());
        const auto properties = schema.value("properties", json::object());
        for (const auto& [key, sub] : properties.items())
            if (value.contains(key)) validate(value[key], sub, where + "." + key, problems);
    }
    if (value.is_array() && schema.contains("items"))
        for (std::size_t i = 0; i < value.size(); ++i)
            validate(value[i], schema["items"], where + "[" + std::to_string(i) + "]", problems);
}

}  // namespace

TEST_CASE("estimate on the aggregate counts", "[cli][estimate]") {
    const auto dir = scratch_dir("estimate");
    const auto report_path = (dir / "report.json").string();
    const auto r = cvm_run({"estimate", "--input", kReference, "--out", report_path});
    REQUIRE(r.code == cli::kOk);
    CHECK(r.out.find("Mean WTP") != std::string::npos);
    CHECK(r.out.find("7222.55") != std::string::npos);

    const auto report = json::parse(slurp(report_path));
    CHECK(report.at("fit").at("mean_wtp").get<double>() == Catch::Approx(7222.55).epsilon(0.005));
    CHECK(report.at("provenance").at("seed") == 20210209);
    CHECK(report.at("provenance").at("input_sha256").get<std::string>().size() == 64);
    CHECK(report.at("aggregation").at("annual").get<double>() ==
          Catch::Approx(1.668e11).epsilon(5e-4));

    std::ifstream schema_in(std::string(CVM_SCHEMA_DIR) + "/report.schema.json");
    const auto schema = json::parse(schema_in);
    std::vector<std::string> problems;
    validate(report, schema, "$", problems);
    for (const auto& p : problems) UNSCOPED_INFO(p);
    CHECK(problems.empty());
}

TEST_CASE("estimate is reproducible for a fixed seed", "[cli][estimate]") {
    const auto dir = scratch_dir("repro");
    const auto one = (dir / "one.json").string(), two = (dir / "two.json").string();
    REQUIRE(cvm_run({"estimate", "--input", kReference, "--seed", "5", "--reps", "1000", "--out", one}).code == 0);
    REQUIRE(cvm_run({"estimate", "--input", kReference, "--seed", "5", "--reps", "1000", "--out", two}).code == 0);
    CHECK(slurp(one) == slurp(two));

    const auto json_out = cvm_run({"estimate", "--input", kReference, "--seed", "5", "--reps", "1000",
                                   "--format", "json"});
    CHECK(json_out.out == slurp(one));

    ::setenv("CVM_SEED", "5", 1);
    const auto from_env = cvm_run({"estimate", "--input", kReference, "--reps", "1000", "--format", "json"});
    ::unsetenv("CVM_SEED");
    CHECK(from_env.out == slurp(one));
}

TEST_CASE("estimate flag errors", "[cli][errors]") {
    CHECK(cvm_run({"estimate", "--input", kReference, "--protest", "exclude"}).code == cli::kFlagError);
    CHECK(cvm_run({"estimate", "--input", kReference, "--covariates", "age"}).code == cli::kFlagError);
    CHECK(cvm_run({"estimate", "--input", kReference, "--protest", "sometimes"}).code == cli::kFlagError);
    CHECK(cvm_run({"estimate", "--input", "/no/such/file.csv"}).code == cli::kFlagError);
    CHECK(cvm_run({"estimate"}).code == cli::kFlagError);
    CHECK(cvm_run({"frobnicate"}).code == cli::kFlagError);
    CHECK(cvm_run({}).code == cli::kFlagError);
    CHECK(cvm_run({"--help"}).code == cli::kOk);

    ::setenv("CVM_SEED", "abc", 1);
    CHECK(cvm_run({"estimate", "--input", kReference, "--reps", "100"}).code == cli::kFlagError);
    ::unsetenv("CVM_SEED");
}

TEST_CASE("estimate parse and convergence failures", "[cli][errors]") {
    const auto dir = scratch_dir("failures");
    const auto bad = dir / "bad.csv";
    {
        std::ofstream out(bad);
        out << "arm,lower_bid,upper_bid,outcome,count\nupper,1000,2000,U_Y,zero\n";
    }
    const auto r = cvm_run({"estimate", "--input", bad.string()});
    CHECK(r.code == cli::kParseError);
    CHECK(r.err.find("row 2, column 5") != std::string::npos);

    const auto zeros = dir / "zeros.csv";
    {
        std::ofstream out(zeros);
        out << "arm,lower_bid,upper_bid,outcome,count\nupper,1000,2000,U_NNN,40\nlower,3000,4000,L_NN,30\n";
    }
    CHECK(cvm_run({"estimate", "--input", zeros.string()}).code == cli::kConvergenceError);

    CHECK(cvm_run({"estimate", "--input", kReference, "--max-iter", "1"}).code == cli::kConvergenceError);
}

TEST_CASE("aggregate-value", "[cli][aggregate]") {
    auto value = [](std::vector<std::string> args) {
        args.insert(args.begin(), "aggregate-value");
        const auto r = cvm_run(args);
        REQUIRE(r.code == 0);
        return json::parse(r.out);
    };
    const auto unit = value({"--mean-wtp", "1234.5", "--households", "1", "--years", "1"});
    CHECK(unit.at("annual") == 1234.5);
    CHECK(unit.at("total") == 1234.5);
    const auto small = value({"--mean-wtp", "1000", "--households", "10", "--years", "2"});
    CHECK(small.at("annual") == 10'000.0);
    CHECK(small.at("total") == 20'000.0);
    const auto national = value({"--mean-wtp", "7222.55"});
    CHECK(national.at("annual").get<double>() == Catch::Approx(1.66791e11).epsilon(1e-5));
    CHECK(national.at("total").get<double>() == Catch::Approx(8.33956e11).epsilon(1e-5));

    CHECK(cvm_run({"aggregate-value", "--mean-wtp", "-5"}).code == cli::kFlagError);
    CHECK(cvm_run({"aggregate-value", "--mean-wtp", "100", "--households", "0"}).code == cli::kFlagError);
}

TEST_CASE("simulate then estimate", "[cli][simulate]") {
    const auto dir = scratch_dir("simulate");
    const auto csv = (dir / "sim.csv").string();
    REQUIRE(cvm_run({"simulate", "--a", "1.0", "--b", "0.2", "--n", "5000", "--seed", "3", "--out", csv}).code == 0);
    CHECK(detect_format(csv) == InputFormat::Respondent);
    CHECK(load_respondents(csv).records.size() == 5000);

    const auto r = cvm_run({"estimate", "--input", csv, "--format", "json", "--reps", "500"});
    REQUIRE(r.code == 0);
    const auto fit = json::parse(r.out).at("fit");
    const auto& a = fit.at("coefficients").at(0);
    const auto& b = fit.at("coefficients").at(1);
    CHECK(std::abs(a.at("estimate").get<double>() - 1.0) < 3 * a.at("std_error").get<double>());
    CHECK(std::abs(b.at("estimate").get<double>() - 0.2) < 3 * b.at("std_error").get<double>());

    const auto excl = cvm_run({"estimate", "--input", csv, "--format", "json", "--reps", "500",
                               "--protest", "exclude"});
    REQUIRE(excl.code == 0);
    const auto audit = json::parse(excl.out).at("protest_audit");
    CHECK(audit.at("removed") == audit.at("protest"));
    CHECK(audit.at("removed").get<int>() > 0);

    const auto cov_csv = (dir / "cov.csv").string();
    REQUIRE(cvm_run({"simulate", "--a", "0.5", "--b", "0.2", "--theta", "0.2", "--n", "3000", "--out", cov_csv})
                .code == 0);
    const auto cov = cvm_run({"estimate", "--input", cov_csv, "--covariates", "x1", "--reps", "500"});
    CHECK(cov.code == 0);
    CHECK(cov.out.find("x1") != std::string::npos);
    CHECK(cvm_run({"estimate", "--input", cov_csv, "--covariates", "x9"}).code == cli::kFlagError);

    const auto stdout_sim = cvm_run({"simulate", "--n", "20", "--seed", "1"});
    CHECK(stdout_sim.code == 0);
    CHECK(std::count(stdout_sim.out.begin(), stdout_sim.out.end(), '\n') == 21);
    CHECK(cvm_run({"simulate", "--b", "-0.1"}).code == cli::kFlagError);
}

TEST_CASE("design-bids", "[cli][design]") {
    const auto dir = scratch_dir("design");
    const auto pilot = dir / "pilot.csv";
    {
        std::ofstream out(pilot);
        for (int v = 0; v <= 20000; v += 10) out << v << "\n";
    }
    const auto r = cvm_run({"design-bids", "--pilot", pilot.string(), "--pairs", "10"});
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("lower,upper\n1000,3000\n3000,5000\n", 0) == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 11);

    const auto few = dir / "few.csv";
    {
        std::ofstream out(few);
        out << "100\n200\n";
    }
    CHECK(cvm_run({"design-bids", "--pilot", few.string()}).code == cli::kFlagError);
    const auto junk = dir / "junk.csv";
    {
        std::ofstream out(junk);
        out << "100\nlots\n";
    }
    CHECK(cvm_run({"design-bids", "--pilot", junk.string()}).code == cli::kParseError);
}

TEST_CASE("serve argument checks", "[cli][serve]") {
    CHECK(cvm_run({"serve"}).code == cli::kFlagError);
    CHECK(cvm_run({"serve", "--survey", "/no/such.json"}).code == cli::kFlagError);
    CHECK(cvm_run({"serve", "--survey", std::string(CVM_DATA_DIR) + "/survey_definition.json", "--port", "70000"})
              .code == cli::kFlagError);
}
