#pragma once

// Estimation report: JSON bundle, Table-5-style text layout, national
// aggregation and input provenance.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvm/data_io.hpp"
#include "cvm/estimation.hpp"
#include "cvm/uncertainty.hpp"

namespace cvm {

inline constexpr std::string_view kToolVersion = "1.0.0";
inline constexpr std::string_view kReportSchemaVersion = "cvm-report/1";

inline constexpr std::int64_t kDefaultHouseholds = 23'093'108;
inline constexpr std::int64_t kDefaultYears = 5;

struct AggregateValue {
    double mean_wtp = 0.0;
    std::int64_t households = 0;
    std::int64_t years = 0;
    double annual = 0.0;  // KRW
    double total = 0.0;   // KRW
};

/// annual = mean_wtp * households, total = annual * years. Throws on
/// non-positive inputs or a non-finite product.
AggregateValue aggregate_value(double mean_wtp, std::int64_t households, std::int64_t years);

struct Provenance {
    std::string input_path;
    std::string input_sha256;
    std::string input_format;
    std::uint64_t seed = 0;
    std::int64_t replications = 0;
    std::string protest_policy;
    std::string tool_version{kToolVersion};
};

struct ReportBundle {
    FitResult fit;
    KrinskyRobbResult cis;
    AggregateValue aggregation;
    Provenance provenance;
    std::optional<ProtestAudit> protest_audit;
};

std::string sha256_file(const std::filesystem::path& path);

nlohmann::json to_json(const ReportBundle& report);
/// Text table: coefficients with t-statistics in brackets, spike,
/// log-likelihood, Wald, mean WTP and the confidence intervals.
std::string format_table(const ReportBundle& report);

}  // namespace cvm
