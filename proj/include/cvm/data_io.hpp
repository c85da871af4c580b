#pragma once

// Respondent-level and aggregate CSV ingestion, protest handling, bid design.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cvm/model.hpp"

namespace cvm {

enum class ZeroReason : std::uint8_t {
    CannotAfford,
    ExistingTax,
    NotEnoughInfo,  // protest
    NotPriority,
    NotInterested,
    Other,
};

inline constexpr ZeroReason kAllZeroReasons[] = {
    ZeroReason::CannotAfford, ZeroReason::ExistingTax,   ZeroReason::NotEnoughInfo,
    ZeroReason::NotPriority,  ZeroReason::NotInterested, ZeroReason::Other};

std::string_view to_string(ZeroReason reason) noexcept;
ZeroReason parse_zero_reason(std::string_view code);
/// Respondent-facing wording of a zero-WTP reason.
std::string_view describe(ZeroReason reason) noexcept;

struct RespondentRecord {
    std::string id;
    Arm arm = Arm::UpperFirst;
    BidPair bids;
    Outcome outcome = Outcome::U_Y;
    std::map<std::string, double> covariates;
    std::optional<ZeroReason> zero_reason;

    bool protest() const noexcept { return zero_reason == ZeroReason::NotEnoughInfo; }

    /// Arm/outcome compatibility, bid validity, and (optionally) the rule that a
    /// zero reason is present exactly for zero outcomes.
    void validate(bool require_zero_reason = true) const;
};

/// Respondent records plus the covariate column order they were read with.
struct RespondentTable {
    std::vector<std::string> covariate_columns;
    std::vector<RespondentRecord> records;
};

struct AggregateCell {
    Arm arm = Arm::UpperFirst;
    BidPair bids;
    Outcome outcome = Outcome::U_Y;
    std::int64_t count = 0;

    friend bool operator==(const AggregateCell&, const AggregateCell&) = default;
};

struct BidDesign {
    std::vector<BidPair> pairs;

    /// Non-empty, every pair valid, strictly increasing by lower bid.
    void validate() const;
};

/// The ten initial bid pairs used in the reference survey.
BidDesign reference_design();

enum class InputFormat : std::uint8_t { Respondent, Aggregate };

/// Decides the CSV flavour from its header line.
InputFormat detect_format(const std::filesystem::path& path);

RespondentTable parse_respondents(std::istream& in);
RespondentTable load_respondents(const std::filesystem::path& path);
void write_respondents(std::ostream& out, const RespondentTable& table);

std::vector<AggregateCell> parse_aggregate(std::istream& in);
std::vector<AggregateCell> load_aggregate(const std::filesystem::path& path);
void write_aggregate(std::ostream& out, std::span<const AggregateCell> cells);

/// One record per respondent counted in the cells (no covariates, no reasons).
RespondentTable expand(std::span<const AggregateCell> cells);
/// Counts records per (arm, bids, outcome), sorted by arm, bids, outcome.
std::vector<AggregateCell> aggregate(std::span<const RespondentRecord> records);

enum class ProtestPolicy : std::uint8_t { IncludeAsZero, Exclude };

struct ProtestAudit {
    std::size_t total = 0;
    std::size_t zero_responses = 0;
    std::size_t protest = 0;
    std::size_t removed = 0;
};

struct ProtestFiltered {
    std::vector<RespondentRecord> records;
    ProtestAudit audit;
};

ProtestFiltered apply_protest_policy(std::span<const RespondentRecord> records,
                                     ProtestPolicy policy);

/// Likelihood rows for the named covariates (in that order).
std::vector<Observation> to_observations(std::span<const RespondentRecord> records,
                                         std::span<const std::string> covariate_names);
std::vector<Observation> to_observations(std::span<const AggregateCell> cells);

/// Bid pairs from pilot open-ended WTP answers: drop both `trim` tails, place
/// n_pairs + 1 levels at evenly spaced quantiles of what remains, round to
/// KRW 1,000 and pair consecutive levels.
BidDesign design_bids(std::span<const double> pilot_wtp, std::size_t n_pairs = 10,
                      double trim = 0.05);

/// Linear-interpolated sample quantile of sorted data (type 7).
double sorted_quantile(std::span<const double> sorted, double p);

/// Splits one CSV line; double quotes may wrap fields, "" escapes a quote.
std::vector<std::string> split_csv_line(std::string_view line);

}  // namespace cvm
