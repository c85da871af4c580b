#include "cvm/data_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <tuple>

#include "cvm/errors.hpp"

namespace cvm {

namespace {

constexpr std::array<std::string_view, 6> kReasonCodes = {
    "cannot_afford", "existing_tax", "not_enough_info", "not_priority", "not_interested", "other"};

constexpr std::array<std::string_view, 6> kReasonText = {
    "Cannot afford to pay the additional income tax",
    "Should be covered by the existing income tax",
    "Not enough information to judge",
    "Not important enough to prioritize",
    "Not interested",
    "Others"};

constexpr std::array<std::string_view, 5> kRespondentLead = {"id", "arm", "lower_bid", "upper_bid",
                                                             "outcome"};
constexpr std::string_view kRespondentTail = "zero_reason";
constexpr std::array<std::string_view, 5> kAggregateHeader = {"arm", "lower_bid", "upper_bid",
                                                              "outcome", "count"};

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path.string() + "'");
    return in;
}

bool next_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

double parse_number(const std::string& field, std::size_t row, std::size_t col) {
    double v = 0.0;
    const char* first = field.data();
    const char* last = first + field.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v))
        throw ParseError("'" + field + "' is not a finite number", row, col);
    return v;
}

std::int64_t parse_count(const std::string& field, std::size_t row, std::size_t col) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size())
        throw ParseError("'" + field + "' is not an integer count", row, col);
    if (v < 1) throw ParseError("count must be >= 1", row, col);
    return v;
}

BidPair parse_bids(const std::string& lo, const std::string& hi, std::size_t row,
                   std::size_t col) {
    BidPair bids{parse_number(lo, row, col), parse_number(hi, row, col + 1)};
    try {
        bids.validate();
    } catch (const InvalidArgument& e) {
        throw ParseError(e.what(), row, col);
    }
    return bids;
}

std::string format_number(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::string quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

auto cell_key(const AggregateCell& c) { return std::tuple(c.arm, c.bids, c.outcome); }

}  // namespace

std::string_view to_string(ZeroReason reason) noexcept {
    return kReasonCodes[static_cast<std::size_t>(reason)];
}

std::string_view describe(ZeroReason reason) noexcept {
    return kReasonText[static_cast<std::size_t>(reason)];
}

ZeroReason parse_zero_reason(std::string_view code) {
    for (std::size_t i = 0; i < kReasonCodes.size(); ++i)
        if (kReasonCodes[i] == code) return static_cast<ZeroReason>(i);
    throw InvalidArgument("unknown zero_reason '" + std::string(code) + "'");
}

void RespondentRecord::validate(bool require_zero_reason) const {
    bids.validate();
    if (arm_of(outcome) != arm)
        throw InvalidArgument("outcome " + std::string(to_string(outcome)) + " does not match arm " +
                              std::string(to_string(arm)));
    for (const auto& [name, value] : covariates)
        if (!std::isfinite(value)) throw InvalidArgument("covariate '" + name + "' is not finite");
    if (!is_zero_outcome(outcome) && zero_reason)
        throw InvalidArgument("zero_reason given for non-zero outcome " +
                              std::string(to_string(outcome)));
    if (require_zero_reason && is_zero_outcome(outcome) && !zero_reason)
        throw InvalidArgument("zero outcome " + std::string(to_string(outcome)) +
                              " requires a zero_reason");
}

void BidDesign::validate() const {
    if (pairs.empty()) throw InvalidArgument("bid design has no pairs");
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        pairs[i].validate();
        if (i > 0 && !(pairs[i].lower > pairs[i - 1].lower))
            throw InvalidArgument("bid pairs must be strictly increasing by lower bid");
    }
}

BidDesign reference_design() {
    return BidDesign{{{1000, 2000},
                      {2000, 3000},
                      {3000, 4000},
                      {4000, 5000},
                      {5000, 7000},
                      {7000, 9000},
                      {9000, 11000},
                      {11000, 14000},
                      {14000, 17000},
                      {17000, 20000}}};
}

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw ParseError("unterminated quoted field");
    fields.push_back(std::move(cur));
    return fields;
}

InputFormat detect_format(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::string line;
    if (!next_line(in, line)) throw ParseError("'" + path.string() + "' is empty");
    const auto header = split_csv_line(line);
    if (!header.empty() && header[0] == "arm") return InputFormat::Aggregate;
    if (!header.empty() && header[0] == "id") return InputFormat::Respondent;
    throw ParseError("unrecognised header in '" + path.string() + "'", 1);
}

RespondentTable parse_respondents(std::istream& in) {
    std::string line;
    if (!next_line(in, line)) throw ParseError("respondent file is empty");
    const auto header = split_csv_line(line);
    if (header.size() < kRespondentLead.size() + 1)
        throw ParseError("respondent header is too short", 1);
    for (std::size_t i = 0; i < kRespondentLead.size(); ++i)
        if (header[i] != kRespondentLead[i])
            throw ParseError("expected column '" + std::string(kRespondentLead[i]) + "'", 1, i + 1);
    if (header.back() != kRespondentTail)
        throw ParseError("last column must be 'zero_reason'", 1, header.size());

    RespondentTable table;
    table.covariate_columns.assign(header.begin() + kRespondentLead.size(), header.end() - 1);
    std::set<std::string> seen_cols(table.covariate_columns.begin(), table.covariate_columns.end());
    if (seen_cols.size() != table.covariate_columns.size())
        throw ParseError("duplicate covariate column", 1);

    std::set<std::string> ids;
    std::size_t row = 1;
    while (next_line(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> f;
        try {
            f = split_csv_line(line);
        } catch (const ParseError& e) {
            throw ParseError(e.what(), row);
        }
        if (f.size() != header.size())
            throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                                 std::to_string(f.size()),
                             row);
        RespondentRecord r;
        r.id = f[0];
        if (r.id.empty()) throw ParseError("empty id", row, 1);
        if (!ids.insert(r.id).second) throw ParseError("duplicate id '" + r.id + "'", row, 1);
        try {
            r.arm = parse_arm(f[1]);
        } catch (const InvalidArgument& e) {
            throw ParseError(e.what(), row, 2);
        }
        r.bids = parse_bids(f[2], f[3], row, 3);
        try {
            r.outcome = parse_outcome(f[4]);
        } catch (const InvalidArgument& e) {
            throw ParseError(e.what(), row, 5);
        }
        if (arm_of(r.outcome) != r.arm)
            throw ParseError("outcome " + f[4] + " does not match arm " + f[1], row, 5);
        for (std::size_t j = 0; j < table.covariate_columns.size(); ++j) {
            const std::size_t col = kRespondentLead.size() + j;
            r.covariates[table.covariate_columns[j]] = parse_number(f[col], row, col + 1);
        }
        const std::string& reason = f.back();
        if (!reason.empty()) {
            try {
                r.zero_reason = parse_zero_reason(reason);
            } catch (const InvalidArgument& e) {
                throw ParseError(e.what(), row, header.size());
            }
        }
        if (is_zero_outcome(r.outcome) && !r.zero_reason)
            throw ParseError("zero outcome requires a zero_reason", row, header.size());
        if (!is_zero_outcome(r.outcome) && r.zero_reason)
            throw ParseError("zero_reason given for a non-zero outcome", row, header.size());
        table.records.push_back(std::move(r));
    }
    return table;
}

RespondentTable load_respondents(const std::filesystem::path& path) {
    auto in = open_input(path);
    return parse_respondents(in);
}

void write_respondents(std::ostream& out, const RespondentTable& table) {
    for (auto col : kRespondentLead) out << col << ',';
    for (const auto& c : table.covariate_columns) out << quote_if_needed(c) << ',';
    out << kRespondentTail << '\n';
    for (const auto& r : table.records) {
        out << quote_if_needed(r.id) << ',' << to_string(r.arm) << ','
            << format_number(r.bids.lower) << ',' << format_number(r.bids.upper) << ','
            << to_string(r.outcome) << ',';
        for (const auto& c : table.covariate_columns) {
            const auto it = r.covariates.find(c);
            if (it == r.covariates.end())
                throw InvalidArgument("record '" + r.id + "' lacks covariate '" + c + "'");
            out << format_number(it->second) << ',';
        }
        if (r.zero_reason) out << to_string(*r.zero_reason);
        out << '\n';
    }
}

std::vector<AggregateCell> parse_aggregate(std::istream& in) {
    std::string line;
    if (!next_line(in, line)) throw ParseError("aggregate file is empty");
    const auto header = split_csv_line(line);
    if (header.size() != kAggregateHeader.size())
        throw ParseError("aggregate header must be arm,lower_bid,upper_bid,outcome,count", 1);
    for (std::size_t i = 0; i < kAggregateHeader.size(); ++i)
        if (header[i] != kAggregateHeader[i])
            throw ParseError("expected column '" + std::string(kAggregateHeader[i]) + "'", 1,
                             i + 1);

    std::vector<AggregateCell> cells;
    std::set<std::tuple<Arm, BidPair, Outcome>> keys;
    std::size_t row = 1;
    while (next_line(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != kAggregateHeader.size())
            throw ParseError("expected 5 fields, found " + std::to_string(f.size()), row);
        AggregateCell c;
        try {
            c.arm = parse_arm(f[0]);
        } catch (const InvalidArgument& e) {
            throw ParseError(e.what(), row, 1);
        }
        c.bids = parse_bids(f[1], f[2], row, 2);
        try {
            c.outcome = parse_outcome(f[3]);
        } catch (const InvalidArgument& e) {
            throw ParseError(e.what(), row, 4);
        }
        if (arm_of(c.outcome) != c.arm)
            throw ParseError("outcome " + f[3] + " does not match arm " + f[0], row, 4);
        c.count = parse_count(f[4], row, 5);
        if (!keys.insert(cell_key(c)).second)
            throw ParseError("duplicate (arm, bids, outcome) cell", row);
        cells.push_back(c);
    }
    if (cells.empty()) throw ParseError("aggregate file has no data rows");
    return cells;
}

std::vector<AggregateCell> load_aggregate(const std::filesystem::path& path) {
    auto in = open_input(path);
    return parse_aggregate(in);
}

void write_aggregate(std::ostream& out, std::span<const AggregateCell> cells) {
    for (std::size_t i = 0; i < kAggregateHeader.size(); ++i)
        out << (i ? "," : "") << kAggregateHeader[i];
    out << '\n';
    for (const auto& c : cells)
        out << to_string(c.arm) << ',' << format_number(c.bids.lower) << ','
            << format_number(c.bids.upper) << ',' << to_string(c.outcome) << ',' << c.count
            << '\n';
}

RespondentTable expand(std::span<const AggregateCell> cells) {
    RespondentTable table;
    std::size_t next = 0;
    for (const auto& c : cells) {
        for (std::int64_t i = 0; i < c.count; ++i) {
            RespondentRecord r;
            r.id = "agg-" + std::to_string(++next);
            r.arm = c.arm;
            r.bids = c.bids;
            r.outcome = c.outcome;
            table.records.push_back(std::move(r));
        }
    }
    return table;
}

std::vector<AggregateCell> aggregate(std::span<const RespondentRecord> records) {
    std::map<std::tuple<Arm, BidPair, Outcome>, std::int64_t> counts;
    for (const auto& r : records) ++counts[std::tuple(r.arm, r.bids, r.outcome)];
    std::vector<AggregateCell> cells;
    cells.reserve(counts.size());
    for (const auto& [key, n] : counts)
        cells.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), n});
    return cells;
}

ProtestFiltered apply_protest_policy(std::span<const RespondentRecord> records,
                                     ProtestPolicy policy) {
    ProtestFiltered out;
    out.audit.total = records.size();
    for (const auto& r : records) {
        if (is_zero_outcome(r.outcome)) ++out.audit.zero_responses;
        if (r.protest()) ++out.audit.protest;
        if (policy == ProtestPolicy::Exclude && r.protest() && is_zero_outcome(r.outcome)) {
            ++out.audit.removed;
            continue;
        }
        out.records.push_back(r);
    }
    return out;
}

std::vector<Observation> to_observations(std::span<const RespondentRecord> records,
                                         std::span<const std::string> covariate_names) {
    std::vector<Observation> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        Observation obs;
        obs.censor = outcome_to_interval(r.arm, r.bids, r.outcome);
        obs.covariates.reserve(covariate_names.size());
        for (const auto& name : covariate_names) {
            const auto it = r.covariates.find(name);
            if (it == r.covariates.end())
                throw InvalidArgument("record '" + r.id + "' has no covariate '" + name + "'");
            obs.covariates.push_back(it->second);
        }
        out.push_back(std::move(obs));
    }
    return out;
}

std::vector<Observation> to_observations(std::span<const AggregateCell> cells) {
    std::vector<Observation> out;
    out.reserve(cells.size());
    for (const auto& c : cells) {
        Observation obs;
        obs.censor = outcome_to_interval(c.arm, c.bids, c.outcome);
        obs.censor.weight = c.count;
        out.push_back(std::move(obs));
    }
    return out;
}

double sorted_quantile(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw InvalidArgument("quantile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level must be in [0, 1]");
    const double h = p * static_cast<double>(sorted.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(h));
    if (i + 1 >= sorted.size()) return sorted.back();
    return sorted[i] + (h - static_cast<double>(i)) * (sorted[i + 1] - sorted[i]);
}

BidDesign design_bids(std::span<const double> pilot_wtp, std::size_t n_pairs, double trim) {
    if (n_pairs < 1) throw InvalidArgument("need at least one bid pair");
    if (!(trim >= 0.0 && trim < 0.5)) throw InvalidArgument("trim must be in [0, 0.5)");
    if (pilot_wtp.size() < 20 * n_pairs)
        throw InvalidArgument("pilot sample needs at least " + std::to_string(20 * n_pairs) +
                              " answers, got " + std::to_string(pilot_wtp.size()));
    std::vector<double> sorted(pilot_wtp.begin(), pilot_wtp.end());
    for (double v : sorted)
        if (!std::isfinite(v)) throw InvalidArgument("pilot WTP values must be finite");
    std::sort(sorted.begin(), sorted.end());

    const double lo = sorted_quantile(sorted, trim);
    const double hi = sorted_quantile(sorted, 1.0 - trim);
    std::vector<double> kept;
    std::copy_if(sorted.begin(), sorted.end(), std::back_inserter(kept),
                 [&](double v) { return v >= lo && v <= hi; });
    if (kept.empty() || kept.front() == kept.back())
        throw InvalidArgument("degenerate pilot sample: trimmed values are constant");

    std::vector<double> levels;
    levels.reserve(n_pairs + 1);
    for (std::size_t k = 0; k <= n_pairs; ++k) {
        const double q = sorted_quantile(kept, static_cast<double>(k) / static_cast<double>(n_pairs));
        double level = std::max(kBidScale, std::round(q / kBidScale) * kBidScale);
        if (!levels.empty() && level <= levels.back()) level = levels.back() + kBidScale;
        levels.push_back(level);
    }
    BidDesign design;
    for (std::size_t k = 0; k < n_pairs; ++k) design.pairs.push_back({levels[k], levels[k + 1]});
    design.validate();
    return design;
}

}  // namespace cvm
