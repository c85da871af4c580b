#pragma once

// Questionnaire definition and the per-respondent branching state machine.
// The machine is pure: it never touches storage or clocks.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvm/data_io.hpp"
#include "cvm/model.hpp"

namespace cvm::survey {

/// Answer arrived out of order, twice, or after completion.
class ConflictError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Answer has the wrong type or an out-of-range value for the question.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ItemKind : std::uint8_t { Likert, Categorical, Numeric };

struct ItemOption {
    std::string label;
    double code = 0.0;
};

struct CovariateItem {
    std::string id;
    std::string prompt;
    ItemKind kind = ItemKind::Likert;
    std::vector<ItemOption> options;  // Categorical only
    double min = 1.0, max = 5.0;      // Numeric only
};

struct SurveyDefinition {
    std::string id;
    std::vector<std::string> intro;
    std::string payment_question;  // "{bid}" is replaced by the formatted amount
    std::string spike_question;
    std::string zero_reason_prompt;
    BidDesign design;
    std::vector<CovariateItem> covariate_items;
    std::vector<ZeroReason> zero_reason_options;

    void validate() const;
    static SurveyDefinition from_json(const nlohmann::json& j);
    static SurveyDefinition load(const std::filesystem::path& path);
};

/// "12,000" style thousands grouping.
std::string format_krw(double amount);

enum class Phase : std::uint8_t { Intro, Bid1, Bid2, SpikeQ, ZeroReason, Covariates, Done };

std::string_view to_string(Phase phase) noexcept;

struct QuestionPayload {
    std::uint64_t seq = 0;
    Phase phase = Phase::Intro;
    std::string kind;  // info | yes_no | choice | likert | number
    std::string prompt;
    std::optional<double> bid;  // KRW
    std::string item_id;
    std::vector<nlohmann::json> options;  // {"value": ..., "label": ...}

    nlohmann::json to_json() const;
};

class SurveySession {
public:
    SurveySession(const SurveyDefinition& definition, std::string id, std::size_t pair_index,
                  Arm arm);

    const std::string& id() const noexcept { return id_; }
    Phase phase() const noexcept { return phase_; }
    Arm arm() const noexcept { return arm_; }
    const BidPair& bids() const noexcept { return bids_; }
    std::uint64_t seq() const noexcept { return seq_; }
    std::optional<Outcome> outcome() const noexcept { return outcome_; }

    /// Current question; throws ConflictError once the session is Done.
    QuestionPayload next_question() const;

    /// Applies the answer to question `seq`. Throws ConflictError if `seq` is
    /// not the current question, ValidationError for a bad value.
    void submit_answer(std::uint64_t seq, const nlohmann::json& value);

    /// Completed record; only valid in phase Done.
    RespondentRecord record() const;

private:
    void enter_after_wtp();
    void finish_wtp(Outcome outcome);

    const SurveyDefinition* definition_;
    std::string id_;
    Arm arm_;
    BidPair bids_;
    Phase phase_ = Phase::Intro;
    std::uint64_t seq_ = 1;
    std::optional<Outcome> outcome_;
    std::optional<ZeroReason> zero_reason_;
    std::size_t item_index_ = 0;
    std::map<std::string, double> covariates_;
};

}  // namespace cvm::survey
