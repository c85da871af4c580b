#include "cvm/survey.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "cvm/errors.hpp"

namespace cvm::survey {

using nlohmann::json;

namespace {

bool parse_yes_no(const json& v) {
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "yes") return true;
        if (s == "no") return false;
    }
    throw ValidationError("expected \"yes\" or \"no\"");
}

double parse_number(const json& v) {
    if (!v.is_number()) throw ValidationError("expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ValidationError("expected a finite number");
    return x;
}

ItemKind parse_item_kind(const std::string& s) {
    if (s == "likert") return ItemKind::Likert;
    if (s == "categorical") return ItemKind::Categorical;
    if (s == "numeric") return ItemKind::Numeric;
    throw InvalidArgument("unknown covariate item kind '" + s + "'");
}

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    for (std::size_t pos = 0; (pos = text.find(from, pos)) != std::string::npos; pos += to.size())
        text.replace(pos, from.size(), to);
    return text;
}

}  // namespace

std::string_view to_string(Phase phase) noexcept {
    switch (phase) {
        case Phase::Intro: return "intro";
        case Phase::Bid1: return "bid1";
        case Phase::Bid2: return "bid2";
        case Phase::SpikeQ: return "spike";
        case Phase::ZeroReason: return "zero_reason";
        case Phase::Covariates: return "covariates";
        case Phase::Done: return "done";
    }
    return "unknown";
}

std::string format_krw(double amount) {
    auto whole = static_cast<long long>(std::llround(amount));
    const bool negative = whole < 0;
    std::string digits = std::to_string(negative ? -whole : whole);
    std::string out;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
        out += digits[i];
    }
    return negative ? "-" + out : out;
}

void SurveyDefinition::validate() const {
    if (id.empty()) throw InvalidArgument("survey definition needs an id");
    design.validate();
    if (payment_question.find("{bid}") == std::string::npos)
        throw InvalidArgument("payment question must contain a {bid} placeholder");
    bool has_protest = false;
    for (auto r : zero_reason_options) has_protest |= r == ZeroReason::NotEnoughInfo;
    if (!has_protest)
        throw InvalidArgument("zero-WTP reasons must include the protest option not_enough_info");
    std::set<std::string> ids;
    for (const auto& item : covariate_items) {
        if (item.id.empty() || !ids.insert(item.id).second)
            throw InvalidArgument("covariate item ids must be unique and non-empty");
        if (item.kind == ItemKind::Categorical && item.options.empty())
            throw InvalidArgument("categorical item '" + item.id + "' has no options");
        if (item.kind == ItemKind::Numeric && !(item.max >= item.min))
            throw InvalidArgument("numeric item '" + item.id + "' has an empty range");
    }
}

SurveyDefinition SurveyDefinition::from_json(const json& j) {
    SurveyDefinition d;
    try {
        d.id = j.at("id").get<std::string>();
        d.intro = j.at("intro").get<std::vector<std::string>>();
        d.payment_question = j.at("payment_question").get<std::string>();
        d.spike_question = j.at("spike_question").get<std::string>();
        d.zero_reason_prompt = j.at("zero_reason_prompt").get<std::string>();
        for (const auto& p : j.at("design")) d.design.pairs.push_back({p.at(0), p.at(1)});
        for (const auto& r : j.at("zero_reason_options"))
            d.zero_reason_options.push_back(parse_zero_reason(r.get<std::string>()));
        for (const auto& it : j.value("covariate_items", json::array())) {
            CovariateItem item;
            item.id = it.at("id").get<std::string>();
            item.prompt = it.at("prompt").get<std::string>();
            item.kind = parse_item_kind(it.at("kind").get<std::string>());
            for (const auto& o : it.value("options", json::array()))
                item.options.push_back({o.at("label").get<std::string>(), o.at("code").get<double>()});
            item.min = it.value("min", 1.0);
            item.max = it.value("max", 5.0);
            d.covariate_items.push_back(std::move(item));
        }
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed survey definition: ") + e.what());
    }
    d.validate();
    return d;
}

SurveyDefinition SurveyDefinition::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open survey definition '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InvalidArgument("survey definition '" + path.string() + "' is not JSON: " + e.what());
    }
    return from_json(j);
}

json QuestionPayload::to_json() const {
    json j{{"seq", seq}, {"phase", std::string(cvm::survey::to_string(phase))}, {"kind", kind},
           {"prompt", prompt}};
    if (bid) {
        j["bid"] = *bid;
        j["bid_text"] = "KRW " + format_krw(*bid);
    }
    if (!item_id.empty()) j["item_id"] = item_id;
    if (!options.empty()) j["options"] = options;
    return j;
}

SurveySession::SurveySession(const SurveyDefinition& definition, std::string id,
                             std::size_t pair_index, Arm arm)
    : definition_(&definition),
      id_(std::move(id)),
      arm_(arm),
      bids_(definition.design.pairs.at(pair_index)) {}

QuestionPayload SurveySession::next_question() const {
    const auto& def = *definition_;
    QuestionPayload q;
    q.seq = seq_;
    q.phase = phase_;
    auto payment = [&](double bid) {
        q.kind = "yes_no";
        q.bid = bid;
        q.prompt = replace_all(def.payment_question, "{bid}", format_krw(bid));
    };
    switch (phase_) {
        case Phase::Intro:
            q.kind = "info";
            for (const auto& block : def.intro) q.prompt += (q.prompt.empty() ? "" : "\n\n") + block;
            q.options.push_back({{"value", "continue"}, {"label", "Continue"}});
            break;
        case Phase::Bid1:
            payment(arm_ == Arm::UpperFirst ? bids_.upper : bids_.lower);
            break;
        case Phase::Bid2:
            payment(arm_ == Arm::UpperFirst ? bids_.lower : bids_.upper);
            break;
        case Phase::SpikeQ:
            q.kind = "yes_no";
            q.prompt = def.spike_question;
            break;
        case Phase::ZeroReason:
            q.kind = "choice";
            q.prompt = def.zero_reason_prompt;
            for (auto r : def.zero_reason_options)
                q.options.push_back({{"value", std::string(cvm::to_string(r))},
                                     {"label", std::string(describe(r))}});
            break;
        case Phase::Covariates: {
            const auto& item = def.covariate_items.at(item_index_);
            q.item_id = item.id;
            q.prompt = item.prompt;
            switch (item.kind) {
                case ItemKind::Likert:
                    q.kind = "likert";
                    for (int v = 1; v <= 5; ++v) q.options.push_back({{"value", v}, {"label", std::to_string(v)}});
                    break;
                case ItemKind::Categorical:
                    q.kind = "choice";
                    for (const auto& o : item.options)
                        q.options.push_back({{"value", o.code}, {"label", o.label}});
                    break;
                case ItemKind::Numeric:
                    q.kind = "number";
                    q.options.push_back({{"min", item.min}, {"max", item.max}});
                    break;
            }
            break;
        }
        case Phase::Done:
            throw ConflictError("session " + id_ + " is complete; no more questions");
    }
    return q;
}

void SurveySession::finish_wtp(Outcome outcome) {
    outcome_ = outcome;
    if (is_zero_outcome(outcome)) {
        phase_ = Phase::ZeroReason;
    } else {
        enter_after_wtp();
    }
}

void SurveySession::enter_after_wtp() {
    item_index_ = 0;
    phase_ = definition_->covariate_items.empty() ? Phase::Done : Phase::Covariates;
}

void SurveySession::submit_answer(std::uint64_t seq, const json& value) {
    if (phase_ == Phase::Done) throw ConflictError("session " + id_ + " is already complete");
    if (seq != seq_)
        throw ConflictError("answer is for question " + std::to_string(seq) +
                            " but the current question is " + std::to_string(seq_));
    const bool upper_first = arm_ == Arm::UpperFirst;
    switch (phase_) {
        case Phase::Intro:
            if (value != "continue") throw ValidationError("expected \"continue\"");
            phase_ = Phase::Bid1;
            break;
        case Phase::Bid1: {
            const bool yes = parse_yes_no(value);
            if (upper_first) {
                if (yes) finish_wtp(Outcome::U_Y);
                else phase_ = Phase::Bid2;
            } else {
                phase_ = yes ? Phase::Bid2 : Phase::SpikeQ;
            }
            break;
        }
        case Phase::Bid2: {
            const bool yes = parse_yes_no(value);
            if (upper_first) {
                if (yes) finish_wtp(Outcome::U_NY);
                else phase_ = Phase::SpikeQ;
            } else {
                finish_wtp(yes ? Outcome::L_YY : Outcome::L_YN);
            }
            break;
        }
        case Phase::SpikeQ: {
            const bool yes = parse_yes_no(value);
            if (upper_first) finish_wtp(yes ? Outcome::U_NNY : Outcome::U_NNN);
            else finish_wtp(yes ? Outcome::L_NY : Outcome::L_NN);
            break;
        }
        case Phase::ZeroReason: {
            if (!value.is_string()) throw ValidationError("expected a zero-WTP reason code");
            ZeroReason reason;
            try {
                reason = parse_zero_reason(value.get<std::string>());
            } catch (const InvalidArgument& e) {
                throw ValidationError(e.what());
            }
            const auto& opts = definition_->zero_reason_options;
            if (std::find(opts.begin(), opts.end(), reason) == opts.end())
                throw ValidationError("reason is not offered by this survey");
            zero_reason_ = reason;
            enter_after_wtp();
            break;
        }
        case Phase::Covariates: {
            const auto& item = definition_->covariate_items.at(item_index_);
            const double x = parse_number(value);
            switch (item.kind) {
                case ItemKind::Likert:
                    if (x != std::floor(x) || x < 1 || x > 5)
                        throw ValidationError("Likert answers are integers 1..5");
                    break;
                case ItemKind::Categorical: {
                    bool found = false;
                    for (const auto& o : item.options) found |= o.code == x;
                    if (!found) throw ValidationError("not one of the offered options");
                    break;
                }
                case ItemKind::Numeric:
                    if (x < item.min || x > item.max) throw ValidationError("value out of range");
                    break;
            }
            covariates_[item.id] = x;
            if (++item_index_ == definition_->covariate_items.size()) phase_ = Phase::Done;
            break;
        }
        case Phase::Done:
            break;
    }
    ++seq_;
}

RespondentRecord SurveySession::record() const {
    if (phase_ != Phase::Done || !outcome_)
        throw ConflictError("session " + id_ + " is not complete");
    RespondentRecord r;
    r.id = id_;
    r.arm = arm_;
    r.bids = bids_;
    r.outcome = *outcome_;
    r.covariates = covariates_;
    r.zero_reason = zero_reason_;
    return r;
}

}  // namespace cvm::survey
