#include "cvm/service.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <httplib.h>

#include "cvm/errors.hpp"

namespace cvm::survey {

using nlohmann::json;

ResponseStore::ResponseStore(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream touch(path_, std::ios::app);
    if (!touch) throw InvalidArgument("cannot open response store '" + path_.string() + "'");
}

void ResponseStore::append(const RespondentRecord& record) {
    record.validate();
    json line = record_to_json(record);
    line["completed_at_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                  std::chrono::system_clock::now().time_since_epoch())
                                  .count();
    const std::string text = line.dump() + "\n";
    std::lock_guard lock(mutex_);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw std::runtime_error("failed to append to '" + path_.string() + "'");
}

std::vector<RespondentRecord> ResponseStore::read_all() const {
    std::lock_guard lock(mutex_);
    std::ifstream in(path_);
    if (!in) throw ParseError("cannot open response store '" + path_.string() + "'");
    std::vector<RespondentRecord> out;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        try {
            auto record = record_from_json(json::parse(line));
            record.validate();
            out.push_back(std::move(record));
        } catch (const std::exception& e) {
            throw ParseError(std::string("corrupt store record: ") + e.what(), row);
        }
    }
    return out;
}

json record_to_json(const RespondentRecord& r) {
    json j{{"id", r.id},
           {"arm", std::string(to_string(r.arm))},
           {"lower_bid", r.bids.lower},
           {"upper_bid", r.bids.upper},
           {"outcome", std::string(to_string(r.outcome))},
           {"covariates", r.covariates}};
    j["zero_reason"] = r.zero_reason ? json(std::string(to_string(*r.zero_reason))) : json(nullptr);
    return j;
}

RespondentRecord record_from_json(const json& j) {
    RespondentRecord r;
    r.id = j.at("id").get<std::string>();
    r.arm = parse_arm(j.at("arm").get<std::string>());
    r.bids = {j.at("lower_bid").get<double>(), j.at("upper_bid").get<double>()};
    r.outcome = parse_outcome(j.at("outcome").get<std::string>());
    r.covariates = j.at("covariates").get<std::map<std::string, double>>();
    if (const auto& z = j.at("zero_reason"); !z.is_null())
        r.zero_reason = parse_zero_reason(z.get<std::string>());
    return r;
}

RespondentTable export_responses(const ResponseStore& store) {
    RespondentTable table;
    table.records = store.read_all();
    std::sort(table.records.begin(), table.records.end(),
              [](const auto& x, const auto& y) { return x.id < y.id; });
    std::set<std::string> names;
    for (const auto& r : table.records)
        for (const auto& [name, _] : r.covariates) names.insert(name);
    table.covariate_columns.assign(names.begin(), names.end());
    for (const auto& r : table.records)
        if (r.covariates.size() != names.size())
            throw ParseError("record '" + r.id + "' does not answer every covariate item");
    return table;
}

std::string export_responses_csv(const ResponseStore& store) {
    std::ostringstream out;
    write_respondents(out, export_responses(store));
    return out.str();
}

SurveyService::SurveyService(SurveyDefinition definition, std::filesystem::path store_path,
                             ServiceConfig config)
    : definition_(std::move(definition)),
      store_(std::move(store_path)),
      config_(std::move(config)),
      arm_rng_(config_.seed) {
    definition_.validate();
}

SurveyService::Created SurveyService::create_session() {
    expire_idle(Clock::now());
    std::shared_ptr<Entry> entry;
    std::string id;
    {
        std::lock_guard lock(registry_mutex_);
        id = fmt::format("s{:06d}", ++next_id_);
        const std::size_t pair = next_pair_;
        next_pair_ = (next_pair_ + 1) % definition_.design.pairs.size();
        const Arm arm = std::bernoulli_distribution(0.5)(arm_rng_) ? Arm::UpperFirst : Arm::LowerFirst;
        entry = std::shared_ptr<Entry>(
            new Entry{{}, SurveySession(definition_, id, pair, arm), Clock::now(), false});
        sessions_.emplace(id, entry);
    }
    std::lock_guard lock(entry->mutex);
    return {id, entry->session.next_question()};
}

std::shared_ptr<SurveyService::Entry> SurveyService::find(const std::string& session_id) {
    std::lock_guard lock(registry_mutex_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw NotFoundError("unknown or expired session '" + session_id + "'");
    return it->second;
}

QuestionPayload SurveyService::question(const std::string& session_id) {
    auto entry = find(session_id);
    std::lock_guard lock(entry->mutex);
    entry->last_activity = Clock::now();
    return entry->session.next_question();
}

std::optional<QuestionPayload> SurveyService::answer(const std::string& session_id,
                                                     std::uint64_t seq, const json& value) {
    auto entry = find(session_id);
    std::lock_guard lock(entry->mutex);
    entry->last_activity = Clock::now();
    auto& session = entry->session;
    session.submit_answer(seq, value);
    if (session.phase() != Phase::Done) return session.next_question();
    if (!entry->persisted) {
        store_.append(session.record());
        entry->persisted = true;
    }
    return std::nullopt;
}

std::size_t SurveyService::expire_idle(Clock::time_point now) {
    std::lock_guard lock(registry_mutex_);
    std::size_t removed = 0;
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        bool idle = false;
        {
            std::lock_guard entry_lock(it->second->mutex);
            idle = now - it->second->last_activity > config_.idle_timeout;
        }
        if (idle) {
            it = sessions_.erase(it);
            ++removed;
        } else {
            ++it;
        }
    }
    return removed;
}

std::size_t SurveyService::active_sessions() const {
    std::lock_guard lock(registry_mutex_);
    return sessions_.size();
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
}

template <typename F>
void guarded(httplib::Response& res, F&& body) {
    try {
        body();
    } catch (const NotFoundError& e) {
        send_error(res, 404, e.what());
    } catch (const ConflictError& e) {
        send_error(res, 409, e.what());
    } catch (const ValidationError& e) {
        send_error(res, 422, e.what());
    } catch (const json::exception& e) {
        send_error(res, 400, std::string("malformed request: ") + e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, e.what());
    }
}

bool authorised(const httplib::Request& req, const std::string& token) {
    if (token.empty()) return false;
    if (req.has_param("token") && req.get_param_value("token") == token) return true;
    return req.get_header_value("Authorization") == "Bearer " + token;
}

}  // namespace

void install_routes(httplib::Server& server, SurveyService& service) {
    const std::string origin = service.config().cors_origin;
    server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                                {"Access-Control-Allow-Headers", "Content-Type, Authorization"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}});
    });

    server.Post("/sessions", [&service](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            auto created = service.create_session();
            send_json(res, 201, {{"session_id", created.session_id},
                                 {"survey_id", service.definition().id},
                                 {"intro", service.definition().intro},
                                 {"question", created.question.to_json()}});
        });
    });

    server.Get(R"(/sessions/([A-Za-z0-9_-]+)/question)",
               [&service](const httplib::Request& req, httplib::Response& res) {
                   guarded(res, [&] {
                       const std::string id = req.matches[1];
                       try {
                           send_json(res, 200, service.question(id).to_json());
                       } catch (const ConflictError& e) {
                           send_json(res, 410, {{"error", e.what()}, {"done", true}});
                       }
                   });
               });

    server.Post(R"(/sessions/([A-Za-z0-9_-]+)/answer)",
                [&service](const httplib::Request& req, httplib::Response& res) {
                    guarded(res, [&] {
                        const std::string id = req.matches[1];
                        const json body = json::parse(req.body);
                        const auto seq = body.at("seq").get<std::uint64_t>();
                        const auto next = service.answer(id, seq, body.at("value"));
                        if (next)
                            send_json(res, 200, {{"done", false}, {"question", next->to_json()}});
                        else
                            send_json(res, 200, {{"done", true}});
                    });
                });

    server.Get("/export", [&service](const httplib::Request& req, httplib::Response& res) {
        if (!authorised(req, service.config().export_token)) {
            send_error(res, 401, "export requires a valid token");
            return;
        }
        guarded(res, [&] {
            res.status = 200;
            res.set_content(export_responses_csv(service.store()), "text/csv");
        });
    });
}

}  // namespace cvm::survey
