#pragma once

// Survey administration service: session registry, append-only response
// store, CSV export, and the HTTP front end.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "cvm/data_io.hpp"
#include "cvm/survey.hpp"

namespace httplib {
class Server;
}

namespace cvm::survey {

class NotFoundError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One JSON document per completed session, one per line. Appends are
/// serialised and flushed; existing lines are never rewritten.
class ResponseStore {
public:
    explicit ResponseStore(std::filesystem::path path);

    void append(const RespondentRecord& record);
    /// Throws ParseError naming the 1-based line of a corrupt record.
    std::vector<RespondentRecord> read_all() const;
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    mutable std::mutex mutex_;
};

nlohmann::json record_to_json(const RespondentRecord& record);
RespondentRecord record_from_json(const nlohmann::json& j);

/// Respondent CSV of every completed record, rows sorted by id; covariate
/// columns are the sorted union of covariate names.
RespondentTable export_responses(const ResponseStore& store);
std::string export_responses_csv(const ResponseStore& store);

struct ServiceConfig {
    std::uint64_t seed = 1;
    std::chrono::seconds idle_timeout{24 * 60 * 60};
    std::string export_token;
    std::string cors_origin = "*";
};

class SurveyService {
public:
    using Clock = std::chrono::steady_clock;

    SurveyService(SurveyDefinition definition, std::filesystem::path store_path,
                  ServiceConfig config);

    struct Created {
        std::string session_id;
        QuestionPayload question;
    };

    Created create_session();
    QuestionPayload question(const std::string& session_id);
    /// Returns the next question, or nullopt once the session completed.
    std::optional<QuestionPayload> answer(const std::string& session_id, std::uint64_t seq,
                                          const nlohmann::json& value);
    /// Drops sessions idle for longer than the configured timeout.
    std::size_t expire_idle(Clock::time_point now);
    std::size_t active_sessions() const;

    const SurveyDefinition& definition() const noexcept { return definition_; }
    const ResponseStore& store() const noexcept { return store_; }
    const ServiceConfig& config() const noexcept { return config_; }

private:
    struct Entry {
        std::mutex mutex;
        SurveySession session;
        Clock::time_point last_activity;
        bool persisted = false;
    };

    std::shared_ptr<Entry> find(const std::string& session_id);

    SurveyDefinition definition_;
    ResponseStore store_;
    ServiceConfig config_;
    mutable std::mutex registry_mutex_;
    std::unordered_map<std::string, std::shared_ptr<Entry>> sessions_;
    std::mt19937_64 arm_rng_;
    std::uint64_t next_id_ = 0;
    std::size_t next_pair_ = 0;
};

/// Registers the HTTP+JSON routes on `server`.
void install_routes(httplib::Server& server, SurveyService& service);

}  // namespace cvm::survey
