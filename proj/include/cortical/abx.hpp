#pragma once

// AB-X match-to-sample experiment: trial plans, an independent plan auditor,
// session persistence and scoring. The HTTP layer lives in abx_server.hpp.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cortical/common.hpp"

namespace cortical::abx {

class NotFound : public Error {
public:
    using Error::Error;
};

/// Duplicate or out-of-order submission, or a session past its time cap.
class Conflict : public Error {
public:
    using Error::Error;
};

inline constexpr std::size_t kMainTrials = 24;
inline constexpr std::size_t kPracticeTrials = 4;
inline constexpr std::size_t kPoolSize = 48;
inline constexpr std::size_t kPlanClips = 24;
inline constexpr std::int64_t kSessionCapMs = 30 * 60 * 1000;
inline constexpr std::int64_t kPresentationSoftLimitMs = 60 * 1000;
inline constexpr std::uint32_t kSongSeconds = 240;

/// A reconstructed 5 s clip.
struct ClipInfo {
    std::string clip_id;
    std::uint16_t song_id = 0;
    std::uint16_t participant_id = 0;
    std::uint32_t start_second = 0;
};

/// A 5 s excerpt of the original stimulus.
struct OriginalInfo {
    std::string clip_id;
    std::uint16_t song_id = 0;
    std::uint32_t start_second = 0;
};

enum class Side { A, B };
const char* to_string(Side s);
Side parse_side(const std::string& s);

struct Trial {
    std::string trial_id;
    bool practice = false;
    std::uint16_t song_id = 0;  // song of X and of the match
    std::string x_clip;
    std::string a_clip;
    std::string b_clip;
    Side correct = Side::A;

    const std::string& match_clip() const { return correct == Side::A ? a_clip : b_clip; }
    const std::string& foil_clip() const { return correct == Side::A ? b_clip : a_clip; }
    bool operator==(const Trial&) const = default;
};

struct TrialPlan {
    int version = 1;
    std::vector<Trial> practice;
    std::vector<Trial> main;
    std::vector<std::string> clip_pool;  // the 24 reconstructions this plan uses

    /// Practice trials first, then main trials.
    std::vector<const Trial*> ordered() const;
    bool operator==(const TrialPlan&) const = default;
};

/// Beginning, middle or end third of the 240 s song (0, 1, 2).
int song_third(std::uint32_t start_second);

/// Splits a 48-clip pool (4 songs x 12) into two disjoint 24-clip plans.
/// In each plan every clip is the match of exactly one main trial and the
/// foil of exactly one other, so no clip repeats within a role. Practice
/// trials reuse plan clips and are never scored. Throws PlanningError naming
/// the violated constraint when the pool cannot satisfy the balance rules.
std::pair<TrialPlan, TrialPlan> generate_plans(const std::vector<ClipInfo>& clips,
                                               const std::vector<OriginalInfo>& originals, std::uint64_t seed);

/// Checks a plan against the pool without reusing generator code. Returns the
/// list of violated constraints (empty when the plan is valid).
std::vector<std::string> audit_plan(const TrialPlan& plan, const std::vector<ClipInfo>& clips,
                                    const std::vector<OriginalInfo>& originals);
/// audit_plan on both plans plus disjointness of their clip sets.
std::vector<std::string> audit_plans(const std::pair<TrialPlan, TrialPlan>& plans, const std::vector<ClipInfo>& clips,
                                     const std::vector<OriginalInfo>& originals);

// ---------------------------------------------------------------------------
// Sessions

struct Listens {
    std::uint32_t x = 0, a = 0, b = 0;
    bool operator==(const Listens&) const = default;
};

struct Response {
    std::string trial_id;
    Side choice = Side::A;
    Listens listens;
    std::int64_t elapsed_ms = 0;   // reported by the client
    std::int64_t received_ms = 0;  // server clock
    bool over_minute = false;      // presentation exceeded the 1-minute soft limit
    bool operator==(const Response&) const = default;
};

struct SessionRecord {
    std::string session_id;
    int plan_version = 1;
    std::vector<Response> responses;
    std::int64_t started_ms = 0;
    std::optional<std::int64_t> completed_ms;
    bool operator==(const SessionRecord&) const = default;
};

struct SessionScore {
    std::string session_id;
    int plan_version = 1;
    std::size_t correct = 0;
    std::size_t answered = 0;  // main trials only
    /// Percent of main trials answered correctly: correct / 24, or correct /
    /// answered for a partial session.
    double success_rate = 0.0;
    bool partial = false;
    std::map<std::uint16_t, std::pair<std::size_t, std::size_t>> per_song;  // song -> (correct, answered)
};

SessionScore score_session(const SessionRecord& record, const TrialPlan& plan);

struct AggregateScore {
    std::size_t sessions = 0;
    double mean = 0.0, max = 0.0, min = 0.0;
};
AggregateScore aggregate(const std::vector<SessionScore>& scores);

/// Percent with two decimals, e.g. "95.83".
std::string format_rate(double percent);

/// What a client sees of the current trial: no song, participant or answer.
struct TrialView {
    std::string trial_id;
    std::size_t index = 0;  // 0-based over practice + main
    std::size_t total = 0;
    bool practice = false;
    std::string x_clip, a_clip, b_clip;
    std::int64_t session_elapsed_ms = 0;
};

/// Sessions with a write-ahead NDJSON log. Every mutation is appended and
/// fsynced before the call returns, and the log is replayed on construction.
class SessionStore {
public:
    using Clock = std::function<std::int64_t()>;

    SessionStore(std::filesystem::path data_dir, std::pair<TrialPlan, TrialPlan> plans, Clock clock = {},
                 std::function<std::string()> id_source = {});

    SessionRecord create();
    /// std::nullopt once every trial has a response.
    std::optional<TrialView> next_trial(const std::string& session_id);
    /// NotFound, Conflict (duplicate, out of order, finished or past the cap), InvalidInput.
    Response submit(const std::string& session_id, const std::string& trial_id, Side choice, Listens listens,
                    std::int64_t elapsed_ms);
    SessionRecord finish(const std::string& session_id);

    SessionRecord get(const std::string& session_id) const;
    std::vector<SessionRecord> sessions() const;
    const TrialPlan& plan(int version) const;
    SessionScore score(const std::string& session_id) const;
    std::vector<SessionScore> scores() const;

    const std::filesystem::path& log_path() const { return log_path_; }

private:
    struct State {
        SessionRecord record;
        std::map<std::string, std::int64_t> served_ms;  // trial id -> first time served
    };
    void append(const std::string& line);
    void replay();
    State& find(const std::string& id);
    const State& find(const std::string& id) const;

    std::filesystem::path dir_, log_path_;
    std::pair<TrialPlan, TrialPlan> plans_;
    Clock clock_;
    std::function<std::string()> id_source_;
    mutable std::mutex mu_;
    std::map<std::string, State> sessions_;
    std::size_t created_ = 0;
    int log_fd_ = -1;

public:
    ~SessionStore();
    SessionStore(const SessionStore&) = delete;
    SessionStore& operator=(const SessionStore&) = delete;
};

// JSON round trips for plans and the clip manifest written by the invert command.
std::string plan_to_json(const TrialPlan& plan);
TrialPlan plan_from_json(const std::string& text);

struct ClipManifest {
    std::vector<ClipInfo> reconstructions;
    std::vector<OriginalInfo> originals;
    std::map<std::string, std::string> files;  // clip id -> file name relative to the manifest
};
std::string manifest_to_json(const ClipManifest& m);
ClipManifest manifest_from_json(const std::string& text);

}  // namespace cortical::abx
