#include "cortical/abx.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cortical::abx {

using nlohmann::json;

const char* to_string(Side s) { return s == Side::A ? "A" : "B"; }

Side parse_side(const std::string& s) {
    if (s == "A" || s == "a") return Side::A;
    if (s == "B" || s == "b") return Side::B;
    throw InvalidInput("choice must be \"A\" or \"B\", got \"" + s + "\"");
}

std::vector<const Trial*> TrialPlan::ordered() const {
    std::vector<const Trial*> out;
    for (const auto& t : practice) out.push_back(&t);
    for (const auto& t : main) out.push_back(&t);
    return out;
}

int song_third(std::uint32_t start_second) {
    return std::min(2, static_cast<int>(start_second * 3 / kSongSeconds));
}

// ---------------------------------------------------------------------------
// Plan generation

namespace {

using Rng = std::mt19937_64;

struct Pool {
    std::vector<std::uint16_t> songs;                                 // ascending
    std::map<std::uint16_t, std::vector<const ClipInfo*>> by_song;
    std::map<std::pair<std::uint16_t, std::uint32_t>, std::string> original_of;  // (song, start) -> id
    std::size_t per_song_plan = 0;                                    // main trials per song in one plan
};

Pool index_pool(const std::vector<ClipInfo>& clips, const std::vector<OriginalInfo>& originals) {
    if (clips.size() != kPoolSize)
        throw PlanningError("pool size: need 48 reconstructions, got " + std::to_string(clips.size()));
    Pool p;
    std::set<std::string> ids;
    for (const auto& c : clips) {
        if (!ids.insert(c.clip_id).second) throw PlanningError("unique clips: duplicate clip id " + c.clip_id);
        p.by_song[c.song_id].push_back(&c);
    }
    for (const auto& o : originals) p.original_of[{o.song_id, o.start_second}] = o.clip_id;
    for (const auto& [song, v] : p.by_song) p.songs.push_back(song);

    const std::size_t n_songs = p.songs.size();
    if (n_songs < 2) throw PlanningError("foil from another song: pool has fewer than two songs");
    if (kMainTrials % n_songs != 0)
        throw PlanningError("equal trials per song: 24 trials cannot be split over " + std::to_string(n_songs) +
                            " songs");
    p.per_song_plan = kMainTrials / n_songs;
    for (const auto& [song, v] : p.by_song)
        if (v.size() != 2 * p.per_song_plan)
            throw PlanningError("equal trials per song: song " + std::to_string(song) + " has " +
                                std::to_string(v.size()) + " clips, need " + std::to_string(2 * p.per_song_plan));
    if (p.per_song_plan % 3 != 0)
        throw PlanningError("thirds balance: " + std::to_string(p.per_song_plan) +
                            " trials per song cannot be split over three thirds");
    for (const auto& [song, v] : p.by_song) {
        std::size_t per_third[3] = {0, 0, 0};
        for (const auto* c : v) {
            if (c->start_second + 5 > kSongSeconds)
                throw PlanningError("clip window: " + c->clip_id + " starts past the usable 240 s");
            ++per_third[song_third(c->start_second)];
            if (!p.original_of.count({c->song_id, c->start_second}))
                throw PlanningError("matching excerpt: no original excerpt for song " + std::to_string(c->song_id) +
                                    " at " + std::to_string(c->start_second) + " s");
        }
        for (int t = 0; t < 3; ++t)
            if (per_third[t] != 2 * p.per_song_plan / 3)
                throw PlanningError("thirds balance: song " + std::to_string(song) + " has " +
                                    std::to_string(per_third[t]) + " clips in third " + std::to_string(t) +
                                    ", need " + std::to_string(2 * p.per_song_plan / 3));
    }
    return p;
}

bool participants_feasible(const std::vector<const ClipInfo*>& clips) {
    std::map<std::uint16_t, std::size_t> n;
    std::size_t most = 0;
    for (const auto* c : clips) most = std::max(most, ++n[c->participant_id]);
    return most <= (clips.size() + 1) / 2;
}

// Orders one song's match clips so that neighbours come from different
// participants: always take the participant with the most clips left
// (random tie break) that differs from the previous one.
std::vector<const ClipInfo*> order_by_participant(std::vector<const ClipInfo*> clips, Rng& rng) {
    cortical::shuffle(clips.begin(), clips.end(), rng);
    std::vector<const ClipInfo*> out;
    std::optional<std::uint16_t> last;
    while (!clips.empty()) {
        std::map<std::uint16_t, std::size_t> left;
        for (const auto* c : clips) ++left[c->participant_id];
        std::size_t best_i = clips.size();
        for (std::size_t i = 0; i < clips.size(); ++i) {
            if (last && clips[i]->participant_id == *last && left.size() > 1) continue;
            if (best_i == clips.size() || left[clips[i]->participant_id] > left[clips[best_i]->participant_id])
                best_i = i;
        }
        last = clips[best_i]->participant_id;
        out.push_back(clips[best_i]);
        clips.erase(clips.begin() + static_cast<std::ptrdiff_t>(best_i));
    }
    return out;
}

TrialPlan build_plan(int version, const Pool& pool, const std::map<std::uint16_t, std::vector<const ClipInfo*>>& mine,
                     Rng& rng) {
    const std::size_t S = pool.songs.size(), n = pool.per_song_plan;
    TrialPlan plan;
    plan.version = version;
    for (const auto& [song, v] : mine)
        for (const auto* c : v) plan.clip_pool.push_back(c->clip_id);
    std::sort(plan.clip_pool.begin(), plan.clip_pool.end());

    // Foils on a circulant schedule: song s draws c_d foils from song s + d,
    // so every clip is a foil exactly once and never for its own song.
    std::vector<std::size_t> c(S, 0);
    for (std::size_t d = 1; d < S; ++d) c[d] = n / (S - 1) + (d <= n % (S - 1) ? 1 : 0);
    std::map<std::uint16_t, std::vector<const ClipInfo*>> foils_for;
    for (std::size_t t = 0; t < S; ++t) {
        auto give = mine.at(pool.songs[t]);
        cortical::shuffle(give.begin(), give.end(), rng);
        std::size_t k = 0;
        for (std::size_t d = 1; d < S; ++d) {
            const std::uint16_t receiver = pool.songs[(t + S - d) % S];
            for (std::size_t j = 0; j < c[d]; ++j) foils_for[receiver].push_back(give[k++]);
        }
    }

    // Per-song trial sequences, then a random interleaving of the songs.
    std::map<std::uint16_t, std::vector<Trial>> seq;
    for (const auto song : pool.songs) {
        auto matches = order_by_participant(mine.at(song), rng);
        auto foils = foils_for[song];
        cortical::shuffle(foils.begin(), foils.end(), rng);
        for (std::size_t i = 0; i < n; ++i) {
            Trial t;
            t.song_id = song;
            t.x_clip = pool.original_of.at({song, matches[i]->start_second});
            t.a_clip = matches[i]->clip_id;  // sides are assigned below
            t.b_clip = foils[i]->clip_id;
            seq[song].push_back(std::move(t));
        }
    }
    std::vector<std::uint16_t> slots;
    for (const auto song : pool.songs) slots.insert(slots.end(), n, song);
    cortical::shuffle(slots.begin(), slots.end(), rng);
    std::map<std::uint16_t, std::size_t> next;
    for (const auto song : slots) plan.main.push_back(seq[song][next[song]++]);

    std::vector<Side> sides(kMainTrials / 2, Side::A);
    sides.resize(kMainTrials, Side::B);
    cortical::shuffle(sides.begin(), sides.end(), rng);
    char id[32];
    for (std::size_t i = 0; i < plan.main.size(); ++i) {
        auto& t = plan.main[i];
        t.correct = sides[i];
        if (t.correct == Side::B) std::swap(t.a_clip, t.b_clip);
        std::snprintf(id, sizeof id, "v%d-m%02zu", version, i + 1);
        t.trial_id = id;
    }

    // Practice: one trial per song (cycling), reusing plan clips.
    for (std::size_t i = 0; i < kPracticeTrials; ++i) {
        const auto song = pool.songs[i % S];
        const auto& own = mine.at(song);
        const auto* match = own[rng() % own.size()];
        const auto other_song = pool.songs[(i % S + 1 + rng() % (S - 1)) % S];
        const auto& other = mine.at(other_song);
        const auto* foil = other[rng() % other.size()];
        Trial t;
        t.practice = true;
        t.song_id = song;
        t.x_clip = pool.original_of.at({song, match->start_second});
        t.correct = rng() % 2 ? Side::A : Side::B;
        t.a_clip = t.correct == Side::A ? match->clip_id : foil->clip_id;
        t.b_clip = t.correct == Side::A ? foil->clip_id : match->clip_id;
        std::snprintf(id, sizeof id, "v%d-p%zu", version, i + 1);
        t.trial_id = id;
        plan.practice.push_back(std::move(t));
    }
    return plan;
}

}  // namespace

std::pair<TrialPlan, TrialPlan> generate_plans(const std::vector<ClipInfo>& clips,
                                               const std::vector<OriginalInfo>& originals, std::uint64_t seed) {
    const Pool pool = index_pool(clips, originals);
    Rng rng(derive_seed(seed, 0xAB));

    // Split every (song, third) group in half between the versions. Retry a
    // few splits to find one where each song's participants can alternate.
    std::map<std::uint16_t, std::vector<const ClipInfo*>> first, second;
    for (int attempt = 0; attempt < 64; ++attempt) {
        first.clear();
        second.clear();
        for (const auto song : pool.songs) {
            std::vector<const ClipInfo*> third[3];
            for (const auto* c : pool.by_song.at(song)) third[song_third(c->start_second)].push_back(c);
            for (auto& g : third) {
                std::sort(g.begin(), g.end(), [](auto* a, auto* b) { return a->clip_id < b->clip_id; });
                cortical::shuffle(g.begin(), g.end(), rng);
                first[song].insert(first[song].end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(g.size() / 2));
                second[song].insert(second[song].end(), g.begin() + static_cast<std::ptrdiff_t>(g.size() / 2), g.end());
            }
        }
        bool ok = true;
        for (const auto song : pool.songs)
            ok = ok && participants_feasible(first[song]) && participants_feasible(second[song]);
        if (ok) break;
    }
    TrialPlan a = build_plan(1, pool, first, rng);
    TrialPlan b = build_plan(2, pool, second, rng);
    return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Independent auditor. Recomputes every constraint from the raw trial list.

std::vector<std::string> audit_plan(const TrialPlan& plan, const std::vector<ClipInfo>& clips,
                                    const std::vector<OriginalInfo>& originals) {
    std::vector<std::string> v;
    auto fail = [&](const std::string& s) { v.push_back(s); };

    std::map<std::string, const ClipInfo*> clip;
    for (const auto& c : clips) clip[c.clip_id] = &c;
    std::map<std::string, const OriginalInfo*> orig;
    for (const auto& o : originals) orig[o.clip_id] = &o;
    std::set<std::uint16_t> pool_songs;
    for (const auto& c : clips) pool_songs.insert(c.song_id);

    if (plan.version != 1 && plan.version != 2) fail("version must be 1 or 2");
    if (plan.main.size() != 24) fail("main trial count is " + std::to_string(plan.main.size()) + ", expected 24");
    if (plan.practice.size() != 4) fail("practice trial count is " + std::to_string(plan.practice.size()) + ", expected 4");

    const std::set<std::string> plan_clips(plan.clip_pool.begin(), plan.clip_pool.end());
    if (plan_clips.size() != 24 || plan.clip_pool.size() != 24) fail("plan must list 24 distinct clips");

    auto check_trial = [&](const Trial& t) {
        const std::string tag = "trial " + t.trial_id + ": ";
        if (t.a_clip == t.b_clip) fail(tag + "A and B are the same clip");
        const auto xi = orig.find(t.x_clip);
        const auto mi = clip.find(t.match_clip());
        const auto fi = clip.find(t.foil_clip());
        if (xi == orig.end()) return fail(tag + "X is not an original excerpt");
        if (mi == clip.end() || fi == clip.end()) return fail(tag + "A/B clip not in the pool");
        if (!plan_clips.count(t.match_clip()) || !plan_clips.count(t.foil_clip()))
            fail(tag + "A/B clip outside this plan's clip set");
        if (mi->second->song_id != xi->second->song_id || mi->second->start_second != xi->second->start_second)
            fail(tag + "match does not cover the X interval");
        if (fi->second->song_id == xi->second->song_id) fail(tag + "foil comes from the X song");
        if (t.song_id != xi->second->song_id) fail(tag + "song label disagrees with X");
    };
    for (const auto& t : plan.practice) {
        if (!t.practice) fail("trial " + t.trial_id + " in the practice block is not marked practice");
        check_trial(t);
    }

    std::map<std::uint16_t, std::size_t> per_song, foil_per_song;
    std::map<std::uint16_t, std::array<std::size_t, 3>> thirds;
    std::map<std::string, std::size_t> as_match, as_foil;
    std::map<std::uint16_t, std::vector<std::uint16_t>> participants;
    std::size_t a_correct = 0;
    for (const auto& t : plan.main) {
        if (t.practice) fail("trial " + t.trial_id + " in the main block is marked practice");
        check_trial(t);
        const auto xi = orig.find(t.x_clip);
        const auto mi = clip.find(t.match_clip());
        const auto fi = clip.find(t.foil_clip());
        if (xi == orig.end() || mi == clip.end() || fi == clip.end()) continue;
        const std::uint16_t song = xi->second->song_id;
        ++per_song[song];
        ++thirds[song][static_cast<std::size_t>(std::min<std::uint32_t>(2, mi->second->start_second / 80))];
        ++as_match[t.match_clip()];
        ++as_foil[t.foil_clip()];
        ++foil_per_song[fi->second->song_id];
        participants[song].push_back(mi->second->participant_id);
        if (t.correct == Side::A) ++a_correct;
    }

    for (const auto song : pool_songs) {
        const std::size_t want = 24 / pool_songs.size();
        if (per_song[song] != want)
            fail("song " + std::to_string(song) + " has " + std::to_string(per_song[song]) + " trials, expected " +
                 std::to_string(want));
        for (int k = 0; k < 3; ++k)
            if (thirds[song][static_cast<std::size_t>(k)] * 3 != want)
                fail("song " + std::to_string(song) + " third " + std::to_string(k) + " has " +
                     std::to_string(thirds[song][static_cast<std::size_t>(k)]) + " match clips");
    }
    if (a_correct != 12) fail("correct answer is A in " + std::to_string(a_correct) + " of 24 trials");
    for (const auto& [id, n] : as_match)
        if (n > 1) fail("clip " + id + " is the match " + std::to_string(n) + " times");
    for (const auto& [id, n] : as_foil)
        if (n > 1) fail("clip " + id + " is the foil " + std::to_string(n) + " times");
    if (!foil_per_song.empty()) {
        std::size_t lo = SIZE_MAX, hi = 0;
        for (const auto song : pool_songs) {
            lo = std::min(lo, foil_per_song[song]);
            hi = std::max(hi, foil_per_song[song]);
        }
        if (hi - lo > 1) fail("foil usage per song ranges from " + std::to_string(lo) + " to " + std::to_string(hi));
    }
    for (const auto& [song, seq] : participants) {
        std::map<std::uint16_t, std::size_t> count;
        std::size_t most = 0;
        for (auto p : seq) most = std::max(most, ++count[p]);
        const bool possible = most * 2 <= seq.size() + 1;
        if (!possible) continue;
        for (std::size_t i = 1; i < seq.size(); ++i)
            if (seq[i] == seq[i - 1]) {
                fail("song " + std::to_string(song) + " repeats participant " + std::to_string(seq[i]) +
                     " in consecutive trials");
                break;
            }
    }
    return v;
}

std::vector<std::string> audit_plans(const std::pair<TrialPlan, TrialPlan>& plans, const std::vector<ClipInfo>& clips,
                                     const std::vector<OriginalInfo>& originals) {
    std::vector<std::string> v;
    for (const auto* p : {&plans.first, &plans.second})
        for (auto& s : audit_plan(*p, clips, originals)) v.push_back("version " + std::to_string(p->version) + ": " + s);
    if (plans.first.version == plans.second.version) v.push_back("both plans carry the same version");
    const std::set<std::string> a(plans.first.clip_pool.begin(), plans.first.clip_pool.end());
    for (const auto& id : plans.second.clip_pool)
        if (a.count(id)) v.push_back("clip " + id + " appears in both versions");
    return v;
}

// ---------------------------------------------------------------------------
// Scoring

SessionScore score_session(const SessionRecord& record, const TrialPlan& plan) {
    std::map<std::string, const Trial*> main;
    for (const auto& t : plan.main) main[t.trial_id] = &t;
    SessionScore s;
    s.session_id = record.session_id;
    s.plan_version = record.plan_version;
    for (const auto& r : record.responses) {
        const auto it = main.find(r.trial_id);
        if (it == main.end()) continue;  // practice
        auto& song = s.per_song[it->second->song_id];
        ++s.answered;
        ++song.second;
        if (r.choice == it->second->correct) {
            ++s.correct;
            ++song.first;
        }
    }
    s.partial = s.answered < kMainTrials;
    const std::size_t denom = s.partial ? s.answered : kMainTrials;
    s.success_rate = denom ? 100.0 * static_cast<double>(s.correct) / static_cast<double>(denom) : 0.0;
    return s;
}

AggregateScore aggregate(const std::vector<SessionScore>& scores) {
    AggregateScore a;
    a.sessions = scores.size();
    if (scores.empty()) return a;
    a.min = a.max = scores.front().success_rate;
    double sum = 0.0;
    for (const auto& s : scores) {
        sum += s.success_rate;
        a.min = std::min(a.min, s.success_rate);
        a.max = std::max(a.max, s.success_rate);
    }
    a.mean = sum / static_cast<double>(scores.size());
    return a;
}

std::string format_rate(double percent) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", percent);
    return buf;
}

// ---------------------------------------------------------------------------
// Session store

namespace {

std::int64_t system_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::string random_id() {
    static std::mutex m;
    static std::mt19937_64 rng{std::random_device{}() ^ static_cast<std::uint64_t>(system_ms())};
    std::lock_guard lock(m);
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
    return buf;
}

}  // namespace

SessionStore::SessionStore(std::filesystem::path data_dir, std::pair<TrialPlan, TrialPlan> plans, Clock clock,
                           std::function<std::string()> id_source)
    : dir_(std::move(data_dir)),
      plans_(std::move(plans)),
      clock_(clock ? std::move(clock) : Clock(system_ms)),
      id_source_(id_source ? std::move(id_source) : std::function<std::string()>(random_id)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create data directory " + dir_.string() + ": " + ec.message());
    log_path_ = dir_ / "responses.ndjson";
    replay();
    log_fd_ = ::open(log_path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (log_fd_ < 0) throw IoError("cannot open " + log_path_.string() + ": " + std::strerror(errno));
}

SessionStore::~SessionStore() {
    if (log_fd_ >= 0) ::close(log_fd_);
}

void SessionStore::append(const std::string& line) {
    const std::string data = line + "\n";
    std::size_t done = 0;
    while (done < data.size()) {
        const auto n = ::write(log_fd_, data.data() + done, data.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw IoError("response log write failed: " + std::string(std::strerror(errno)));
        }
        done += static_cast<std::size_t>(n);
    }
    if (::fsync(log_fd_) != 0) throw IoError("response log fsync failed: " + std::string(std::strerror(errno)));
}

void SessionStore::replay() {
    std::ifstream in(log_path_, std::ios::binary);
    if (!in) return;
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        if (nl == std::string::npos) break;  // torn final write: never acknowledged
        const std::string line = text.substr(pos, nl - pos);
        const std::size_t at = pos;
        pos = nl + 1;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
            const std::string ev = j.at("event");
            const std::string id = j.at("session");
            if (ev == "create") {
                State s;
                s.record.session_id = id;
                s.record.plan_version = j.at("version");
                s.record.started_ms = j.at("t");
                sessions_[id] = std::move(s);
                ++created_;
            } else if (ev == "serve") {
                sessions_.at(id).served_ms.emplace(j.at("trial").get<std::string>(), j.at("t").get<std::int64_t>());
            } else if (ev == "response") {
                Response r;
                r.trial_id = j.at("trial");
                r.choice = parse_side(j.at("choice"));
                r.listens = {j.at("listens").at("x"), j.at("listens").at("a"), j.at("listens").at("b")};
                r.elapsed_ms = j.at("elapsed_ms");
                r.received_ms = j.at("t");
                r.over_minute = j.at("over_minute");
                sessions_.at(id).record.responses.push_back(std::move(r));
            } else if (ev == "finish") {
                sessions_.at(id).record.completed_ms = j.at("t").get<std::int64_t>();
            } else {
                throw FormatError("response log: unknown event " + ev, at);
            }
        } catch (const FormatError&) {
            throw;
        } catch (const std::exception& e) {
            throw FormatError("response log: bad record (" + std::string(e.what()) + ")", at);
        }
    }
}

const TrialPlan& SessionStore::plan(int version) const {
    if (version == plans_.first.version) return plans_.first;
    if (version == plans_.second.version) return plans_.second;
    throw NotFound("no plan version " + std::to_string(version));
}

SessionStore::State& SessionStore::find(const std::string& id) {
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("unknown session " + id);
    return it->second;
}

const SessionStore::State& SessionStore::find(const std::string& id) const {
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFound("unknown session " + id);
    return it->second;
}

SessionRecord SessionStore::create() {
    std::lock_guard lock(mu_);
    std::string id;
    do id = id_source_();
    while (sessions_.count(id));
    const int version = created_ % 2 == 0 ? plans_.first.version : plans_.second.version;
    const auto now = clock_();
    append(json{{"event", "create"}, {"session", id}, {"version", version}, {"t", now}}.dump());
    State s;
    s.record.session_id = id;
    s.record.plan_version = version;
    s.record.started_ms = now;
    ++created_;
    return sessions_[id] = std::move(s), sessions_[id].record;
}

std::optional<TrialView> SessionStore::next_trial(const std::string& session_id) {
    std::lock_guard lock(mu_);
    auto& s = find(session_id);
    const auto order = plan(s.record.plan_version).ordered();
    const std::size_t i = s.record.responses.size();
    if (i >= order.size() || s.record.completed_ms) return std::nullopt;
    const Trial& t = *order[i];
    const auto now = clock_();
    if (!s.served_ms.count(t.trial_id)) {
        append(json{{"event", "serve"}, {"session", session_id}, {"trial", t.trial_id}, {"t", now}}.dump());
        s.served_ms[t.trial_id] = now;
    }
    return TrialView{t.trial_id, i, order.size(), t.practice, t.x_clip, t.a_clip, t.b_clip, now - s.record.started_ms};
}

Response SessionStore::submit(const std::string& session_id, const std::string& trial_id, Side choice, Listens listens,
                              std::int64_t elapsed_ms) {
    std::lock_guard lock(mu_);
    auto& s = find(session_id);
    if (s.record.completed_ms) throw Conflict("session " + session_id + " is finished");
    const auto now = clock_();
    if (now - s.record.started_ms > kSessionCapMs) throw Conflict("session exceeded the 30-minute cap");
    if (elapsed_ms < 0) throw InvalidInput("elapsed_ms must be non-negative");
    for (const auto& r : s.record.responses)
        if (r.trial_id == trial_id) throw Conflict("trial " + trial_id + " already answered");
    const auto order = plan(s.record.plan_version).ordered();
    const bool known = std::any_of(order.begin(), order.end(), [&](const Trial* t) { return t->trial_id == trial_id; });
    if (!known) throw InvalidInput("trial " + trial_id + " is not part of this session's plan");
    const std::size_t i = s.record.responses.size();
    if (i >= order.size() || order[i]->trial_id != trial_id)
        throw Conflict("trial " + trial_id + " is not the current trial");

    Response r;
    r.trial_id = trial_id;
    r.choice = choice;
    r.listens = listens;
    r.elapsed_ms = elapsed_ms;
    r.received_ms = now;
    const auto served = s.served_ms.find(trial_id);
    r.over_minute = elapsed_ms > kPresentationSoftLimitMs ||
                    (served != s.served_ms.end() && now - served->second > kPresentationSoftLimitMs);
    append(json{{"event", "response"},
                {"session", session_id},
                {"trial", trial_id},
                {"choice", to_string(choice)},
                {"listens", {{"x", listens.x}, {"a", listens.a}, {"b", listens.b}}},
                {"elapsed_ms", elapsed_ms},
                {"over_minute", r.over_minute},
                {"t", now}}
               .dump());
    s.record.responses.push_back(r);
    return r;
}

SessionRecord SessionStore::finish(const std::string& session_id) {
    std::lock_guard lock(mu_);
    auto& s = find(session_id);
    if (s.record.completed_ms) throw Conflict("session " + session_id + " is already finished");
    const auto now = clock_();
    append(json{{"event", "finish"}, {"session", session_id}, {"t", now}}.dump());
    s.record.completed_ms = now;
    return s.record;
}

SessionRecord SessionStore::get(const std::string& session_id) const {
    std::lock_guard lock(mu_);
    return find(session_id).record;
}

std::vector<SessionRecord> SessionStore::sessions() const {
    std::lock_guard lock(mu_);
    std::vector<SessionRecord> out;
    for (const auto& [id, s] : sessions_) out.push_back(s.record);
    return out;
}

SessionScore SessionStore::score(const std::string& session_id) const {
    const auto rec = get(session_id);
    return score_session(rec, plan(rec.plan_version));
}

std::vector<SessionScore> SessionStore::scores() const {
    std::vector<SessionScore> out;
    for (const auto& rec : sessions()) out.push_back(score_session(rec, plan(rec.plan_version)));
    return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json trial_json(const Trial& t) {
    return {{"trial_id", t.trial_id}, {"practice", t.practice}, {"song_id", t.song_id}, {"x", t.x_clip},
            {"a", t.a_clip},          {"b", t.b_clip},          {"correct", to_string(t.correct)}};
}

Trial trial_from(const json& j) {
    Trial t;
    t.trial_id = j.at("trial_id");
    t.practice = j.at("practice");
    t.song_id = j.at("song_id");
    t.x_clip = j.at("x");
    t.a_clip = j.at("a");
    t.b_clip = j.at("b");
    t.correct = parse_side(j.at("correct"));
    return t;
}

}  // namespace

std::string plan_to_json(const TrialPlan& plan) {
    json j;
    j["version"] = plan.version;
    j["clip_pool"] = plan.clip_pool;
    j["practice"] = json::array();
    for (const auto& t : plan.practice) j["practice"].push_back(trial_json(t));
    j["main"] = json::array();
    for (const auto& t : plan.main) j["main"].push_back(trial_json(t));
    return j.dump(2);
}

TrialPlan plan_from_json(const std::string& text) {
    try {
        const auto j = json::parse(text);
        TrialPlan p;
        p.version = j.at("version");
        p.clip_pool = j.at("clip_pool").get<std::vector<std::string>>();
        for (const auto& t : j.at("practice")) p.practice.push_back(trial_from(t));
        for (const auto& t : j.at("main")) p.main.push_back(trial_from(t));
        return p;
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("trial plan JSON: ") + e.what());
    }
}

std::string manifest_to_json(const ClipManifest& m) {
    json j;
    j["reconstructions"] = json::array();
    for (const auto& c : m.reconstructions)
        j["reconstructions"].push_back({{"clip_id", c.clip_id},
                                        {"song_id", c.song_id},
                                        {"participant_id", c.participant_id},
                                        {"start_second", c.start_second},
                                        {"file", m.files.count(c.clip_id) ? m.files.at(c.clip_id) : ""}});
    j["originals"] = json::array();
    for (const auto& o : m.originals)
        j["originals"].push_back({{"clip_id", o.clip_id},
                                  {"song_id", o.song_id},
                                  {"start_second", o.start_second},
                                  {"file", m.files.count(o.clip_id) ? m.files.at(o.clip_id) : ""}});
    return j.dump(2);
}

ClipManifest manifest_from_json(const std::string& text) {
    try {
        const auto j = json::parse(text);
        ClipManifest m;
        for (const auto& c : j.at("reconstructions")) {
            m.reconstructions.push_back({c.at("clip_id"), c.at("song_id"), c.at("participant_id"), c.at("start_second")});
            m.files[c.at("clip_id")] = c.at("file");
        }
        for (const auto& o : j.at("originals")) {
            m.originals.push_back({o.at("clip_id"), o.at("song_id"), o.at("start_second")});
            m.files[o.at("clip_id")] = o.at("file");
        }
        return m;
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("clip manifest JSON: ") + e.what());
    }
}

}  // namespace cortical::abx
