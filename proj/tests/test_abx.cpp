#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include <httplib.h>

#include <json.hpp>

#include "doctest.h"

#include "cortical/abx.hpp"
#include "cortical/abx_server.hpp"

using namespace cortical;
using namespace cortical::abx;

namespace {

struct PoolFixture {
    std::vector<ClipInfo> clips;
    std::vector<OriginalInfo> originals;
};

// 4 songs x 2 participants x 6 start times, two starts per third.
PoolFixture make_pool() {
    PoolFixture p;
    const std::uint32_t starts[] = {10, 45, 95, 130, 170, 220};
    for (std::uint16_t song = 1; song <= 4; ++song)
        for (auto t : starts) {
            p.originals.push_back({"o" + std::to_string(song) + "_" + std::to_string(t), song, t});
            for (std::uint16_t part = 1; part <= 2; ++part)
                p.clips.push_back({"r" + std::to_string(part) + "_" + std::to_string(song) + "_" + std::to_string(t), song,
                                   part, t});
        }
    return p;
}

std::filesystem::path fresh_dir(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / ("cortical_abx_" + name);
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

TrialPlan answered_plan() {
    TrialPlan p;
    for (std::size_t i = 0; i < 24; ++i) {
        Trial t;
        t.trial_id = "m" + std::to_string(i);
        t.song_id = static_cast<std::uint16_t>(1 + i % 4);
        t.correct = i % 2 ? Side::A : Side::B;
        p.main.push_back(t);
    }
    return p;
}

SessionRecord answers(const TrialPlan& p, std::size_t correct, std::size_t answered = 24) {
    SessionRecord r;
    r.session_id = "s";
    for (std::size_t i = 0; i < answered; ++i) {
        const auto& t = p.main[i];
        const Side wrong = t.correct == Side::A ? Side::B : Side::A;
        r.responses.push_back({t.trial_id, i < correct ? t.correct : wrong, {1, 1, 1}, 1000, 0, false});
    }
    return r;
}

}  // namespace

TEST_CASE("plans satisfy every constraint across seeds") {
    const auto pool = make_pool();
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto plans = generate_plans(pool.clips, pool.originals, seed);
        const auto v = audit_plans(plans, pool.clips, pool.originals);
        INFO("seed " << seed << ": " << (v.empty() ? "" : v.front()));
        REQUIRE(v.empty());
        for (const auto* p : {&plans.first, &plans.second}) {
            std::map<std::uint16_t, int> per_song;
            for (const auto& t : p->main) ++per_song[t.song_id];
            for (auto& [s, n] : per_song) CHECK(n == 6);
        }
    }
}

TEST_CASE("plans are deterministic per seed") {
    const auto pool = make_pool();
    CHECK(generate_plans(pool.clips, pool.originals, 7) == generate_plans(pool.clips, pool.originals, 7));
    CHECK_FALSE(generate_plans(pool.clips, pool.originals, 7) == generate_plans(pool.clips, pool.originals, 8));
    const auto plans = generate_plans(pool.clips, pool.originals, 7);
    CHECK(plan_from_json(plan_to_json(plans.first)) == plans.first);
}

TEST_CASE("infeasible pools are rejected with the constraint named") {
    auto pool = make_pool();
    auto missing_song = pool;
    std::erase_if(missing_song.clips, [](const ClipInfo& c) { return c.song_id == 4; });
    CHECK_THROWS_AS(generate_plans(missing_song.clips, pool.originals, 1), PlanningError);

    // Keep 48 clips but over three songs.
    auto three = pool;
    for (auto& c : three.clips)
        if (c.song_id == 4) c.song_id = 1 + static_cast<std::uint16_t>(c.start_second % 3);
    CHECK_THROWS_AS(generate_plans(three.clips, three.originals, 1), PlanningError);

    auto no_original = pool;
    no_original.originals.pop_back();
    CHECK_THROWS_AS(generate_plans(no_original.clips, no_original.originals, 1), PlanningError);

    auto lopsided = pool;
    for (auto& c : lopsided.clips)
        if (c.song_id == 2 && c.start_second == 220) c.start_second = 10;
    try {
        generate_plans(lopsided.clips, lopsided.originals, 1);
        FAIL("expected PlanningError");
    } catch (const PlanningError& e) {
        CHECK(std::string(e.what()).find("thirds") != std::string::npos);
    }

    auto dup = pool;
    dup.clips[1].clip_id = dup.clips[0].clip_id;
    CHECK_THROWS_AS(generate_plans(dup.clips, dup.originals, 1), PlanningError);
}

TEST_CASE("auditor catches tampered plans") {
    const auto pool = make_pool();
    const auto plans = generate_plans(pool.clips, pool.originals, 3);
    auto audit = [&](const TrialPlan& p) { return audit_plan(p, pool.clips, pool.originals); };
    REQUIRE(audit(plans.first).empty());

    auto flipped = plans.first;
    flipped.main[0].correct = flipped.main[0].correct == Side::A ? Side::B : Side::A;
    CHECK_FALSE(audit(flipped).empty());  // match no longer covers X, and A/B is 13/11

    auto same_song_foil = plans.first;
    auto& t = same_song_foil.main[0];
    for (const auto& c : pool.clips)
        if (c.song_id == t.song_id && c.clip_id != t.match_clip() &&
            std::count(plans.first.clip_pool.begin(), plans.first.clip_pool.end(), c.clip_id)) {
            (t.correct == Side::A ? t.b_clip : t.a_clip) = c.clip_id;
            break;
        }
    CHECK_FALSE(audit(same_song_foil).empty());

    auto short_plan = plans.first;
    short_plan.main.pop_back();
    CHECK_FALSE(audit(short_plan).empty());

    auto overlap = plans;
    overlap.second.clip_pool[0] = overlap.first.clip_pool[0];
    CHECK_FALSE(audit_plans(overlap, pool.clips, pool.originals).empty());

    // Two same-song trials with the same participant placed back to back.
    auto adjacent = plans.first;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < adjacent.main.size(); ++i)
        if (adjacent.main[i].song_id == adjacent.main[0].song_id) idx.push_back(i);
    std::map<std::string, std::uint16_t> part;
    for (const auto& c : pool.clips) part[c.clip_id] = c.participant_id;
    // idx[0] and idx[2] share a participant when the sequence alternates.
    REQUIRE(part[adjacent.main[idx[0]].match_clip()] == part[adjacent.main[idx[2]].match_clip()]);
    std::swap(adjacent.main[idx[1]], adjacent.main[idx[2]]);
    const auto v = audit(adjacent);
    CHECK(std::any_of(v.begin(), v.end(), [](const std::string& s) { return s.find("participant") != std::string::npos; }));
}

TEST_CASE("session scoring arithmetic") {
    const auto plan = answered_plan();
    CHECK(format_rate(score_session(answers(plan, 24), plan).success_rate) == "100.00");
    CHECK(format_rate(score_session(answers(plan, 23), plan).success_rate) == "95.83");
    CHECK(format_rate(score_session(answers(plan, 16), plan).success_rate) == "66.67");
    CHECK(format_rate(score_session(answers(plan, 12), plan).success_rate) == "50.00");

    const auto partial = score_session(answers(plan, 5, 10), plan);
    CHECK(partial.partial);
    CHECK(partial.answered == 10);
    CHECK(partial.success_rate == doctest::Approx(50.0));

    // Practice responses never count.
    auto with_practice = answers(plan, 16);
    with_practice.responses.insert(with_practice.responses.begin(), {"practice-1", Side::A, {}, 0, 0, false});
    CHECK(score_session(with_practice, plan).correct == 16);
    CHECK(score_session(with_practice, plan).answered == 24);

    const auto s = score_session(answers(plan, 24), plan);
    std::size_t per_song_total = 0;
    for (const auto& [song, v] : s.per_song) per_song_total += v.second;
    CHECK(per_song_total == 24);

    const auto agg = aggregate({score_session(answers(plan, 23), plan), score_session(answers(plan, 16), plan)});
    CHECK(agg.sessions == 2);
    CHECK(agg.max == doctest::Approx(95.8333333333));
    CHECK(agg.min == doctest::Approx(66.6666666667));
    CHECK(agg.mean == doctest::Approx(81.25));
}

TEST_CASE("session store: ordering, conflicts and time limits") {
    const auto pool = make_pool();
    const auto dir = fresh_dir("store");
    std::int64_t now = 1'000'000;
    int next_id = 0;
    SessionStore store(dir, generate_plans(pool.clips, pool.originals, 5), [&] { return now; },
                       [&] { return "s" + std::to_string(next_id++); });

    const auto a = store.create();
    const auto b = store.create();
    CHECK(a.plan_version == 1);
    CHECK(b.plan_version == 2);
    CHECK_THROWS_AS(store.next_trial("nope"), NotFound);
    CHECK_THROWS_AS(store.submit("nope", "x", Side::A, {}, 0), NotFound);

    const auto& plan = store.plan(a.plan_version);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto v = store.next_trial(a.session_id);
        REQUIRE(v);
        CHECK(v->practice);
        CHECK(v->index == i);
        CHECK(v->total == 28);
        store.submit(a.session_id, v->trial_id, Side::A, {1, 1, 1}, 500);
    }
    const auto first_main = store.next_trial(a.session_id);
    REQUIRE(first_main);
    CHECK_FALSE(first_main->practice);
    CHECK(first_main->trial_id == plan.main[0].trial_id);

    // Out of order, unknown trial, duplicate.
    CHECK_THROWS_AS(store.submit(a.session_id, plan.main[1].trial_id, Side::A, {}, 0), Conflict);
    CHECK_THROWS_AS(store.submit(a.session_id, "bogus", Side::A, {}, 0), InvalidInput);
    store.submit(a.session_id, plan.main[0].trial_id, Side::B, {2, 3, 1}, 800);
    CHECK_THROWS_AS(store.submit(a.session_id, plan.main[0].trial_id, Side::A, {}, 0), Conflict);
    CHECK(store.get(a.session_id).responses.back().choice == Side::B);

    // The one-minute limit is flagged, not enforced.
    store.next_trial(a.session_id);
    now += 61'000;
    const auto late = store.submit(a.session_id, plan.main[1].trial_id, Side::A, {}, 1000);
    CHECK(late.over_minute);
    store.next_trial(a.session_id);
    CHECK(store.submit(a.session_id, plan.main[2].trial_id, Side::A, {}, 61'001).over_minute);
    store.next_trial(a.session_id);
    CHECK_FALSE(store.submit(a.session_id, plan.main[3].trial_id, Side::A, {}, 100).over_minute);

    // Session cap.
    now += kSessionCapMs;
    CHECK_THROWS_AS(store.submit(a.session_id, plan.main[4].trial_id, Side::A, {}, 0), Conflict);

    store.finish(b.session_id);
    CHECK_THROWS_AS(store.finish(b.session_id), Conflict);
    CHECK_FALSE(store.next_trial(b.session_id));
    CHECK(store.score(a.session_id).partial);
}

TEST_CASE("session store replays its log and survives a torn write") {
    const auto pool = make_pool();
    const auto plans = generate_plans(pool.clips, pool.originals, 9);
    const auto dir = fresh_dir("replay");
    std::vector<SessionRecord> before;
    {
        SessionStore store(dir, plans);
        const auto s = store.create();
        store.create();
        for (int i = 0; i < 10; ++i) {
            const auto v = store.next_trial(s.session_id);
            store.submit(s.session_id, v->trial_id, i % 3 ? Side::A : Side::B, {1, static_cast<std::uint32_t>(i), 2}, 100 * i);
        }
        before = store.sessions();
    }
    {
        SessionStore again(dir, plans);
        CHECK(again.sessions() == before);
        CHECK(again.create().plan_version == 1);  // third session alternates back
    }
    // A crash mid-append leaves a partial line, which was never acknowledged.
    {
        std::ofstream out(dir / "responses.ndjson", std::ios::app);
        out << R"({"event":"response","session":")";
    }
    {
        SessionStore again(dir, plans);
        CHECK(again.sessions().size() == 3);
    }
    {
        std::ofstream out(dir / "responses.ndjson", std::ios::app);
        out << "\nnot json\n";
    }
    CHECK_THROWS_AS(SessionStore(dir, plans), FormatError);
}

TEST_CASE("http service: full session, audio passthrough and errors") {
    const auto pool = make_pool();
    const auto dir = fresh_dir("http");
    ClipManifest manifest;
    manifest.reconstructions = pool.clips;
    manifest.originals = pool.originals;
    std::map<std::string, std::string> bytes;
    std::uint8_t k = 0;
    auto add_file = [&](const std::string& id) {
        std::string data = "RIFF";
        for (int i = 0; i < 64; ++i) data.push_back(static_cast<char>(k++));
        manifest.files[id] = id + ".wav";
        bytes[id] = data;
        std::ofstream(dir / (id + ".wav"), std::ios::binary) << data;
    };
    for (const auto& c : pool.clips) add_file(c.clip_id);
    for (const auto& o : pool.originals) add_file(o.clip_id);
    std::ofstream(dir / "secret.txt") << "not a clip";

    SessionStore store(dir / "data", generate_plans(pool.clips, pool.originals, 11));
    Server server(store, manifest, dir);
    const int port = server.bind("127.0.0.1", 0);
    std::thread th([&] { server.run(); });

    httplib::Client cli("127.0.0.1", port);
    using nlohmann::json;

    auto created = cli.Post("/sessions");
    REQUIRE(created);
    CHECK(created->status == 201);
    const std::string sid = json::parse(created->body).at("session_id");

    CHECK(cli.Get("/sessions/unknown/trial")->status == 404);
    CHECK(cli.Get("/audio/secret")->status == 404);
    CHECK(cli.Get("/audio/..%2Fsecret.txt")->status == 404);
    CHECK(cli.Post("/sessions/" + sid + "/response", "{oops", "application/json")->status == 400);

    std::size_t served = 0;
    for (;;) {
        auto r = cli.Get("/sessions/" + sid + "/trial");
        REQUIRE(r);
        REQUIRE(r->status == 200);
        const auto v = json::parse(r->body);
        if (v.at("done")) break;
        CHECK(v.at("practice") == (served < 4));
        // Trial views carry only opaque ids, never the answer or song.
        CHECK_FALSE(v.contains("correct"));
        CHECK_FALSE(v.contains("song_id"));
        if (served < 2)
            for (const char* key : {"x", "a", "b"}) {
                const std::string id = v.at(key);
                auto audio = cli.Get("/audio/" + id);
                REQUIRE(audio);
                CHECK(audio->status == 200);
                CHECK(audio->get_header_value("Content-Type") == "audio/wav");
                CHECK(audio->body == bytes.at(id));
            }
        const json body{{"trial_id", v.at("trial_id")}, {"choice", "A"}, {"listens", {{"x", 1}, {"a", 2}, {"b", 1}}},
                        {"elapsed_ms", 1500}};
        auto sub = cli.Post("/sessions/" + sid + "/response", body.dump(), "application/json");
        REQUIRE(sub);
        CHECK(sub->status == 201);
        if (served == 0) CHECK(cli.Post("/sessions/" + sid + "/response", body.dump(), "application/json")->status == 409);
        ++served;
    }
    CHECK(served == 28);
    CHECK(cli.Post("/sessions/" + sid + "/finish")->status == 200);
    CHECK(cli.Post("/sessions/" + sid + "/finish")->status == 409);

    const auto report = json::parse(cli.Get("/report")->body);
    REQUIRE(report.at("sessions").size() == 1);
    const auto& s = report.at("sessions")[0];
    CHECK(s.at("responses").size() == 28);
    CHECK(s.at("answered") == 24);
    CHECK(s.at("correct") == 12);  // always "A"; A is correct in exactly 12
    CHECK(s.at("success_rate_text") == "50.00");
    CHECK(report.at("aggregate").at("sessions") == 1);

    server.stop();
    th.join();
}
