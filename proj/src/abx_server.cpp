#include "cortical/abx_server.hpp"

#include <httplib.h>

#include <json.hpp>

#include "binio.hpp"

namespace cortical::abx {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& msg) {
    send_json(res, status, json{{"error", msg}});
}

json score_json(const SessionScore& s, const SessionRecord& rec) {
    json per_song = json::object();
    for (const auto& [song, v] : s.per_song)
        per_song[std::to_string(song)] = {{"correct", v.first}, {"answered", v.second}};
    json responses = json::array();
    for (const auto& r : rec.responses)
        responses.push_back({{"trial_id", r.trial_id},
                             {"choice", to_string(r.choice)},
                             {"listens", {{"x", r.listens.x}, {"a", r.listens.a}, {"b", r.listens.b}}},
                             {"elapsed_ms", r.elapsed_ms},
                             {"over_minute", r.over_minute}});
    json j{{"session_id", s.session_id},
           {"plan_version", s.plan_version},
           {"correct", s.correct},
           {"answered", s.answered},
           {"success_rate", s.success_rate},
           {"success_rate_text", format_rate(s.success_rate)},
           {"partial", s.partial},
           {"completed", rec.completed_ms.has_value()},
           {"per_song", per_song},
           {"responses", responses}};
    return j;
}

}  // namespace

std::string report_json(const SessionStore& store) {
    json sessions = json::array();
    std::vector<SessionScore> scores;
    for (const auto& rec : store.sessions()) {
        scores.push_back(score_session(rec, store.plan(rec.plan_version)));
        sessions.push_back(score_json(scores.back(), rec));
    }
    const auto agg = aggregate(scores);
    return json{{"sessions", sessions},
                {"aggregate", {{"sessions", agg.sessions}, {"mean", agg.mean}, {"max", agg.max}, {"min", agg.min}}}}
        .dump();
}

struct Server::Impl {
    SessionStore& store;
    ClipManifest manifest;
    std::filesystem::path clip_dir;
    httplib::Server http;

    Impl(SessionStore& s, ClipManifest m, std::filesystem::path d) : store(s), manifest(std::move(m)), clip_dir(std::move(d)) {}

    // Maps domain errors onto status codes.
    template <typename F>
    void guarded(httplib::Response& res, F&& f) {
        try {
            f();
        } catch (const NotFound& e) {
            send_error(res, 404, e.what());
        } catch (const Conflict& e) {
            send_error(res, 409, e.what());
        } catch (const InvalidInput& e) {
            send_error(res, 400, e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, std::string("bad request body: ") + e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        }
    }

    void routes() {
        http.Post("/sessions", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&] {
                const auto rec = store.create();
                send_json(res, 201,
                          {{"session_id", rec.session_id}, {"plan_version", rec.plan_version}, {"started_ms", rec.started_ms}});
            });
        });

        http.Get(R"(/sessions/([^/]+)/trial)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto view = store.next_trial(req.matches[1]);
                if (!view) return send_json(res, 200, {{"done", true}});
                send_json(res, 200,
                          {{"done", false},
                           {"trial_id", view->trial_id},
                           {"index", view->index},
                           {"total", view->total},
                           {"practice", view->practice},
                           {"x", view->x_clip},
                           {"a", view->a_clip},
                           {"b", view->b_clip},
                           {"session_elapsed_ms", view->session_elapsed_ms},
                           {"session_cap_ms", kSessionCapMs}});
            });
        });

        http.Post(R"(/sessions/([^/]+)/response)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto body = json::parse(req.body);
                Listens l;
                if (body.contains("listens")) {
                    const auto& j = body.at("listens");
                    l = {j.value("x", 0u), j.value("a", 0u), j.value("b", 0u)};
                }
                const auto r = store.submit(req.matches[1], body.at("trial_id").get<std::string>(),
                                            parse_side(body.at("choice").get<std::string>()), l,
                                            body.value("elapsed_ms", std::int64_t{0}));
                send_json(res, 201, {{"trial_id", r.trial_id}, {"over_minute", r.over_minute}});
            });
        });

        http.Post(R"(/sessions/([^/]+)/finish)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto rec = store.finish(req.matches[1]);
                send_json(res, 200, score_json(score_session(rec, store.plan(rec.plan_version)), rec));
            });
        });

        http.Get(R"(/audio/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto it = manifest.files.find(req.matches[1]);
                if (it == manifest.files.end()) throw NotFound("unknown clip " + std::string(req.matches[1]));
                const auto bytes = detail::read_file(clip_dir / it->second);
                res.status = 200;
                res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), "audio/wav");
            });
        });

        http.Get("/report", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&] {
                res.status = 200;
                res.set_content(report_json(store), "application/json");
            });
        });
    }
};

Server::Server(SessionStore& store, ClipManifest manifest, std::filesystem::path clip_dir,
               std::optional<std::filesystem::path> ui_dir)
    : impl_(std::make_unique<Impl>(store, std::move(manifest), std::move(clip_dir))) {
    impl_->routes();
    if (ui_dir && !impl_->http.set_mount_point("/", ui_dir->string()))
        throw IoError("UI directory " + ui_dir->string() + " does not exist");
}

Server::~Server() { stop(); }

int Server::bind(const std::string& host, int port) {
    if (port == 0) {
        const int p = impl_->http.bind_to_any_port(host);
        if (p < 0) throw IoError("cannot bind " + host);
        return p;
    }
    if (!impl_->http.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void Server::run() { impl_->http.listen_after_bind(); }

void Server::stop() {
    if (impl_) impl_->http.stop();
}

}  // namespace cortical::abx
