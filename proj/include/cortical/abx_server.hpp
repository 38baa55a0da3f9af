#pragma once

// HTTP front end for the AB-X session store.
//
//   POST /sessions                 -> 201 {"session_id", "plan_version", "started_ms"}
//   GET  /sessions/{id}/trial      -> trial view, or {"done": true}
//   POST /sessions/{id}/response   -> 201; body {"trial_id", "choice", "listens": {x,a,b}, "elapsed_ms"}
//   POST /sessions/{id}/finish     -> session score
//   GET  /audio/{clip_id}          -> audio/wav bytes as written by the invert command
//   GET  /report                   -> per-session scores and the aggregate
//
// Errors are JSON {"error": message} with 400, 404 or 409.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "cortical/abx.hpp"

namespace cortical::abx {

class Server {
public:
    /// `clip_dir` is where the manifest's file names resolve. Only clip ids in
    /// the manifest are ever served. `ui_dir`, when set, is mounted at "/".
    Server(SessionStore& store, ClipManifest manifest, std::filesystem::path clip_dir,
           std::optional<std::filesystem::path> ui_dir = std::nullopt);
    ~Server();

    /// Binds to `host`; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void run();
    void stop();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// JSON body of GET /report.
std::string report_json(const SessionStore& store);

}  // namespace cortical::abx
