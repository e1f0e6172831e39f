#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

#include "cbm/session.hpp"

namespace httplib {
class Server;
}

namespace cbm {

struct ServerOptions {
    std::filesystem::path responses_dir;
    std::filesystem::path stimuli_dir;
    BlockPlan plan;
    std::string instructions = "Click the cross to see an image, then pick the category that best describes it.";
};

/// HTTP front end for human sessions:
///   POST /session                     {observer_id?} -> {session_id, observer_id, block_plan, labels}
///   GET  /session/{id}/trial          next unanswered trial, or {done: true}
///   POST /session/{id}/response       {stimulus_id, category}; feedback only in training;
///                                     a repeat post for an answered trial gets 409 "duplicate"
///   GET  /session/{id}/progress
///   GET  /stimuli/{stimulus_id}.png
///   GET  /config                      instructions + labels for the browser client
/// Errors are JSON {error, reason} with a 4xx status.
class ExperimentServer {
public:
    ExperimentServer(StimulusManifest manifest, ServerOptions options);
    ~ExperimentServer();

    ExperimentServer(const ExperimentServer&) = delete;
    ExperimentServer& operator=(const ExperimentServer&) = delete;

    /// Binds; port 0 picks a free port. Throws IoError when the port is taken.
    unsigned short bind(const std::string& host, unsigned short port);

    /// Blocks until stop(). Safe to race with stop() from another thread.
    void listen();
    void stop();

private:
    struct Session;

    void install_routes();
    Session* find_session(const std::string& id);

    StimulusManifest manifest_;
    ServerOptions options_;
    std::unique_ptr<httplib::Server> http_;
    std::atomic<bool> stop_requested_{false};
    std::atomic<bool> listening_{false};
    std::mutex mutex_;
    std::map<std::string, std::unique_ptr<Session>> sessions_;
    std::map<std::string, std::string> session_of_observer_;
};

}  // namespace cbm
