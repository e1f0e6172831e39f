#include "cbm/server.hpp"

#include <random>
#include <thread>

#include <httplib.h>

#include "cbm/error.hpp"
#include "cbm/provenance.hpp"

namespace cbm {

namespace fs = std::filesystem;
using nlohmann::json;

struct ExperimentServer::Session {
    std::string id;
    std::string observer_id;
    std::unique_ptr<ResponseLog> log;
    std::vector<ResponseRecord> records;  // in presentation order
};

namespace {

json labels_json() { return std::vector<std::string>(kCategoryLabels.begin(), kCategoryLabels.end()); }

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& error, const std::string& reason) {
    reply(res, status, {{"error", error}, {"reason", reason}});
}

std::string random_hex(std::size_t bytes) {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    for (std::size_t i = 0; i < bytes; ++i) {
        const auto v = static_cast<unsigned>(rng() & 0xff);
        s += digits[v >> 4];
        s += digits[v & 0xf];
    }
    return s;
}

bool usable_observer_id(const std::string& id) {
    return !id.empty() && id.size() <= 128 && id != "." && id != ".." &&
           id.find_first_of("/\\\n\r,\"") == std::string::npos;
}

json record_outcome(const ResponseRecord& r, std::size_t trial_index, bool feedback) {
    json j = {{"stimulus_id", r.stimulus_id}, {"trial_index", trial_index}, {"block", std::string(to_string(r.block))}};
    // Test trials never reveal correctness.
    if (feedback && r.block == Block::training)
        j["feedback"] = {{"correct", r.correct}, {"true_category", std::string(r.true_category.label())}};
    return j;
}

}  // namespace

ExperimentServer::ExperimentServer(StimulusManifest manifest, ServerOptions options)
    : manifest_(std::move(manifest)), options_(std::move(options)), http_(std::make_unique<httplib::Server>()) {
    // httplib's default adds SO_REUSEPORT, which lets a second server bind a
    // busy port and split the traffic. Keep SO_REUSEADDR only.
    http_->set_socket_options([](socket_t sock) {
        const int one = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    });
    options_.plan.validate(manifest_.presentation_order.size());
    std::error_code ec;
    fs::create_directories(options_.responses_dir, ec);
    if (ec) throw IoError("cannot create responses directory", options_.responses_dir.string());
    install_routes();
}

ExperimentServer::~ExperimentServer() { stop(); }

unsigned short ExperimentServer::bind(const std::string& host, unsigned short port) {
    if (port == 0) {
        const int p = http_->bind_to_any_port(host);
        if (p <= 0) throw IoError("cannot bind", host);
        return static_cast<unsigned short>(p);
    }
    if (!http_->bind_to_port(host, port)) throw IoError("cannot bind", host + ":" + std::to_string(port));
    return port;
}

void ExperimentServer::listen() {
    listening_ = true;
    if (!stop_requested_) http_->listen_after_bind();
    listening_ = false;
}

void ExperimentServer::stop() {
    stop_requested_ = true;
    // httplib ignores stop() until its accept loop is running.
    while (listening_ && !http_->is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    http_->stop();
}

ExperimentServer::Session* ExperimentServer::find_session(const std::string& id) {
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second.get();
}

void ExperimentServer::install_routes() {
    auto& srv = *http_;
    const BlockPlan& plan = options_.plan;

    srv.Post("/session", [this, &plan](const httplib::Request& req, httplib::Response& res) {
        json body = json::object();
        if (!req.body.empty()) {
            body = json::parse(req.body, nullptr, false);
            if (body.is_discarded() || !body.is_object())
                return fail(res, 400, "bad_request", "body must be a JSON object");
        }
        std::string observer_id;
        if (body.contains("observer_id")) {
            if (!body["observer_id"].is_string()) return fail(res, 400, "bad_request", "observer_id must be a string");
            observer_id = body["observer_id"].get<std::string>();
            if (!usable_observer_id(observer_id))
                return fail(res, 400, "bad_request", "observer_id cannot name a response file");
        } else {
            observer_id = "human_" + random_hex(6);
        }

        std::lock_guard lock(mutex_);
        Session* s = nullptr;
        if (auto it = session_of_observer_.find(observer_id); it != session_of_observer_.end()) {
            s = find_session(it->second);
        } else {
            auto fresh = std::make_unique<Session>();
            fresh->id = random_hex(16);
            fresh->observer_id = observer_id;
            try {
                fresh->log = std::make_unique<ResponseLog>(options_.responses_dir / (observer_id + ".csv"),
                                                           manifest_.settings.sd_ladder);
            } catch (const Error& e) {
                return fail(res, 500, "io", e.what());
            }
            fresh->records = fresh->log->existing();
            for (std::size_t i = 0; i < fresh->records.size(); ++i)
                if (i >= plan.total() || fresh->records[i].stimulus_id != manifest_.presentation_order[i])
                    return fail(res, 409, "conflict", "existing responses do not follow the presentation order");
            s = fresh.get();
            session_of_observer_[observer_id] = fresh->id;
            sessions_[fresh->id] = std::move(fresh);
        }
        reply(res, 200,
              {{"session_id", s->id},
               {"observer_id", s->observer_id},
               {"block_plan", plan.to_json()},
               {"labels", labels_json()},
               {"resumed_from", s->records.size()}});
    });

    srv.Get(R"(/session/([^/]+)/trial)", [this, &plan](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mutex_);
        Session* s = find_session(req.matches[1]);
        if (!s) return fail(res, 404, "not_found", "unknown session");
        const std::size_t k = s->records.size();
        if (k >= plan.total()) return reply(res, 200, {{"done", true}, {"trial_index", k}});
        const std::string& id = manifest_.presentation_order[k];
        const Block block = plan.block_of(k);
        reply(res, 200,
              {{"done", false},
               {"trial_index", k},
               {"block", std::string(to_string(block))},
               {"stimulus_id", id},
               {"image_url", "/stimuli/" + id + ".png"},
               {"labels", labels_json()},
               {"feedback", block == Block::training && plan.feedback_in_training}});
    });

    srv.Post(R"(/session/([^/]+)/response)", [this, &plan](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("stimulus_id") ||
            !body["stimulus_id"].is_string() || !body.contains("category") || !body["category"].is_string())
            return fail(res, 400, "bad_request", "expected {stimulus_id, category}");
        const std::string stimulus_id = body["stimulus_id"].get<std::string>();
        const auto category = find_category(body["category"].get<std::string>());
        if (!category) return fail(res, 400, "bad_request", "category is not one of the 16 labels");

        std::lock_guard lock(mutex_);
        Session* s = find_session(req.matches[1]);
        if (!s) return fail(res, 404, "not_found", "unknown session");

        // A second post for an answered trial is rejected without a new
        // record; the stored outcome is returned so a retrying client can move on.
        for (std::size_t i = 0; i < s->records.size(); ++i)
            if (s->records[i].stimulus_id == stimulus_id)
                return reply(res, 409,
                             {{"error", "duplicate"},
                              {"reason", "trial " + stimulus_id + " already has a response"},
                              {"recorded", false},
                              {"previous", record_outcome(s->records[i], i, plan.feedback_in_training)}});

        const std::size_t k = s->records.size();
        if (k >= plan.total()) return fail(res, 409, "conflict", "session already complete");
        if (manifest_.presentation_order[k] != stimulus_id)
            return fail(res, 409, "conflict", "stimulus " + stimulus_id + " is not the current trial");

        ResponseRecord r = make_record(s->observer_id, manifest_.find(stimulus_id), category, plan.block_of(k));
        try {
            s->log->append(r);
        } catch (const Error& e) {
            return fail(res, 500, "io", e.what());
        }
        s->records.push_back(r);
        json out = record_outcome(r, k, plan.feedback_in_training);
        out["recorded"] = true;
        reply(res, 200, out);
    });

    srv.Get(R"(/session/([^/]+)/progress)", [this, &plan](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mutex_);
        Session* s = find_session(req.matches[1]);
        if (!s) return fail(res, 404, "not_found", "unknown session");
        const std::size_t k = s->records.size();
        const bool done = k >= plan.total();
        json j = {{"observer_id", s->observer_id}, {"completed", k}, {"total", plan.total()}, {"done", done}};
        if (!done) {
            // Block 0 is training; test blocks are numbered from 1.
            std::size_t block = 0, start = 0, size = plan.training_trials;
            if (k >= plan.training_trials) {
                block = 1 + (k - plan.training_trials) / plan.trials_per_test_block;
                start = plan.training_trials + (block - 1) * plan.trials_per_test_block;
                size = plan.trials_per_test_block;
            }
            j["block"] = std::string(to_string(plan.block_of(k)));
            j["block_number"] = block;
            j["block_completed"] = k - start;
            j["block_size"] = size;
        }
        reply(res, 200, j);
    });

    srv.Get(R"(/stimuli/([A-Za-z0-9_\-]+)\.png)", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        if (!manifest_.find_if_present(id)) return fail(res, 404, "not_found", "unknown stimulus");
        try {
            res.set_content(read_text(stimulus_png_path(options_.stimuli_dir, id)), "image/png");
        } catch (const Error&) {
            fail(res, 404, "not_found", "stimulus image missing on disk");
        }
    });

    srv.Get("/config", [this, &plan](const httplib::Request&, httplib::Response& res) {
        reply(res, 200, {{"instructions", options_.instructions}, {"labels", labels_json()}, {"block_plan", plan.to_json()}});
    });

    srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) fail(res, res.status, res.status == 404 ? "not_found" : "bad_request", "no such endpoint");
    });
}

}  // namespace cbm
