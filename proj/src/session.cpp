#include "cbm/session.hpp"

#include <unordered_map>

#include "cbm/error.hpp"
#include "cbm/protocol.hpp"
#include "cbm/provenance.hpp"

namespace cbm {

namespace fs = std::filesystem;
using nlohmann::json;

Block BlockPlan::block_of(std::size_t trial_index) const {
    return trial_index < training_trials ? Block::training : Block::test;
}

void BlockPlan::validate(std::size_t manifest_size) const {
    if (total() == 0) throw ValidationError("block plan has no trials");
    if (total() > manifest_size)
        throw ValidationError("block plan needs " + std::to_string(total()) + " trials but the manifest has " +
                              std::to_string(manifest_size) + " stimuli");
}

json BlockPlan::to_json() const {
    return {{"training_trials", training_trials},
            {"test_blocks", test_blocks},
            {"trials_per_test_block", trials_per_test_block},
            {"feedback_in_training", feedback_in_training}};
}

BlockPlan BlockPlan::from_json(const json& j) {
    BlockPlan p;
    try {
        p.training_trials = j.value("training_trials", p.training_trials);
        p.test_blocks = j.value("test_blocks", p.test_blocks);
        p.trials_per_test_block = j.value("trials_per_test_block", p.trials_per_test_block);
        p.feedback_in_training = j.value("feedback_in_training", p.feedback_in_training);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("block plan: ") + e.what());
    }
    return p;
}

ResponseRecord make_record(const std::string& observer_id, const ManifestEntry& entry,
                           std::optional<Category> response, Block block) {
    ResponseRecord r;
    r.observer_id = observer_id;
    r.stimulus_id = entry.stimulus_id;
    r.condition = entry.condition;
    r.true_category = entry.category;
    r.response = response;
    r.correct = response && *response == entry.category;
    r.block = block;
    r.timestamp = utc_timestamp();
    return r;
}

namespace {

std::vector<std::string> label_list() {
    return {kCategoryLabels.begin(), kCategoryLabels.end()};
}

void check_observer_id(const std::string& id) {
    if (id.empty() || id.find_first_of("/\\\n\r,\"") != std::string::npos || id == "." || id == "..")
        throw ProtocolError("observer_id '" + id + "' cannot name a response file");
}

ObserverDescriptor handshake(ObserverEndpoint& endpoint, std::chrono::milliseconds timeout) {
    auto line = endpoint.receive_line(timeout);
    if (!line) throw ProtocolError("observer did not send hello in time");
    auto msg = protocol::decode(*line);
    if (auto* err = std::get_if<protocol::ErrorMessage>(&msg)) throw ProtocolError("observer rejected hello: " + err->reason);
    auto* hello = std::get_if<protocol::Hello>(&msg);
    if (!hello) throw ProtocolError("expected hello as the first message");
    check_observer_id(hello->observer_id);
    ObserverDescriptor d;
    d.observer_id = hello->observer_id;
    d.kind = parse_observer_kind(hello->kind);
    for (const auto& [k, v] : hello->tags.items()) d.tags[k] = v.is_string() ? v.get<std::string>() : v.dump();
    return d;
}

}  // namespace

SessionResult run_session(const StimulusManifest& manifest, ObserverEndpoint& endpoint, const BlockPlan& plan,
                          const SessionOptions& options) {
    plan.validate(manifest.presentation_order.size());

    std::unordered_map<std::string, const ManifestEntry*> by_id;
    for (const auto& e : manifest.entries) by_id.emplace(e.stimulus_id, &e);

    SessionResult result;
    result.observer = handshake(endpoint, options.trial_timeout);
    const std::string& observer_id = result.observer.observer_id;
    result.responses_path = options.responses_dir / (observer_id + ".csv");

    ResponseLog log(result.responses_path, manifest.settings.sd_ladder, options.sync_writes);
    result.records = log.existing();
    for (std::size_t i = 0; i < result.records.size(); ++i) {
        const auto& r = result.records[i];
        if (i >= plan.total() || r.stimulus_id != manifest.presentation_order[i] || r.observer_id != observer_id)
            throw ValidationError("existing responses in " + result.responses_path.string() +
                                  " do not follow the manifest's presentation order (row " + std::to_string(i + 1) + ")");
    }
    result.resumed_from = result.records.size();

    const auto labels = label_list();
    std::size_t presented = 0;
    for (std::size_t k = result.resumed_from; k < plan.total(); ++k) {
        if (options.stop_after && presented == options.stop_after) return result;
        const ManifestEntry& entry = *by_id.at(manifest.presentation_order[k]);

        protocol::Stimulus stim;
        stim.stimulus_id = entry.stimulus_id;
        stim.labels = labels;
        const fs::path png = stimulus_png_path(options.stimuli_dir, entry.stimulus_id);
        if (options.transfer == StimulusTransfer::inline_png) {
            const std::string bytes = read_text(png);
            stim.png_base64 = protocol::base64_encode({bytes.begin(), bytes.end()});
        } else {
            stim.path = png.generic_string();
        }

        std::optional<Category> response;
        try {
            endpoint.send_line(protocol::encode(stim));
            auto line = endpoint.receive_line(options.trial_timeout);
            if (!line) throw SessionInterrupted("observer timed out on " + entry.stimulus_id, k);
            auto msg = protocol::decode(*line);
            if (auto* r = std::get_if<protocol::Response>(&msg)) {
                if (r->stimulus_id != entry.stimulus_id)
                    throw ProtocolError("response for " + r->stimulus_id + " while " + entry.stimulus_id + " is pending");
                response = find_category(r->category);
                if (!response) throw ProtocolError("response category '" + r->category + "' is not one of the 16 labels");
            } else if (auto* err = std::get_if<protocol::ErrorMessage>(&msg)) {
                if (err->stimulus_id && *err->stimulus_id != entry.stimulus_id)
                    throw ProtocolError("error message for the wrong stimulus");
                // Failed trial: recorded with no response, scored incorrect.
            } else {
                throw ProtocolError("expected response or error for " + entry.stimulus_id);
            }
        } catch (const SessionInterrupted&) {
            throw;
        } catch (const ProtocolError& e) {
            throw SessionInterrupted(e.what(), k);
        }

        ResponseRecord rec = make_record(observer_id, entry, response, plan.block_of(k));
        log.append(rec);
        result.records.push_back(std::move(rec));
        ++presented;
    }

    try {
        endpoint.send_line(protocol::encode(protocol::Bye{}));
    } catch (const ProtocolError&) {
        // The observer may already be gone; every record is on disk.
    }
    endpoint.close();
    result.complete = true;
    return result;
}

ExclusionReport exclude_low_performers(const std::vector<ResponseRecord>& records, double threshold) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // correct, total
    std::vector<std::string> order;
    for (const auto& r : records) {
        if (!tally.count(r.observer_id)) order.push_back(r.observer_id);
        auto& t = tally[r.observer_id];
        if (r.block != Block::test || !r.condition.is_noise_free()) continue;
        t.second += 1;
        t.first += r.correct ? 1 : 0;
    }
    ExclusionReport rep;
    for (const auto& id : order) {
        const auto [correct, total] = tally[id];
        if (total == 0) {
            rep.no_baseline_trials.push_back(id);
            continue;
        }
        const double acc = static_cast<double>(correct) / static_cast<double>(total);
        rep.baseline_accuracy[id] = acc;
        (acc >= threshold ? rep.kept : rep.excluded).push_back(id);
    }
    return rep;
}

}  // namespace cbm
