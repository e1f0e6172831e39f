// cbm: command-line front end for stimulus generation, observer sessions and analysis.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <pthread.h>

#include <CLI11.hpp>

#include "cbm/channel.hpp"
#include "cbm/config.hpp"
#include "cbm/error.hpp"
#include "cbm/provenance.hpp"
#include "cbm/server.hpp"
#include "cbm/session.hpp"
#include "cbm/stats.hpp"
#include "cbm/stimuli.hpp"
#include "cbm/svg.hpp"
#include "cbm/transport.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cbm;

namespace {

// Digest of a directory's image listing: sorted "relative-path sha256" lines.
std::string listing_digest(const std::vector<LabeledImage>& images, const fs::path& root) {
    std::string text;
    for (const auto& img : images)
        text += fs::relative(img.path, root).generic_string() + ' ' + sha256_file(img.path) + '\n';
    return sha256_hex(text);
}

std::vector<std::string> split_command(const std::string& cmd) {
    std::vector<std::string> out;
    std::string cur;
    char quote = 0;
    bool have = false;
    for (char c : cmd) {
        if (quote) {
            if (c == quote)
                quote = 0;
            else
                cur += c;
        } else if (c == '\'' || c == '"') {
            quote = c;
            have = true;
        } else if (c == ' ' || c == '\t') {
            if (have || !cur.empty()) out.push_back(cur);
            cur.clear();
            have = false;
        } else {
            cur += c;
        }
    }
    if (quote) throw ValidationError("unbalanced quote in --observer-cmd");
    if (have || !cur.empty()) out.push_back(cur);
    if (out.empty()) throw ValidationError("--observer-cmd is empty");
    return out;
}

void print_balance(const StimulusManifest& m, std::ostream& os) {
    const auto cond = m.condition_counts();
    os << "condition  sd      band  center   count\n";
    for (std::size_t id = 0; id < kNumConditions; ++id) {
        const NoiseCondition c = NoiseCondition::from_id(id);
        char line[96];
        if (c.is_noise_free())
            std::snprintf(line, sizeof line, "%9zu  %-6.2f  %4s  %6s   %5zu\n", id, 0.0, "-", "-", cond[id]);
        else
            std::snprintf(line, sizeof line, "%9zu  %-6.2f  %4zu  %6.2f   %5zu\n", id, c.sd(m.settings.sd_ladder),
                          *c.band_index, band_center(*c.band_index), cond[id]);
        os << line;
    }
    const auto [lo, hi] = std::minmax_element(cond.begin(), cond.end());
    os << "per-condition range: " << *lo << "-" << *hi << "\n\ncategory    count\n";
    const auto cat = m.category_counts();
    for (std::size_t c = 0; c < kNumCategories; ++c) {
        char line[64];
        std::snprintf(line, sizeof line, "%-10s  %5zu\n", std::string(kCategoryLabels[c]).c_str(), cat[c]);
        os << line;
    }
}

std::string csv_with_provenance(const std::string& csv, const json& provenance) {
    return "# provenance: " + provenance.dump() + "\n" + csv;
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
    fs::path images, out;
    std::size_t n = 0;
    std::optional<std::uint64_t> seed;
    bool manifest_only = false;
    unsigned threads = 0;
};

int cmd_generate(const ToolkitConfig& cfg, const GenerateArgs& a) {
    const auto images = load_image_list(a.images);
    const std::uint64_t seed = a.seed.value_or(cfg.master_seed);
    const StimulusManifest m = assign_conditions(images, seed, a.n, cfg.stimuli);

    const fs::path root = fs::is_directory(a.images) ? a.images : a.images.parent_path();
    json prov = make_provenance("generate", {{"toolkit", cfg.to_json()}, {"n", a.n}, {"seed", seed}}, {});
    prov["inputs"].push_back({{"path", a.images.generic_string()}, {"sha256", listing_digest(images, root)}});

    if (a.manifest_only) {
        json j = m.to_json();
        j["provenance"] = prov;
        write_json(a.out / "manifest.json", j);
    } else {
        const ExportSummary s = export_set(m, a.out, a.threads, prov);
        std::cout << "rendered " << s.images_written << " stimuli (" << s.stimuli_with_clipping_adjustment
                  << " needed clipping prevention)\n";
    }
    print_balance(m, std::cout);
    return 0;
}

// ---------------------------------------------------------------------------

struct RunArgs {
    fs::path manifest, stimuli, responses;
    std::string observer_cmd, observer_tcp;
    bool inline_png = false;
    std::optional<double> timeout_s;
    std::size_t stop_after = 0;
};

int cmd_run(const ToolkitConfig& cfg, const RunArgs& a) {
    const StimulusManifest m = StimulusManifest::load(a.manifest);
    SessionOptions opts;
    opts.responses_dir = a.responses;
    opts.stimuli_dir = a.stimuli.empty() ? a.manifest.parent_path() : a.stimuli;
    opts.trial_timeout = std::chrono::milliseconds(static_cast<long long>(1000.0 * a.timeout_s.value_or(cfg.network_timeout_s)));
    opts.transfer = a.inline_png ? StimulusTransfer::inline_png : StimulusTransfer::shared_path;
    opts.stop_after = a.stop_after;

    std::unique_ptr<ObserverEndpoint> ep;
    if (!a.observer_cmd.empty() == !a.observer_tcp.empty())
        throw ValidationError("give exactly one of --observer-cmd and --observer-tcp");
    if (!a.observer_cmd.empty()) {
        ep = std::make_unique<SubprocessEndpoint>(split_command(a.observer_cmd));
    } else {
        const auto [host, port] = parse_host_port(a.observer_tcp);
        ep = std::make_unique<TcpEndpoint>(host, port);
    }

    try {
        const SessionResult r = run_session(m, *ep, cfg.plan, opts);
        ep->close();
        std::cout << r.observer.observer_id << ": " << r.records.size() << "/" << cfg.plan.total() << " trials in "
                  << r.responses_path.string() << (r.resumed_from ? " (resumed at " + std::to_string(r.resumed_from) + ")" : "")
                  << (r.complete ? "" : " [stopped early]") << "\n";
    } catch (const SessionInterrupted& e) {
        ep->close();
        std::cerr << "session interrupted: " << e.what() << "; rerun to resume at trial " << e.next_trial() << "\n";
        return static_cast<int>(ExitCode::protocol);
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
    fs::path manifest, stimuli, responses;
    std::string bind = "127.0.0.1:8080";
};

int cmd_serve(const ToolkitConfig& cfg, const ServeArgs& a) {
    StimulusManifest m = StimulusManifest::load(a.manifest);
    ServerOptions opts;
    opts.responses_dir = a.responses;
    opts.stimuli_dir = a.stimuli.empty() ? a.manifest.parent_path() : a.stimuli;
    opts.plan = cfg.plan;
    opts.instructions = cfg.instructions;

    // Route SIGINT/SIGTERM to a waiter thread instead of an async handler.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    ExperimentServer server(std::move(m), opts);
    const auto [host, port] = parse_host_port(a.bind);
    const unsigned short bound = server.bind(host, port);
    std::cout << "listening on " << host << ":" << bound << std::endl;

    std::atomic<bool> signalled{false};
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        signalled = true;
        server.stop();
    });
    server.listen();
    // Wake the waiter if listen() returned for another reason.
    if (!signalled) pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    return 0;
}

// ---------------------------------------------------------------------------

struct AnalyzeArgs {
    fs::path manifest, out;
    std::vector<fs::path> responses;
    bool include_excluded = false;
    bool normalized = false;
    std::optional<std::string> aggregate;
};

void check_against_manifest(const std::vector<ResponseRecord>& records, const StimulusManifest& m,
                            const fs::path& path) {
    std::unordered_map<std::string, const ManifestEntry*> by_id;
    for (const auto& e : m.entries) by_id.emplace(e.stimulus_id, &e);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const std::string where = path.string() + " row " + std::to_string(i + 2) + " (" + r.stimulus_id + ")";
        const auto it = by_id.find(r.stimulus_id);
        if (it == by_id.end()) throw ValidationError(where + ": unknown stimulus_id");
        if (!(it->second->condition == r.condition)) throw ValidationError(where + ": noise condition disagrees with manifest");
        if (it->second->category != r.true_category) throw ValidationError(where + ": true_category disagrees with manifest");
    }
}

int cmd_analyze(const ToolkitConfig& cfg, const AnalyzeArgs& a) {
    const StimulusManifest m = StimulusManifest::load(a.manifest);
    const auto& an = cfg.analysis;
    FitOptions fit_opts;
    fit_opts.censor_clamped = an.censor_clamped;
    const bool normalized = a.normalized || an.normalized;

    std::vector<std::vector<ResponseRecord>> kept;
    json index = json::array();
    for (const auto& path : a.responses) {
        auto records = read_responses(path, m.settings.sd_ladder);
        if (records.empty()) throw ValidationError(path.string() + ": no response rows");
        check_against_manifest(records, m, path);
        const std::string id = records.front().observer_id;
        for (const auto& r : records)
            if (r.observer_id != id) throw ValidationError(path.string() + ": more than one observer_id in one file");

        const ExclusionReport ex = exclude_low_performers(records, an.exclusion_threshold);
        const bool excluded = !ex.excluded.empty();
        if (!ex.no_baseline_trials.empty()) std::cerr << id << ": no noise-free test trials, exclusion rule not applicable\n";
        if (excluded && !a.include_excluded) {
            std::cerr << id << ": excluded (noise-free accuracy " << ex.baseline_accuracy.at(id) << " < "
                      << an.exclusion_threshold << "); use --include-excluded to analyze anyway\n";
            index.push_back({{"observer_id", id}, {"excluded", true}});
            continue;
        }

        const json prov = make_provenance("analyze",
                                          {{"toolkit", cfg.to_json()}, {"normalized", normalized},
                                           {"include_excluded", a.include_excluded}},
                                          {a.manifest, path});
        const AccuracyHeatmap map = heatmap(records, {an.include_training}, m.settings.sd_ladder);
        const ThresholdProfile prof = normalized ? normalized_thresholds(map, an.criterion) : thresholds(map, an.criterion);

        const fs::path dir = a.out / id;
        json hj = map.to_json();
        hj["provenance"] = prov;
        write_json(dir / "heatmap.json", hj);
        write_text(dir / "heatmap.csv", csv_with_provenance(map.to_csv(), prov));
        write_text(dir / "heatmap.svg", svg::heatmap(map, id + " accuracy", prov));
        json tj = prof.to_json();
        tj["criterion"] = an.criterion;
        tj["normalized"] = normalized;
        tj["provenance"] = prov;
        write_json(dir / "thresholds.json", tj);
        write_text(dir / "thresholds.csv", csv_with_provenance(prof.to_csv(), prov));

        json fj = {{"observer_id", id}, {"provenance", prov}};
        std::optional<ChannelFit> fit;
        try {
            fit = fit_channel(prof, fit_opts);
        } catch (const FitError& e) {
            fj["error"] = e.what();
            fj["best_so_far"] = e.best_so_far().to_json();
        } catch (const ValidationError& e) {
            fj["error"] = e.what();
        }
        if (fit) {
            fj["fit"] = fit->to_json();
            fj["properties"] = channel_properties(*fit).to_json();
            write_text(dir / "channel.svg", svg::channel_curve(prof, *fit, id + " channel", prov));
        }
        write_json(dir / "fit.json", fj);

        std::cout << id << ": " << records.size() << " records";
        if (fit) {
            const auto p = channel_properties(*fit);
            std::cout << ", bandwidth " << p.bandwidth << " oct, center " << p.center_frequency << " c/img, peak "
                      << p.peak_noise_sensitivity << (fit->degenerate ? " [degenerate: " + fit->diagnostics + "]" : "");
        } else {
            std::cout << ", no fit: " << fj["error"].get<std::string>();
        }
        std::cout << "\n";
        index.push_back({{"observer_id", id}, {"excluded", excluded}, {"fitted", fit.has_value()}});
        kept.push_back(std::move(records));
    }

    json summary = {{"observers", index}};
    if (a.aggregate) {
        if (kept.size() < 2) throw ValidationError("--aggregate needs at least 2 analyzed observers");
        const AggregateResult agg = aggregate_humans(kept, parse_aggregation_mode(*a.aggregate), fit_opts);
        json j = agg.to_json();
        std::vector<fs::path> inputs{a.manifest};
        inputs.insert(inputs.end(), a.responses.begin(), a.responses.end());
        j["provenance"] = make_provenance("analyze --aggregate", {{"toolkit", cfg.to_json()}}, inputs);
        summary["aggregate"] = agg.to_json();
        write_json(a.out / "aggregate.json", j);
    }
    std::vector<fs::path> all_inputs{a.manifest};
    all_inputs.insert(all_inputs.end(), a.responses.begin(), a.responses.end());
    summary["provenance"] = make_provenance("analyze", {{"toolkit", cfg.to_json()}}, all_inputs);
    write_json(a.out / "index.json", summary);
    if (kept.empty()) {
        std::cerr << "every observer was excluded\n";
        return static_cast<int>(ExitCode::validation);
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct CorrelateArgs {
    fs::path summaries, out;
    std::string target = "both";
    std::optional<double> alpha;
    std::optional<std::size_t> m;
    bool svg = false;
};

int cmd_correlate(const ToolkitConfig& cfg, const CorrelateArgs& a) {
    const auto rows = read_summaries(a.summaries);
    const double alpha = a.alpha.value_or(cfg.analysis.alpha);
    const std::size_t m = a.m.value_or(cfg.analysis.bonferroni_m);

    std::vector<RegressionTarget> targets;
    if (a.target == "both" || a.target == "shape_bias") targets.push_back(RegressionTarget::shape_bias);
    if (a.target == "both" || a.target == "whitebox") targets.push_back(RegressionTarget::whitebox);
    if (targets.empty()) throw ValidationError("--target must be shape_bias, whitebox or both");

    const json prov = make_provenance("correlate",
                                      {{"toolkit", cfg.to_json()}, {"alpha", alpha}, {"m", m},
                                       {"shape_bias_mode", std::string(to_string(cfg.analysis.shape_bias_mode))}},
                                      {a.summaries});
    json reports = json::array();
    for (RegressionTarget t : targets) {
        const RegressionReport r = correlate(rows, t, alpha, m);
        reports.push_back(r.to_json());
        for (const auto& f : r.fits)
            std::cout << to_string(t) << "  " << to_string(f.group) << "  " << to_string(f.property) << "  slope "
                      << f.fit.slope << " +- " << f.fit.slope_se << "  p " << f.fit.p_value
                      << (f.significant ? "  *" : "") << "\n";
        for (const auto& s : r.skipped) std::cout << to_string(t) << "  skipped: " << s << "\n";
        for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
        if (a.svg)
            for (ChannelProperty p : kChannelProperties)
                write_text(a.out / (std::string(to_string(t)) + "_" + std::string(to_string(p)) + ".svg"),
                           svg::scatter(rows, p, t, r, prov));
    }
    write_json(a.out / "regression_report.json", {{"provenance", prov}, {"reports", reports}});
    return 0;
}

// ---------------------------------------------------------------------------

struct VerifyNoiseArgs {
    std::size_t seeds = 20;
    std::uint64_t first_seed = 1;
    std::optional<fs::path> out;
};

int cmd_verify_noise(const ToolkitConfig& cfg, const VerifyNoiseArgs& a) {
    json rows = json::array();
    bool ok = true;
    double worst_fraction = 1.0, worst_sd = 0.0, worst_mean = 0.0;
    for (std::size_t id = 1; id < kNumConditions; ++id) {
        const NoiseCondition c = NoiseCondition::from_id(id);
        const FrequencyBand band = band_for_index(*c.band_index, cfg.stimuli.convention);
        const double sd = c.sd(cfg.stimuli.sd_ladder);
        for (std::size_t s = 0; s < a.seeds; ++s) {
            const std::uint64_t seed = a.first_seed + s;
            const GrayImage n = bandpass_noise(seed, kStimulusSize, band, sd);
            const SpectrumReport rep = verify_spectrum(n, band);
            double mean = 0.0;
            for (double v : n.pixels) mean += v;
            mean /= static_cast<double>(n.pixels.size());
            double ss = 0.0;
            for (double v : n.pixels) ss += (v - mean) * (v - mean);
            const double got_sd = std::sqrt(ss / static_cast<double>(n.pixels.size()));
            const bool pass = rep.in_band_power_fraction >= 0.99 && std::abs(got_sd - sd) <= 1e-9 && std::abs(mean) <= 1e-6;
            ok = ok && pass;
            worst_fraction = std::min(worst_fraction, rep.in_band_power_fraction);
            worst_sd = std::max(worst_sd, std::abs(got_sd - sd));
            worst_mean = std::max(worst_mean, std::abs(mean));
            rows.push_back({{"condition_id", id}, {"sd", sd}, {"band_index", *c.band_index}, {"seed", seed},
                            {"in_band_fraction", rep.in_band_power_fraction}, {"sample_sd", got_sd}, {"mean", mean},
                            {"pass", pass}});
        }
    }
    std::cout << "conditions 28 x seeds " << a.seeds << ": worst in-band fraction " << worst_fraction
              << ", worst |sd error| " << worst_sd << ", worst |mean| " << worst_mean << (ok ? "  OK" : "  FAILED")
              << "\n";
    if (a.out)
        write_json(*a.out, {{"provenance", make_provenance("verify-noise", {{"toolkit", cfg.to_json()}, {"seeds", a.seeds},
                                                                          {"first_seed", a.first_seed}}, {})},
                            {"pass", ok},
                            {"rows", rows}});
    return ok ? 0 : static_cast<int>(ExitCode::validation);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Critical-band masking toolkit"};
    app.set_version_flag("--version", std::string(tool_version()));
    app.require_subcommand(1);
    fs::path config_path;
    app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "assign conditions and render a stimulus set");
    generate->add_option("--images", gen.images, "directory of category subfolders, or a path,category CSV")->required();
    generate->add_option("--out", gen.out, "output directory")->required();
    generate->add_option("--n", gen.n, "number of stimuli (default: every image)");
    generate->add_option("--seed", gen.seed, "master seed (overrides the config)");
    generate->add_option("--threads", gen.threads, "render threads (0 = all cores)");
    generate->add_flag("--manifest-only", gen.manifest_only, "write the manifest without rendering");

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "run one observer through a session over the wire protocol");
    run_cmd->add_option("--manifest", run.manifest)->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--stimuli", run.stimuli, "directory holding stimuli/<id>.png (default: manifest directory)");
    run_cmd->add_option("--responses", run.responses, "responses directory")->required();
    run_cmd->add_option("--observer-cmd", run.observer_cmd, "observer command line (stdio)");
    run_cmd->add_option("--observer-tcp", run.observer_tcp, "observer address host:port");
    run_cmd->add_flag("--inline-png", run.inline_png, "send images base64-encoded instead of by path");
    run_cmd->add_option("--timeout", run.timeout_s, "per-trial timeout in seconds");
    run_cmd->add_option("--stop-after", run.stop_after, "stop after this many new trials");

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "HTTP experiment server for human observers");
    serve_cmd->add_option("--manifest", serve.manifest)->required()->check(CLI::ExistingFile);
    serve_cmd->add_option("--stimuli", serve.stimuli);
    serve_cmd->add_option("--responses", serve.responses)->required();
    serve_cmd->add_option("--bind", serve.bind, "host:port (port 0 picks one)");

    AnalyzeArgs an;
    auto* analyze = app.add_subcommand("analyze", "heatmap, thresholds and channel fit per observer");
    analyze->add_option("--manifest", an.manifest)->required()->check(CLI::ExistingFile);
    analyze->add_option("--responses", an.responses, "response CSV files")->required()->check(CLI::ExistingFile);
    analyze->add_option("--out", an.out)->required();
    analyze->add_flag("--include-excluded", an.include_excluded);
    analyze->add_flag("--normalized", an.normalized, "divide accuracies by the noise-free accuracy");
    analyze->add_option("--aggregate", an.aggregate, "fit_to_average or average_of_fits");

    CorrelateArgs cor;
    auto* correlate_cmd = app.add_subcommand("correlate", "regress channel properties on shape bias / whitebox accuracy");
    correlate_cmd->add_option("--summaries", cor.summaries)->required()->check(CLI::ExistingFile);
    correlate_cmd->add_option("--out", cor.out)->required();
    correlate_cmd->add_option("--target", cor.target, "shape_bias, whitebox or both");
    correlate_cmd->add_option("--alpha", cor.alpha);
    correlate_cmd->add_option("--m", cor.m, "Bonferroni family size");
    correlate_cmd->add_flag("--svg", cor.svg, "write scatter plots");

    VerifyNoiseArgs vn;
    auto* verify = app.add_subcommand("verify-noise", "check spectra, SD and mean of every noise condition");
    verify->add_option("--seeds", vn.seeds);
    verify->add_option("--first-seed", vn.first_seed);
    verify->add_option("--out", vn.out, "JSON report path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(ExitCode::validation);
    }

    try {
        const ToolkitConfig cfg = config_path.empty() ? ToolkitConfig{} : ToolkitConfig::load(config_path);
        cfg.validate();
        if (*generate) return cmd_generate(cfg, gen);
        if (*run_cmd) return cmd_run(cfg, run);
        if (*serve_cmd) return cmd_serve(cfg, serve);
        if (*analyze) return cmd_analyze(cfg, an);
        if (*correlate_cmd) return cmd_correlate(cfg, cor);
        if (*verify) return cmd_verify_noise(cfg, vn);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::validation);
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::io);
    }
    return 0;
}
