#pragma once

// Stage functions shared by the CLI subcommands, and the end-to-end run that
// composes them: ingest -> select -> rank-stealth -> poison -> evaluate.

#include "dataset_io.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "hash.hpp"
#include "poison.hpp"
#include "selection.hpp"
#include "serialization.hpp"
#include "stealth.hpp"
#include "training_log.hpp"
#include "triggers.hpp"

#include <toml.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace poisonforge {

// --- selection stage --------------------------------------------------------

struct SelectOptions {
    SelectionStrategy strategy;
    EventsMode events_mode = EventsMode::transitions;
    DiversityMean diversity_mean = DiversityMean::per_sample;
    std::optional<std::pair<std::size_t, std::size_t>> epoch_range;
    bool scope_all = false;
};

inline Json select_options_json(const SelectOptions& o) {
    Json j;
    j["scope"] = o.scope_all ? "all" : "target";
    j["events_mode"] = o.events_mode == EventsMode::transitions ? "transitions" : "epochs";
    j["diversity_mu"] = o.diversity_mean == DiversityMean::per_sample ? "per-sample" : "global";
    j["epoch_range"] = o.epoch_range
                           ? Json(std::to_string(o.epoch_range->first) + ".." +
                                  std::to_string(o.epoch_range->second))
                           : Json(nullptr);
    return j;
}

inline EventsMode events_mode_from_string(std::string_view s) {
    if (s == "transitions") return EventsMode::transitions;
    if (s == "epochs") return EventsMode::epochs;
    fail_validation("events mode must be transitions or epochs");
}

inline DiversityMean diversity_mean_from_string(std::string_view s) {
    if (s == "per-sample") return DiversityMean::per_sample;
    if (s == "global") return DiversityMean::global;
    fail_validation("diversity mean must be per-sample or global");
}

// Scores the candidate samples of `log` under the configured metric.
inline ScoredSamples score_candidates(const PredictionLog& full_log, const SelectOptions& o) {
    const PredictionLog log = o.epoch_range
                                  ? slice_epochs(full_log, o.epoch_range->first, o.epoch_range->second)
                                  : full_log;
    const auto target = o.scope_all ? std::optional<std::size_t>{} : o.strategy.target_label;
    if (!o.scope_all && !target)
        fail_validation("a target label is required unless the scope is all");

    const Metric metric = o.strategy.metric;
    if (metric == Metric::loss) return score_scalar(log, ScalarField::loss, target);
    if (metric == Metric::grad_norm) return score_scalar(log, ScalarField::grad_norm, target);

    if (metric == Metric::random) {
        ScoredSamples out;
        for (std::size_t i = 0; i < log.num_samples(); ++i)
            if (!target || log.true_labels[i] == *target) {
                out.indices.push_back(log.sample_indices[i]);
                out.values.push_back(0.0);
            }
        if (out.indices.empty())
            fail_validation("no target samples in log");
        return out;
    }

    const auto stats = target ? compute_misclass_stats(log, *target, o.events_mode)
                              : compute_misclass_stats_all(log, o.events_mode);
    if (metric == Metric::forget) return score_forget(stats);
    if (metric == Metric::diversity) return score_diversity(stats, o.diversity_mean);
    return score_res(stats, class_weights(stats, *negative_function_of(metric)));
}

// Random selection straight from dataset labels, for runs without a log.
inline ScoredSamples random_candidates(const LabeledDataset& dataset, std::size_t target) {
    ScoredSamples out;
    out.indices = target_subset(dataset, target);
    out.values.assign(out.indices.size(), 0.0);
    return out;
}

// --- run configuration ------------------------------------------------------

struct StealthStage {
    StealthOptions options;
    double keep = 0.5;
};

struct EvaluateStage {
    std::vector<std::filesystem::path> clean;
    std::optional<std::filesystem::path> triggered;
    bool exclude_target_class = false;
};

struct RunConfig {
    std::filesystem::path dataset;
    std::optional<std::filesystem::path> log;
    DatasetProfile profile = cifar10_profile();
    std::filesystem::path output_dir = "out";
    SelectOptions selection;
    std::optional<std::filesystem::path> trigger_file;
    std::optional<std::string> trigger_preset;
    StealthStage stealth;
    std::optional<EvaluateStage> evaluate;

    std::size_t target_label() const { return selection.strategy.target_label.value_or(0); }

    void validate() const {
        if (dataset.empty()) fail_validation("config: dataset path is required");
        if (!std::filesystem::exists(dataset))
            fail_io("config: dataset " + dataset.string() + " does not exist");
        if (log && !std::filesystem::exists(*log))
            fail_io("config: log " + log->string() + " does not exist");
        if (!log && selection.strategy.metric != Metric::random)
            fail_validation("config: metric " + std::string(to_string(selection.strategy.metric)) +
                            " needs a training log");
        if (trigger_file.has_value() == trigger_preset.has_value())
            fail_validation("config: set exactly one of trigger.file or trigger.preset");
        if (trigger_file && !std::filesystem::exists(*trigger_file))
            fail_io("config: trigger " + trigger_file->string() + " does not exist");
        if (selection.strategy.target_label && *selection.strategy.target_label >= profile.num_classes)
            fail_validation("config: target label out of range");
        selection.strategy.validate();
        if (!(stealth.keep > 0.0 && stealth.keep <= 1.0))
            fail_validation("config: stealth.keep must lie in (0, 1]");
        if (evaluate) {
            for (const auto& p : evaluate->clean)
                if (!std::filesystem::exists(p)) fail_io("config: " + p.string() + " does not exist");
            if (evaluate->triggered && !std::filesystem::exists(*evaluate->triggered))
                fail_io("config: " + evaluate->triggered->string() + " does not exist");
        }
    }
};

namespace detail {

template <typename T>
std::optional<T> toml_opt(const toml::node_view<const toml::node>& node, const char* what) {
    if (!node) return std::nullopt;
    if (auto v = node.value<T>()) return *v;
    fail_validation(std::string("config: '") + what + "' has the wrong type");
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path = p;
    return path.is_relative() ? base / path : path;
}

} // namespace detail

// Parses a TOML run configuration. Relative paths are resolved against the
// directory holding the config file.
inline RunConfig load_run_config(const std::filesystem::path& path) {
    toml::table tbl;
    try {
        tbl = toml::parse_file(path.string());
    } catch (const toml::parse_error& e) {
        if (!std::filesystem::exists(path)) fail_io("cannot open config " + path.string());
        fail_validation("config: " + std::string(e.description()));
    }
    const auto base = path.parent_path();
    const toml::table& root = tbl;
    RunConfig cfg;

    if (auto name = detail::toml_opt<std::string>(root["profile"], "profile")) {
        auto p = profile_by_name(*name);
        if (!p) fail_validation("config: unknown profile '" + *name + "'");
        cfg.profile = *p;
    }
    if (auto h = detail::toml_opt<int64_t>(root["height"], "height")) cfg.profile.height = static_cast<std::size_t>(*h);
    if (auto w = detail::toml_opt<int64_t>(root["width"], "width")) cfg.profile.width = static_cast<std::size_t>(*w);
    if (auto k = detail::toml_opt<int64_t>(root["classes"], "classes")) cfg.profile.num_classes = static_cast<std::size_t>(*k);

    if (auto d = detail::toml_opt<std::string>(root["dataset"], "dataset")) cfg.dataset = detail::resolve(base, *d);
    if (auto l = detail::toml_opt<std::string>(root["log"], "log")) cfg.log = detail::resolve(base, *l);
    cfg.output_dir = detail::resolve(base, detail::toml_opt<std::string>(root["output_dir"], "output_dir").value_or("out"));

    auto& strat = cfg.selection.strategy;
    strat.target_label = static_cast<std::size_t>(
        detail::toml_opt<int64_t>(root["target_label"], "target_label").value_or(
            static_cast<int64_t>(cfg.profile.target_label)));
    strat.seed = static_cast<std::uint64_t>(detail::toml_opt<int64_t>(root["seed"], "seed").value_or(0));

    const auto sel = root["selection"];
    strat.metric = metric_from_string(detail::toml_opt<std::string>(sel["metric"], "selection.metric").value_or("res-log"));
    if (auto r = detail::toml_opt<double>(sel["rate"], "selection.rate")) strat.rate = *r;
    if (auto c = detail::toml_opt<int64_t>(sel["count"], "selection.count")) strat.count = static_cast<std::size_t>(*c);
    if (auto m = detail::toml_opt<std::string>(sel["events_mode"], "selection.events_mode"))
        cfg.selection.events_mode = events_mode_from_string(*m);
    if (auto m = detail::toml_opt<std::string>(sel["diversity_mu"], "selection.diversity_mu"))
        cfg.selection.diversity_mean = diversity_mean_from_string(*m);
    if (auto r = detail::toml_opt<std::string>(sel["epoch_range"], "selection.epoch_range"))
        cfg.selection.epoch_range = parse_epoch_range(*r);
    if (auto s = detail::toml_opt<std::string>(sel["scope"], "selection.scope")) {
        if (*s != "target" && *s != "all") fail_validation("config: selection.scope must be target or all");
        cfg.selection.scope_all = *s == "all";
    }

    const auto trig = root["trigger"];
    if (auto f = detail::toml_opt<std::string>(trig["file"], "trigger.file")) cfg.trigger_file = detail::resolve(base, *f);
    cfg.trigger_preset = detail::toml_opt<std::string>(trig["preset"], "trigger.preset");

    const auto st = root["stealth"];
    if (auto m = detail::toml_opt<std::string>(st["metric"], "stealth.metric")) {
        if (*m == "mse") cfg.stealth.options.metric = StealthMetric::mse;
        else if (*m == "gmsd") cfg.stealth.options.metric = StealthMetric::gmsd;
        else if (*m != "auto") fail_validation("config: stealth.metric must be auto, mse or gmsd");
    }
    cfg.stealth.keep = detail::toml_opt<double>(st["keep"], "stealth.keep").value_or(0.5);
    cfg.stealth.options.gmsd.c = detail::toml_opt<double>(st["gmsd_c"], "stealth.gmsd_c").value_or(0.0026);
    if (auto c = detail::toml_opt<std::string>(st["color"], "stealth.color")) {
        if (*c == "luminance") cfg.stealth.options.gmsd.color = ColorMode::luminance;
        else if (*c == "per-channel") cfg.stealth.options.gmsd.color = ColorMode::per_channel;
        else fail_validation("config: stealth.color must be luminance or per-channel");
    }
    if (auto p = detail::toml_opt<std::string>(st["placement"], "stealth.placement")) {
        if (*p == "fixed") cfg.stealth.options.placement = PlacementKind::fixed;
        else if (*p == "search") cfg.stealth.options.placement = PlacementKind::search_min;
        else fail_validation("config: stealth.placement must be fixed or search");
    }

    if (root["evaluate"].is_table()) {
        EvaluateStage e;
        const auto evv = root["evaluate"];
        if (const auto* arr = evv["clean"].as_array()) {
            for (const auto& item : *arr) {
                auto s = item.value<std::string>();
                if (!s) fail_validation("config: evaluate.clean must hold paths");
                e.clean.push_back(detail::resolve(base, *s));
            }
        } else if (auto s = detail::toml_opt<std::string>(evv["clean"], "evaluate.clean")) {
            e.clean.push_back(detail::resolve(base, *s));
        }
        if (auto t = detail::toml_opt<std::string>(evv["triggered"], "evaluate.triggered"))
            e.triggered = detail::resolve(base, *t);
        e.exclude_target_class =
            detail::toml_opt<bool>(evv["exclude_target_class"], "evaluate.exclude_target_class").value_or(false);
        cfg.evaluate = std::move(e);
    }
    return cfg;
}

// --- end-to-end run ---------------------------------------------------------

struct RunArtifacts {
    std::filesystem::path report;
    std::filesystem::path ranking;
    std::filesystem::path poisoned;
    std::filesystem::path manifest;
    std::optional<std::filesystem::path> evaluation;
};

inline TriggerSpec resolve_trigger(const RunConfig& cfg) {
    if (cfg.trigger_file) return load_trigger(*cfg.trigger_file, cfg.profile.height, cfg.profile.width);
    return preset_trigger(*cfg.trigger_preset, cfg.profile.height, cfg.profile.width);
}

inline std::string file_sha256(const std::filesystem::path& p) { return sha256_hex(read_file_bytes(p)); }

inline EvalReport evaluate_predictions(const EvaluateStage& e, std::size_t target) {
    EvalReport report;
    report.target_label = target;
    for (const auto& p : e.clean) {
        const auto rows = parse_predictions(p);
        report.ba_runs.push_back(compute_ba(rows));
    }
    if (e.triggered) {
        const auto rows = parse_predictions(*e.triggered);
        report.asr = compute_asr(rows, target, e.exclude_target_class);
    }
    return report;
}

// Runs every stage and writes report.json, ranking.json, poisoned.bin and
// manifest.json (plus eval.json when configured) into the output directory.
// Identical configuration and inputs give byte-identical outputs. On failure,
// files written by this run are removed and the error names the stage.
inline RunArtifacts run_pipeline(const RunConfig& cfg) {
    RunArtifacts out{cfg.output_dir / "report.json", cfg.output_dir / "ranking.json",
                     cfg.output_dir / "poisoned.bin", cfg.output_dir / "manifest.json", std::nullopt};
    std::vector<std::filesystem::path> written;
    std::string stage = "validate";

    auto write_json = [&](const std::filesystem::path& p, const Json& j) {
        write_json_file(p, j);
        written.push_back(p);
    };

    try {
        cfg.validate();
        std::filesystem::create_directories(cfg.output_dir);

        stage = "ingest";
        const auto dataset = read_cifar_binary(cfg.dataset, cfg.profile);
        std::optional<PredictionLog> log;
        if (cfg.log) log = parse_log(*cfg.log, cfg.profile.num_classes);

        stage = "select";
        const auto scores = log ? score_candidates(*log, cfg.selection)
                                : random_candidates(dataset, cfg.target_label());
        const auto report = select(cfg.selection.strategy, scores);
        write_json(out.report, report_to_json(report, select_options_json(cfg.selection)));

        stage = "rank-stealth";
        const auto trigger = resolve_trigger(cfg);
        const auto ranking = rank_stealth(dataset.images, report.selected, trigger, cfg.stealth.options);
        std::optional<SelectionReport> composed;
        if (!report.selected.empty())
            composed = compose_with_stealth(report, ranking.score_map(), cfg.stealth.keep);
        write_json(out.ranking, ranking_to_json(ranking, cfg.stealth.options, composed));

        stage = "poison";
        const auto& final_selection = composed ? composed->selected : report.selected;
        auto [poisoned, manifest] = poison_dataset(dataset, final_selection, cfg.target_label(), trigger);
        manifest.input_hashes["dataset"] = file_sha256(cfg.dataset);
        if (cfg.log) manifest.input_hashes["log"] = file_sha256(*cfg.log);
        if (cfg.trigger_file) manifest.input_hashes["trigger"] = file_sha256(*cfg.trigger_file);
        write_cifar_binary(poisoned, out.poisoned);
        written.push_back(out.poisoned);
        write_json(out.manifest, manifest_to_json(manifest));

        if (cfg.evaluate) {
            stage = "evaluate";
            out.evaluation = cfg.output_dir / "eval.json";
            write_json(*out.evaluation, eval_to_json(evaluate_predictions(*cfg.evaluate, cfg.target_label())));
        }
    } catch (const Error& e) {
        std::error_code ec;
        for (const auto& p : written) std::filesystem::remove(p, ec);
        throw Error(e.kind(), "stage '" + stage + "': " + e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        std::error_code ec;
        for (const auto& p : written) std::filesystem::remove(p, ec);
        throw Error(ErrorKind::io, "stage '" + stage + "': " + e.what());
    }
    return out;
}

} // namespace poisonforge
