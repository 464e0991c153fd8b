// poisonforge command-line front end.
//
//   poisonforge ingest-log   --log FILE --target-label N --out stats.json
//   poisonforge select       --metric M --target-label N --rate F|--count N --log FILE --out report.json
//   poisonforge rank-stealth --trigger trigger.json --candidates report.json --dataset in.bin --out ranking.json
//   poisonforge poison       --dataset in.bin --report report.json --trigger trigger.json --out poisoned.bin --manifest manifest.json
//   poisonforge evaluate     --clean preds.csv --triggered preds.csv --target-label N
//   poisonforge make-trigger --preset NAME --out trigger.json
//   poisonforge run          --config run.toml
//
// Exit codes: 0 success, 1 validation error, 2 I/O error, 3 degenerate statistics.

#include <poisonforge/poisonforge.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace poisonforge;

namespace {

struct ProfileFlags {
    std::string profile = "cifar10";
    std::optional<std::size_t> height;
    std::optional<std::size_t> width;
    std::optional<std::size_t> classes;

    void add(CLI::App* app) {
        app->add_option("--profile", profile, "Dataset profile")
            ->check(CLI::IsMember({"cifar10", "cifar100", "tiny"}));
        app->add_option("--height", height, "Image height override");
        app->add_option("--width", width, "Image width override");
        app->add_option("--classes", classes, "Number of classes override");
    }

    DatasetProfile resolve() const {
        auto p = *profile_by_name(profile);
        if (height) p.height = *height;
        if (width) p.width = *width;
        if (classes) p.num_classes = *classes;
        return p;
    }
};

struct SelectFlags {
    std::string metric = "res-log";
    std::optional<std::size_t> target;
    std::optional<double> rate;
    std::optional<std::size_t> count;
    std::uint64_t seed = 0;
    std::string events_mode = "transitions";
    std::string diversity_mu = "per-sample";
    std::optional<std::string> epoch_range;
    std::string scope = "target";

    void add(CLI::App* app) {
        app->add_option("--metric", metric, "Selection metric")
            ->check(CLI::IsMember({"res-log", "res-x", "res-x2", "res-exp", "forget", "loss", "grad",
                                   "diversity", "random"}));
        app->add_option("--target-label", target, "Target label y_t");
        auto* r = app->add_option("--rate", rate, "Fraction of the target subset to poison");
        auto* c = app->add_option("--count", count, "Number of samples to poison");
        r->excludes(c);
        app->add_option("--seed", seed, "Seed for random selection");
        app->add_option("--events-mode", events_mode, "Misclassification event counting")
            ->check(CLI::IsMember({"transitions", "epochs"}));
        app->add_option("--diversity-mu", diversity_mu, "Mean used by the diversity metric")
            ->check(CLI::IsMember({"per-sample", "global"}));
        app->add_option("--epoch-range", epoch_range, "Restrict statistics to epochs a..b");
        app->add_option("--scope", scope, "Candidate scope")->check(CLI::IsMember({"target", "all"}));
    }

    SelectOptions resolve(std::size_t default_target) const {
        SelectOptions o;
        o.strategy.metric = metric_from_string(metric);
        o.strategy.seed = seed;
        o.strategy.rate = rate;
        o.strategy.count = count;
        o.scope_all = scope == "all";
        o.strategy.target_label = o.scope_all && !target ? std::nullopt
                                                         : std::optional<std::size_t>(target.value_or(default_target));
        o.events_mode = events_mode_from_string(events_mode);
        o.diversity_mean = diversity_mean_from_string(diversity_mu);
        if (epoch_range) o.epoch_range = parse_epoch_range(*epoch_range);
        return o;
    }
};

struct StealthFlags {
    std::string metric = "auto";
    double gmsd_c = 0.0026;
    std::string color = "luminance";
    std::string placement = "fixed";

    void add(CLI::App* app) {
        app->add_option("--metric", metric, "Stealth metric")->check(CLI::IsMember({"auto", "gmsd", "mse"}));
        app->add_option("--gmsd-c", gmsd_c, "GMSD stability constant on [0,1] intensities");
        app->add_option("--color", color, "GMSD colour handling")
            ->check(CLI::IsMember({"luminance", "per-channel"}));
        app->add_option("--placement", placement, "Badnets MSE placement")
            ->check(CLI::IsMember({"fixed", "search"}));
    }

    StealthOptions resolve() const {
        StealthOptions o;
        if (metric == "gmsd") o.metric = StealthMetric::gmsd;
        if (metric == "mse") o.metric = StealthMetric::mse;
        o.gmsd.c = gmsd_c;
        o.gmsd.color = color == "luminance" ? ColorMode::luminance : ColorMode::per_channel;
        o.placement = placement == "fixed" ? PlacementKind::fixed : PlacementKind::search_min;
        return o;
    }
};

void emit(const Json& j, const std::optional<fs::path>& out) {
    if (out) write_json_file(*out, j);
    else std::cout << dump_json(j);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"poisonforge: clean-label poisoning dataset construction"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    // ingest-log
    auto* ingest = app.add_subcommand("ingest-log", "Validate a prediction log and derive training statistics");
    fs::path ingest_log;
    std::optional<fs::path> ingest_out, ingest_canonical;
    ProfileFlags ingest_profile;
    SelectFlags ingest_sel;
    ingest->add_option("--log", ingest_log, "Prediction log CSV")->required();
    ingest->add_option("--out", ingest_out, "Statistics JSON (stdout if omitted)");
    ingest->add_option("--canonical", ingest_canonical, "Write the log back in canonical row order");
    ingest_profile.add(ingest);
    ingest->add_option("--target-label", ingest_sel.target, "Target label y_t");
    ingest->add_option("--events-mode", ingest_sel.events_mode)->check(CLI::IsMember({"transitions", "epochs"}));
    ingest->add_option("--epoch-range", ingest_sel.epoch_range, "Restrict statistics to epochs a..b");
    ingest->add_option("--scope", ingest_sel.scope)->check(CLI::IsMember({"target", "all"}));

    // select
    auto* sel = app.add_subcommand("select", "Rank target-class samples and choose the poison set");
    std::optional<fs::path> sel_log, sel_dataset, sel_out;
    ProfileFlags sel_profile;
    SelectFlags sel_flags;
    sel->add_option("--log", sel_log, "Prediction log CSV");
    sel->add_option("--dataset", sel_dataset, "Dataset (random selection without a log)");
    sel->add_option("--out", sel_out, "Selection report JSON (stdout if omitted)");
    sel_profile.add(sel);
    sel_flags.add(sel);

    // rank-stealth
    auto* rank = app.add_subcommand("rank-stealth", "Rank candidates by visual insensitivity to a trigger");
    fs::path rank_trigger, rank_candidates, rank_dataset;
    std::optional<fs::path> rank_out;
    std::optional<double> rank_keep;
    ProfileFlags rank_profile;
    StealthFlags rank_flags;
    rank->add_option("--trigger", rank_trigger, "Trigger JSON")->required();
    rank->add_option("--candidates", rank_candidates, "Selection report JSON")->required();
    rank->add_option("--dataset", rank_dataset, "Dataset binary")->required();
    rank->add_option("--out", rank_out, "Ranking JSON (stdout if omitted)");
    rank->add_option("--keep", rank_keep, "Keep this fraction of the candidates, stealthiest first");
    rank_profile.add(rank);
    rank_flags.add(rank);

    // poison
    auto* poison = app.add_subcommand("poison", "Apply the trigger to the selected samples");
    fs::path poison_dataset_path, poison_report, poison_trigger, poison_out;
    std::optional<fs::path> poison_manifest;
    std::optional<std::size_t> poison_target;
    ProfileFlags poison_profile;
    poison->add_option("--dataset", poison_dataset_path, "Input dataset binary")->required();
    poison->add_option("--report", poison_report, "Any stage JSON with a 'selected' list")->required();
    poison->add_option("--trigger", poison_trigger, "Trigger JSON")->required();
    poison->add_option("--out", poison_out, "Poisoned dataset binary")->required();
    poison->add_option("--manifest", poison_manifest, "Manifest JSON (stdout if omitted)");
    poison->add_option("--target-label", poison_target, "Target label, if the report carries none");
    poison_profile.add(poison);

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "Compute BA and ASR from prediction CSVs");
    std::vector<fs::path> eval_clean, eval_multi;
    std::optional<fs::path> eval_triggered, eval_out;
    std::size_t eval_target = 0;
    bool eval_exclude = false;
    eval->add_option("--clean", eval_clean, "Clean test predictions (repeat to average epochs)");
    eval->add_option("--multi-epoch", eval_multi, "Clean predictions of several epochs; BA is their mean")
        ->expected(1, -1);
    eval->add_option("--triggered", eval_triggered, "Triggered test predictions");
    eval->add_option("--target-label", eval_target, "Target label y_t");
    eval->add_flag("--exclude-target-class", eval_exclude, "Skip ASR rows already labelled y_t");
    eval->add_option("--out", eval_out, "Evaluation JSON (stdout if omitted)");

    // make-trigger
    auto* make = app.add_subcommand("make-trigger", "Write a preset trigger specification");
    std::string make_preset;
    std::optional<fs::path> make_out;
    ProfileFlags make_profile;
    make->add_option("--preset", make_preset, "Preset family")
        ->required()
        ->check(CLI::IsMember(std::vector<std::string>(std::begin(kPresetNames), std::end(kPresetNames))));
    make->add_option("--out", make_out, "Trigger JSON (stdout if omitted)");
    make_profile.add(make);

    // run
    auto* run = app.add_subcommand("run", "Run the full pipeline from a TOML config");
    fs::path run_config;
    std::optional<fs::path> run_out_dir;
    std::optional<std::size_t> run_target, run_count;
    std::optional<std::uint64_t> run_seed;
    std::optional<double> run_rate, run_keep;
    std::optional<std::string> run_metric;
    run->add_option("--config", run_config, "Run configuration (TOML)")->required();
    run->add_option("--out-dir", run_out_dir, "Override output directory");
    run->add_option("--target-label", run_target, "Override target label");
    run->add_option("--seed", run_seed, "Override seed");
    run->add_option("--metric", run_metric, "Override selection metric");
    auto* rr = run->add_option("--rate", run_rate, "Override poison rate");
    auto* rc = run->add_option("--count", run_count, "Override poison count");
    rr->excludes(rc);
    run->add_option("--keep", run_keep, "Override stealth keep fraction");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ErrorKind::validation);
    }

    try {
        if (ingest->parsed()) {
            const auto profile = ingest_profile.resolve();
            const auto log = parse_log(ingest_log, profile.num_classes);
            if (ingest_canonical) {
                std::ofstream out(*ingest_canonical, std::ios::trunc);
                if (!out) fail_io("cannot open " + ingest_canonical->string());
                out << serialize_log(log);
            }
            const auto opts = ingest_sel.resolve(profile.target_label);
            const auto sliced = opts.epoch_range
                                    ? slice_epochs(log, opts.epoch_range->first, opts.epoch_range->second)
                                    : log;
            const auto stats = opts.scope_all
                                   ? compute_misclass_stats_all(sliced, opts.events_mode)
                                   : compute_misclass_stats(sliced, *opts.strategy.target_label, opts.events_mode);
            std::cerr << "log: " << log.num_epochs << " epochs, " << log.num_samples() << " samples\n";
            emit(stats_to_json(stats), ingest_out);
        } else if (sel->parsed()) {
            const auto profile = sel_profile.resolve();
            if (!sel_flags.rate && !sel_flags.count)
                fail_validation("select needs --rate or --count");
            const auto opts = sel_flags.resolve(profile.target_label);
            ScoredSamples scores;
            if (sel_log) {
                scores = score_candidates(parse_log(*sel_log, profile.num_classes), opts);
            } else if (sel_dataset && opts.strategy.metric == Metric::random && !opts.scope_all) {
                scores = random_candidates(read_cifar_binary(*sel_dataset, profile), *opts.strategy.target_label);
            } else {
                fail_validation("select needs --log (or --dataset with --metric random)");
            }
            emit(report_to_json(select(opts.strategy, scores), select_options_json(opts)), sel_out);
        } else if (rank->parsed()) {
            const auto profile = rank_profile.resolve();
            const auto dataset = read_cifar_binary(rank_dataset, profile);
            const auto trigger = load_trigger(rank_trigger, profile.height, profile.width);
            const auto report = report_from_json(read_json_file(rank_candidates));
            const auto options = rank_flags.resolve();
            const auto ranking = rank_stealth(dataset.images, report.selected, trigger, options);
            std::optional<SelectionReport> composed;
            if (rank_keep) composed = compose_with_stealth(report, ranking.score_map(), *rank_keep);
            emit(ranking_to_json(ranking, options, composed), rank_out);
        } else if (poison->parsed()) {
            const auto profile = poison_profile.resolve();
            const auto dataset = read_cifar_binary(poison_dataset_path, profile);
            const auto trigger = load_trigger(poison_trigger, profile.height, profile.width);
            const auto doc = selection_from_json(read_json_file(poison_report));
            const auto target = poison_target ? poison_target : doc.target_label;
            if (!target) fail_validation("no target label: pass --target-label");
            auto [poisoned, manifest] = poison_dataset(dataset, doc.selected, *target, trigger);
            manifest.input_hashes["dataset"] = file_sha256(poison_dataset_path);
            manifest.input_hashes["selection"] = file_sha256(poison_report);
            manifest.input_hashes["trigger"] = file_sha256(poison_trigger);
            write_cifar_binary(poisoned, poison_out);
            emit(manifest_to_json(manifest), poison_manifest);
        } else if (eval->parsed()) {
            eval_clean.insert(eval_clean.end(), eval_multi.begin(), eval_multi.end());
            if (eval_clean.empty() && !eval_triggered)
                fail_validation("evaluate needs --clean and/or --triggered");
            EvaluateStage stage{eval_clean, eval_triggered, eval_exclude};
            emit(eval_to_json(evaluate_predictions(stage, eval_target)), eval_out);
        } else if (make->parsed()) {
            const auto profile = make_profile.resolve();
            emit(trigger_to_json(preset_trigger(make_preset, profile.height, profile.width)), make_out);
        } else if (run->parsed()) {
            auto cfg = load_run_config(run_config);
            if (run_out_dir) cfg.output_dir = *run_out_dir;
            if (run_target) cfg.selection.strategy.target_label = *run_target;
            if (run_seed) cfg.selection.strategy.seed = *run_seed;
            if (run_metric) cfg.selection.strategy.metric = metric_from_string(*run_metric);
            if (run_rate) {
                cfg.selection.strategy.rate = *run_rate;
                cfg.selection.strategy.count.reset();
            }
            if (run_count) {
                cfg.selection.strategy.count = *run_count;
                cfg.selection.strategy.rate.reset();
            }
            if (run_keep) cfg.stealth.keep = *run_keep;
            const auto artifacts = run_pipeline(cfg);
            std::cerr << "wrote " << artifacts.manifest.string() << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "poisonforge: " << e.what() << "\n";
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        std::cerr << "poisonforge: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::io);
    }
    return 0;
}
