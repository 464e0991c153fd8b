#include "oracles.hpp"

#include <poisonforge/poisonforge.hpp>

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <random>

using namespace poisonforge;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(POISONFORGE_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

std::string read_text(const fs::path& p) {
    const auto bytes = read_file_bytes(p);
    return std::string(bytes.begin(), bytes.end());
}

// A 100-image synthetic dataset with a 20-epoch log whose true labels match it.
class ToyRun : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / "poisonforge_tests" /
              ::testing::UnitTest::GetInstance()->current_test_info()->name();
        fs::remove_all(dir);
        fs::create_directories(dir);
        std::mt19937 rng(2024);
        dataset = oracle::random_dataset(rng, 100, 10);
        write_cifar_binary(dataset, dir / "train.bin");

        auto log = oracle::random_log(rng, 100, 20, 10);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::uniform_int_distribution<std::size_t> lab(0, 9);
        for (std::size_t i = 0; i < 100; ++i) {
            log.true_labels[i] = dataset.labels[i];
            for (auto& p : log.predictions[i]) p = u(rng) < 0.6 ? dataset.labels[i] : lab(rng);
        }
        write_text(dir / "log.csv", serialize_log(log));
    }

    void write_config(const std::string& extra_selection, const std::string& tail = "") {
        write_text(dir / "run.toml",
                   "profile = \"cifar10\"\n"
                   "dataset = \"train.bin\"\n"
                   "log = \"log.csv\"\n"
                   "output_dir = \"out\"\n"
                   "target_label = 0\n"
                   "seed = 7\n\n"
                   "[selection]\n"
                   "metric = \"res-log\"\n" +
                       extra_selection +
                       "\n[trigger]\npreset = \"blended_c\"\n\n"
                       "[stealth]\nkeep = 0.5\n" +
                       tail);
    }

    fs::path dir;
    LabeledDataset dataset;
};

} // namespace

TEST_F(ToyRun, LoadsConfigRelativeToItsDirectory) {
    write_config("rate = 0.5\nepoch_range = \"2..19\"\n");
    auto cfg = load_run_config(dir / "run.toml");
    EXPECT_EQ(cfg.dataset, dir / "train.bin");
    EXPECT_EQ(cfg.output_dir, dir / "out");
    EXPECT_EQ(cfg.selection.strategy.metric, Metric::res_log);
    EXPECT_EQ(cfg.selection.strategy.rate, 0.5);
    EXPECT_EQ(cfg.selection.strategy.seed, 7u);
    EXPECT_EQ(cfg.selection.epoch_range, (std::pair<std::size_t, std::size_t>{2, 19}));
    EXPECT_EQ(cfg.trigger_preset, "blended_c");
    EXPECT_NO_THROW(cfg.validate());
}

TEST_F(ToyRun, ConfigErrors) {
    write_text(dir / "bad.toml", "dataset = 5\n");
    EXPECT_THROW(load_run_config(dir / "bad.toml"), Error);
    write_text(dir / "broken.toml", "dataset = \n");
    EXPECT_THROW(load_run_config(dir / "broken.toml"), Error);
    try {
        load_run_config(dir / "missing.toml");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::io);
    }
    write_config("rate = 0.5\ncount = 3\n");
    EXPECT_THROW(load_run_config(dir / "run.toml").validate(), Error);
}

TEST_F(ToyRun, RateZeroLeavesDatasetUntouched) {
    write_config("rate = 0.0\n");
    auto art = run_pipeline(load_run_config(dir / "run.toml"));
    EXPECT_EQ(read_file_bytes(art.poisoned), read_file_bytes(dir / "train.bin"));
    auto manifest = read_json_file(art.manifest);
    EXPECT_TRUE(manifest["indices"].empty());
}

TEST_F(ToyRun, RunsAreByteIdentical) {
    write_config("rate = 0.6\n");
    auto cfg = load_run_config(dir / "run.toml");
    auto first = run_pipeline(cfg);
    const auto m1 = read_text(first.manifest), r1 = read_text(first.report), k1 = read_text(first.ranking);
    const auto p1 = read_file_bytes(first.poisoned);
    cfg.output_dir = dir / "again";
    auto second = run_pipeline(cfg);
    EXPECT_EQ(read_text(second.manifest), m1);
    EXPECT_EQ(read_text(second.report), r1);
    EXPECT_EQ(read_text(second.ranking), k1);
    EXPECT_EQ(read_file_bytes(second.poisoned), p1);
}

TEST_F(ToyRun, MatchesManualLibraryComposition) {
    write_config("rate = 0.6\n");
    auto cfg = load_run_config(dir / "run.toml");
    auto art = run_pipeline(cfg);

    SelectionStrategy st;
    st.metric = Metric::res_log;
    st.rate = 0.6;
    st.target_label = 0;
    auto stats = compute_misclass_stats(parse_log(dir / "log.csv", 10), 0);
    auto ref = oracle::res_metric(stats.events, 0, 10, oracle::NF::log);
    auto top = oracle::top_k(stats.sample_indices, ref.metric,
                             static_cast<std::size_t>(std::floor(0.6 * stats.size() + 1e-9)));
    auto trigger = preset_trigger("blended_c");
    std::map<std::size_t, double> stealth;
    for (auto i : top) stealth[i] = oracle::gmsd(dataset.images[i], apply_trigger(dataset.images[i], trigger));
    auto kept = oracle::sort_and_truncate(top, stealth, 0.5);
    std::sort(kept.begin(), kept.end());

    auto manifest = read_json_file(art.manifest);
    EXPECT_EQ(manifest["indices"].get<std::vector<std::size_t>>(), kept);
    EXPECT_EQ(manifest["reproducibility"]["input_hashes"]["dataset"], file_sha256(dir / "train.bin"));
}

TEST_F(ToyRun, MatchesManualCliComposition) {
    write_config("rate = 0.6\n");
    auto art = run_pipeline(load_run_config(dir / "run.toml"));

    ASSERT_EQ(run_cli("select --log " + q(dir / "log.csv") + " --metric res-log --target-label 0 --rate 0.6 --seed 7 --out " +
                      q(dir / "sel.json")),
              0);
    ASSERT_EQ(run_cli("make-trigger --preset blended_c --out " + q(dir / "trigger.json")), 0);
    ASSERT_EQ(run_cli("rank-stealth --trigger " + q(dir / "trigger.json") + " --candidates " + q(dir / "sel.json") +
                      " --dataset " + q(dir / "train.bin") + " --keep 0.5 --out " + q(dir / "rank.json")),
              0);
    ASSERT_EQ(run_cli("poison --dataset " + q(dir / "train.bin") + " --report " + q(dir / "rank.json") +
                      " --trigger " + q(dir / "trigger.json") + " --out " + q(dir / "poisoned.bin") +
                      " --manifest " + q(dir / "manifest.json")),
              0);

    auto by_run = read_json_file(art.manifest);
    auto by_hand = read_json_file(dir / "manifest.json");
    EXPECT_EQ(by_hand["indices"], by_run["indices"]);
    EXPECT_EQ(by_hand["output_hash"], by_run["output_hash"]);
    EXPECT_EQ(read_file_bytes(dir / "poisoned.bin"), read_file_bytes(art.poisoned));
    EXPECT_EQ(read_text(dir / "sel.json"), read_text(art.report));
}

TEST_F(ToyRun, FailedStageRemovesPartialOutputs) {
    write_text(dir / "clean.csv", "");
    write_config("rate = 0.6\n", "\n[evaluate]\nclean = \"clean.csv\"\n");
    auto cfg = load_run_config(dir / "run.toml");
    try {
        run_pipeline(cfg);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("stage 'evaluate'"), std::string::npos);
        EXPECT_EQ(e.kind(), ErrorKind::validation);
    }
    for (auto name : {"report.json", "ranking.json", "poisoned.bin", "manifest.json", "eval.json"})
        EXPECT_FALSE(fs::exists(dir / "out" / name)) << name;
}

TEST_F(ToyRun, EvaluateStageWritesReport) {
    write_text(dir / "clean1.csv", "sample_index,true_label,predicted_label\n0,1,1\n1,2,0\n");
    write_text(dir / "clean2.csv", "sample_index,true_label,predicted_label\n0,1,1\n1,2,2\n");
    write_text(dir / "trig.csv", "sample_index,true_label,predicted_label\n0,0,0\n1,2,0\n2,3,1\n");
    write_config("rate = 0.6\n",
                 "\n[evaluate]\nclean = [\"clean1.csv\", \"clean2.csv\"]\ntriggered = \"trig.csv\"\n"
                 "exclude_target_class = true\n");
    auto art = run_pipeline(load_run_config(dir / "run.toml"));
    ASSERT_TRUE(art.evaluation);
    auto j = read_json_file(*art.evaluation);
    EXPECT_DOUBLE_EQ(j["ba"].get<double>(), 0.75);
    EXPECT_EQ(j["asr"]["hits"], 1);
    EXPECT_EQ(j["asr"]["total"], 2);
}

TEST_F(ToyRun, CliExitCodes) {
    write_config("rate = 0.6\n");
    EXPECT_EQ(run_cli("run --config " + q(dir / "run.toml")), 0);
    EXPECT_EQ(run_cli("--version"), 0);
    EXPECT_EQ(run_cli("select --bogus"), 1);
    EXPECT_EQ(run_cli("select --log " + q(dir / "log.csv") + " --target-label 0 --count 1000"), 1);
    EXPECT_EQ(run_cli("select --log " + q(dir / "nope.csv") + " --target-label 0 --count 1"), 2);
    EXPECT_EQ(run_cli("run --config " + q(dir / "nope.toml")), 2);

    // A log in which nothing is ever misclassified has no class statistics.
    write_text(dir / "flat.csv", "epoch,sample_index,true_label,predicted_label\n1,0,0,0\n2,0,0,0\n");
    for (auto m : {"res-log", "res-x", "res-x2", "res-exp"})
        EXPECT_EQ(run_cli("select --log " + q(dir / "flat.csv") + " --metric " + m + " --target-label 0 --count 1"), 3)
            << m;

    EXPECT_EQ(run_cli("evaluate --triggered " + q(dir / "trig.csv")), 2);
    write_text(dir / "trig.csv", "sample_index,true_label,predicted_label\n0,0,0\n1,2,0\n");
    EXPECT_EQ(run_cli("evaluate --triggered " + q(dir / "trig.csv") + " --target-label 0"), 1);
    EXPECT_EQ(run_cli("evaluate --triggered " + q(dir / "trig.csv") + " --target-label 0 --exclude-target-class"), 0);
    write_text(dir / "c1.csv", "sample_index,true_label,predicted_label\n0,1,1\n");
    EXPECT_EQ(run_cli("evaluate --multi-epoch " + q(dir / "c1.csv") + " " + q(dir / "c1.csv") + " --out " +
                      q(dir / "eval.json")),
              0);
    EXPECT_EQ(read_json_file(dir / "eval.json")["ba_runs"].size(), 2u);
}

TEST_F(ToyRun, CliIngestCanonicalRoundTrip) {
    ASSERT_EQ(run_cli("ingest-log --log " + q(dir / "log.csv") + " --canonical " + q(dir / "canon.csv") +
                      " --target-label 0 --out " + q(dir / "stats.json")),
              0);
    EXPECT_EQ(read_text(dir / "canon.csv"), read_text(dir / "log.csv"));
    auto stats = read_json_file(dir / "stats.json");
    auto ref = compute_misclass_stats(parse_log(dir / "log.csv", 10), 0);
    ASSERT_EQ(stats["samples"].size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i)
        EXPECT_EQ(stats["samples"][i]["forget_count"].get<std::size_t>(), ref.forget_counts[i]);
}

TEST_F(ToyRun, CliCleanLabelViolationExitsWithValidation) {
    std::size_t idx = 0;
    while (dataset.labels[idx] == 0) ++idx;
    write_text(dir / "sel.json", "{\"selected\": [" + std::to_string(idx) + "], \"strategy\": {\"target_label\": 0}}");
    ASSERT_EQ(run_cli("make-trigger --preset badnets_c --out " + q(dir / "trigger.json")), 0);
    EXPECT_EQ(run_cli("poison --dataset " + q(dir / "train.bin") + " --report " + q(dir / "sel.json") + " --trigger " +
                      q(dir / "trigger.json") + " --out " + q(dir / "p.bin")),
              1);
}
