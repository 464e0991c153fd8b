#pragma once

// JSON documents exchanged between CLI stages. Keys are emitted in a fixed
// insertion order so identical inputs give identical bytes.

#include "dataset_io.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "hash.hpp"
#include "poison.hpp"
#include "selection.hpp"
#include "stealth.hpp"
#include "training_log.hpp"
#include "triggers.hpp"
#include "version.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace poisonforge {

using Json = nlohmann::ordered_json;

inline Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        fail_io("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail_validation("malformed JSON in " + path.string() + ": " + e.what());
    }
}

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        fail_io("cannot open " + path.string() + " for writing");
    out << dump_json(j);
    if (!out)
        fail_io("write failure on " + path.string());
}

namespace detail {

template <typename T>
T json_get(const Json& j, const char* key) {
    if (!j.contains(key))
        fail_validation(std::string("missing JSON field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        fail_validation(std::string("JSON field '") + key + "' has the wrong type");
    }
}

inline std::string dither_mode_name(DitherMode m) {
    return m == DitherMode::standard ? "standard" : "literal";
}

} // namespace detail

// --- triggers ---------------------------------------------------------------

inline Json trigger_to_json(const TriggerSpec& spec) {
    Json j;
    j["family"] = std::string(trigger_family(spec));
    if (const auto* b = std::get_if<BadnetsTrigger>(&spec)) {
        j["size"] = {b->height, b->width};
        j["position"] = {b->row, b->col};
        j["patterns"] = {static_cast<int>(b->patterns[0]), static_cast<int>(b->patterns[1]),
                         static_cast<int>(b->patterns[2])};
    } else if (const auto* bl = std::get_if<BlendedTrigger>(&spec)) {
        j["alphas"] = bl->alphas;
        j["image"] = bl->source;
        j["image_sha256"] = sha256_hex(bl->image.bytes());
    } else {
        const auto& m = std::get<MultiBppTrigger>(spec);
        j["levels"] = m.levels;
        j["levels_string"] = levels_string(m);
        j["base"] = m.base;
        j["dithering"] = m.dithering;
        j["dither_mode"] = detail::dither_mode_name(m.mode);
        j["diffusion"] = m.diffusion;
    }
    return j;
}

// `base_dir` resolves a relative blended image path; `height`/`width` are the
// dataset image dimensions.
inline TriggerSpec trigger_from_json(const Json& j, const std::filesystem::path& base_dir,
                                     std::size_t height, std::size_t width) {
    const auto family = detail::json_get<std::string>(j, "family");
    TriggerSpec spec;
    if (family == "badnets") {
        BadnetsTrigger t = default_badnets(height, width);
        if (j.contains("size")) {
            auto s = detail::json_get<std::vector<std::size_t>>(j, "size");
            if (s.size() != 2) fail_validation("badnets size must be [h, w]");
            t.height = s[0];
            t.width = s[1];
            t.row = height >= t.height ? height - t.height : 0;
            t.col = width >= t.width ? width - t.width : 0;
        }
        if (j.contains("position")) {
            auto p = detail::json_get<std::vector<std::size_t>>(j, "position");
            if (p.size() != 2) fail_validation("badnets position must be [row, col]");
            t.row = p[0];
            t.col = p[1];
        }
        auto pats = detail::json_get<std::vector<int>>(j, "patterns");
        if (pats.size() != 3) fail_validation("badnets patterns must have three entries");
        for (std::size_t c = 0; c < 3; ++c) {
            if (pats[c] < 0 || pats[c] > 3) fail_validation("badnets channel pattern must be 0..3");
            t.patterns[c] = static_cast<PatchPattern>(pats[c]);
        }
        spec = t;
    } else if (family == "blended") {
        BlendedTrigger t;
        auto a = detail::json_get<std::vector<double>>(j, "alphas");
        if (a.size() != 3) fail_validation("blended alphas must have three entries");
        t.alphas = {a[0], a[1], a[2]};
        t.source = j.contains("image") ? detail::json_get<std::string>(j, "image") : "procedural";
        if (t.source == "procedural") {
            t.image = procedural_trigger_image(height, width);
        } else {
            std::filesystem::path p = t.source;
            if (p.is_relative()) p = base_dir / p;
            DatasetProfile profile{"trigger", 256, height, width, 0, false};
            auto ds = read_cifar_binary(p, profile);
            if (ds.size() != 1)
                fail_validation("blended trigger image file must hold exactly one record");
            t.image = ds.images.front();
        }
        spec = t;
    } else if (family == "multibpp") {
        MultiBppTrigger t;
        auto lv = detail::json_get<std::vector<int>>(j, "levels");
        if (lv.size() != 3) fail_validation("multibpp levels must have three entries");
        t.levels = {lv[0], lv[1], lv[2]};
        if (j.contains("base")) {
            auto b = detail::json_get<std::vector<int>>(j, "base");
            if (b.size() != 3) fail_validation("multibpp base must have three entries");
            t.base = {b[0], b[1], b[2]};
        }
        if (j.contains("dithering")) t.dithering = detail::json_get<bool>(j, "dithering");
        if (j.contains("dither_mode")) {
            const auto mode = detail::json_get<std::string>(j, "dither_mode");
            if (mode == "standard") t.mode = DitherMode::standard;
            else if (mode == "literal") t.mode = DitherMode::literal;
            else fail_validation("dither_mode must be standard or literal");
        }
        if (j.contains("diffusion")) {
            auto d = detail::json_get<std::vector<double>>(j, "diffusion");
            if (d.size() != 4) fail_validation("diffusion must have four weights");
            t.diffusion = {d[0], d[1], d[2], d[3]};
        }
        spec = t;
    } else {
        fail_validation("unknown trigger family '" + family + "'");
    }
    validate(spec, height, width);
    return spec;
}

inline TriggerSpec load_trigger(const std::filesystem::path& path, std::size_t height,
                                std::size_t width) {
    return trigger_from_json(read_json_file(path), path.parent_path(), height, width);
}

// --- selection reports ------------------------------------------------------

inline Json strategy_to_json(const SelectionStrategy& s) {
    Json j;
    j["metric"] = std::string(to_string(s.metric));
    j["target_label"] = s.target_label ? Json(*s.target_label) : Json(nullptr);
    j["count"] = s.count ? Json(*s.count) : Json(nullptr);
    j["rate"] = s.rate ? Json(*s.rate) : Json(nullptr);
    j["seed"] = s.seed;
    return j;
}

inline SelectionStrategy strategy_from_json(const Json& j) {
    SelectionStrategy s;
    s.metric = metric_from_string(detail::json_get<std::string>(j, "metric"));
    if (j.contains("target_label") && !j["target_label"].is_null())
        s.target_label = detail::json_get<std::size_t>(j, "target_label");
    if (j.contains("count") && !j["count"].is_null()) s.count = detail::json_get<std::size_t>(j, "count");
    if (j.contains("rate") && !j["rate"].is_null()) s.rate = detail::json_get<double>(j, "rate");
    if (j.contains("seed")) s.seed = detail::json_get<std::uint64_t>(j, "seed");
    return s;
}

inline Json report_to_json(const SelectionReport& r, const Json& options = Json::object()) {
    Json j;
    j["tool"] = "poisonforge";
    j["version"] = kVersion;
    j["strategy"] = strategy_to_json(r.strategy);
    j["options"] = options;
    Json candidates = Json::array();
    for (const auto& e : r.entries)
        candidates.push_back(Json{{"index", e.index}, {"score", e.score}, {"rank", e.rank}});
    j["candidates"] = std::move(candidates);
    j["stealth_keep"] = r.stealth_keep ? Json(*r.stealth_keep) : Json(nullptr);
    j["selected"] = r.selected;
    return j;
}

inline SelectionReport report_from_json(const Json& j) {
    SelectionReport r;
    if (!j.contains("strategy"))
        fail_validation("selection report has no strategy block");
    r.strategy = strategy_from_json(j["strategy"]);
    if (j.contains("candidates"))
        for (const auto& c : j["candidates"])
            r.entries.push_back({detail::json_get<std::size_t>(c, "index"),
                                 detail::json_get<double>(c, "score"),
                                 detail::json_get<std::size_t>(c, "rank")});
    r.selected = detail::json_get<std::vector<std::size_t>>(j, "selected");
    if (j.contains("stealth_keep") && !j["stealth_keep"].is_null())
        r.stealth_keep = detail::json_get<double>(j, "stealth_keep");
    return r;
}

// --- stealth rankings -------------------------------------------------------

inline Json ranking_to_json(const StealthRanking& ranking, const StealthOptions& options,
                            const std::optional<SelectionReport>& composed = std::nullopt) {
    Json j;
    j["tool"] = "poisonforge";
    j["version"] = kVersion;
    j["metric"] = std::string(to_string(ranking.metric));
    j["gmsd_c"] = options.gmsd.c;
    j["color"] = options.gmsd.color == ColorMode::luminance ? "luminance" : "per-channel";
    j["placement"] = options.placement == PlacementKind::fixed ? "fixed" : "search";
    Json entries = Json::array();
    for (const auto& e : ranking.entries) entries.push_back(Json{{"index", e.index}, {"score", e.score}});
    j["ranking"] = std::move(entries);
    if (composed) {
        j["strategy"] = strategy_to_json(composed->strategy);
        j["stealth_keep"] = composed->stealth_keep ? Json(*composed->stealth_keep) : Json(nullptr);
        j["selected"] = composed->selected;
    }
    return j;
}

inline StealthRanking ranking_from_json(const Json& j) {
    StealthRanking r;
    const auto metric = detail::json_get<std::string>(j, "metric");
    r.metric = metric == "mse" ? StealthMetric::mse : StealthMetric::gmsd;
    for (const auto& e : j.at("ranking"))
        r.entries.push_back({detail::json_get<std::size_t>(e, "index"), detail::json_get<double>(e, "score")});
    return r;
}

// Any stage document carrying a "selected" list; the target label comes from
// the strategy echo when present.
struct SelectionDocument {
    std::vector<std::size_t> selected;
    std::optional<std::size_t> target_label;
};

inline SelectionDocument selection_from_json(const Json& j) {
    SelectionDocument doc;
    doc.selected = detail::json_get<std::vector<std::size_t>>(j, "selected");
    if (j.contains("strategy")) {
        const auto& s = j["strategy"];
        if (s.contains("target_label") && !s["target_label"].is_null())
            doc.target_label = s["target_label"].get<std::size_t>();
    }
    return doc;
}

// --- manifests, statistics, evaluation --------------------------------------

inline Json manifest_to_json(const PoisonManifest& m) {
    Json j;
    j["tool"] = "poisonforge";
    j["version"] = m.tool_version;
    j["target_label"] = m.target_label;
    j["dataset_size"] = m.dataset_size;
    j["num_poisoned"] = m.indices.size();
    j["poisoning_rate"] = m.rate;
    j["indices"] = m.indices;
    j["trigger"] = trigger_to_json(m.trigger);
    j["output_hash"] = m.output_hash;
    Json repro;
    repro["tool_version"] = m.tool_version;
    Json inputs = Json::object();
    for (const auto& [k, v] : m.input_hashes) inputs[k] = v;
    repro["input_hashes"] = std::move(inputs);
    j["reproducibility"] = std::move(repro);
    return j;
}

inline Json stats_to_json(const MisclassStats& s) {
    Json j;
    j["tool"] = "poisonforge";
    j["version"] = kVersion;
    j["num_classes"] = s.num_classes;
    j["num_epochs"] = s.num_epochs;
    j["target_label"] = s.target_label ? Json(*s.target_label) : Json(nullptr);
    Json samples = Json::array();
    for (std::size_t i = 0; i < s.size(); ++i)
        samples.push_back(Json{{"index", s.sample_indices[i]},
                               {"label", s.reference_labels[i]},
                               {"forget_count", s.forget_counts[i]},
                               {"events", s.events[i]}});
    j["samples"] = std::move(samples);
    return j;
}

inline Json rate_to_json(const RateCount& r) {
    return Json{{"hits", r.hits}, {"total", r.total}, {"value", r.value()}};
}

inline Json eval_to_json(const EvalReport& e) {
    Json j;
    j["tool"] = "poisonforge";
    j["version"] = kVersion;
    j["target_label"] = e.target_label;
    Json runs = Json::array();
    for (const auto& r : e.ba_runs) runs.push_back(rate_to_json(r));
    j["ba_runs"] = std::move(runs);
    j["ba"] = e.ba() ? Json(*e.ba()) : Json(nullptr);
    j["asr"] = e.asr ? rate_to_json(*e.asr) : Json(nullptr);
    return j;
}

} // namespace poisonforge
