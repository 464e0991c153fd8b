#pragma once

// Benign accuracy and attack success rate from prediction CSVs with the
// schema `sample_index,true_label,predicted_label`.

#include "error.hpp"
#include "training_log.hpp"

#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace poisonforge {

struct PredictionRow {
    std::size_t sample_index = 0;
    std::size_t true_label = 0;
    std::size_t predicted_label = 0;
};

// Exact ratio of integer counts.
struct RateCount {
    std::size_t hits = 0;
    std::size_t total = 0;

    double value() const { return static_cast<double>(hits) / static_cast<double>(total); }
};

inline std::vector<PredictionRow> parse_predictions(std::istream& in) {
    std::string line;
    if (!std::getline(in, line))
        fail_validation("empty predictions file");
    const auto header = detail::split_csv_line(detail::trim(line));
    if (header.size() != 3 || detail::trim(header[0]) != "sample_index" ||
        detail::trim(header[1]) != "true_label" || detail::trim(header[2]) != "predicted_label")
        fail_validation("predictions header must be sample_index,true_label,predicted_label");

    std::vector<PredictionRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = detail::trim(line);
        if (trimmed.empty()) continue;
        const auto f = detail::split_csv_line(trimmed);
        if (f.size() != 3)
            fail_validation("line " + std::to_string(line_no) + ": expected 3 fields");
        rows.push_back({detail::parse_index(f[0], "sample_index", line_no),
                        detail::parse_index(f[1], "true_label", line_no),
                        detail::parse_index(f[2], "predicted_label", line_no)});
    }
    if (rows.empty())
        fail_validation("empty predictions file");
    return rows;
}

inline std::vector<PredictionRow> parse_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        fail_io("cannot open predictions " + path.string());
    return parse_predictions(in);
}

inline RateCount compute_ba(std::span<const PredictionRow> rows) {
    if (rows.empty())
        fail_validation("empty predictions file");
    RateCount out{0, rows.size()};
    for (const auto& r : rows)
        if (r.predicted_label == r.true_label) ++out.hits;
    return out;
}

// Rows are predictions on triggered clean-test images. Rows whose true label is
// already the target are rejected unless `exclude_target_class` drops them.
inline RateCount compute_asr(std::span<const PredictionRow> rows, std::size_t target,
                             bool exclude_target_class = false) {
    if (rows.empty())
        fail_validation("empty predictions file");
    RateCount out;
    for (const auto& r : rows) {
        if (r.true_label == target) {
            if (exclude_target_class) continue;
            fail_validation("ASR input row for sample " + std::to_string(r.sample_index) +
                            " already has the target label; pass --exclude-target-class");
        }
        ++out.total;
        if (r.predicted_label == target) ++out.hits;
    }
    if (out.total == 0)
        fail_validation("no non-target rows left for ASR");
    return out;
}

struct EvalReport {
    std::vector<RateCount> ba_runs;  // one per clean predictions file
    std::optional<RateCount> asr;
    std::size_t target_label = 0;

    // Mean over the clean prediction files.
    std::optional<double> ba() const {
        if (ba_runs.empty()) return std::nullopt;
        double sum = 0.0;
        for (const auto& r : ba_runs) sum += r.value();
        return sum / static_cast<double>(ba_runs.size());
    }
};

} // namespace poisonforge
