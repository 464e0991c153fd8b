#pragma once

// Ingestion of per-epoch prediction logs and the training-dynamics statistics
// derived from them (forgetting counts and per-class misclassification events).
//
// Log schema (CSV, LF, epochs 1-based, sample_index 0-based):
//   epoch,sample_index,true_label,predicted_label[,loss][,grad_norm]
// The rows must cover a dense epoch x sample grid.

#include "error.hpp"

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace poisonforge {

struct PredictionLog {
    std::size_t num_epochs = 0;
    std::size_t num_classes = 0;
    // First epoch number covered; 1 unless the log was sliced by epoch range.
    std::size_t first_epoch = 1;
    std::vector<std::size_t> sample_indices;  // ascending dataset indices
    std::vector<std::size_t> true_labels;     // per sample
    std::vector<std::vector<std::size_t>> predictions;  // [sample][epoch]
    std::optional<std::vector<std::vector<double>>> loss;       // [sample][epoch]
    std::optional<std::vector<std::vector<double>>> grad_norm;  // [sample][epoch]

    std::size_t num_samples() const noexcept { return sample_indices.size(); }

    friend bool operator==(const PredictionLog&, const PredictionLog&) = default;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline std::size_t parse_index(std::string_view field, std::string_view column, std::size_t line) {
    field = trim(field);
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty())
        fail_validation("line " + std::to_string(line) + ": non-integer " + std::string(column) +
                        " '" + std::string(field) + "'");
    return value;
}

inline double parse_real(std::string_view field, std::string_view column, std::size_t line) {
    field = trim(field);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty())
        fail_validation("line " + std::to_string(line) + ": non-numeric " + std::string(column) +
                        " '" + std::string(field) + "'");
    return value;
}

inline std::string format_real(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

} // namespace detail

// Parses a prediction log. When `num_classes` is given, every label must be
// below it; otherwise it is inferred as one past the largest label seen.
inline PredictionLog parse_log(std::istream& in, std::optional<std::size_t> num_classes = {}) {
    std::string line;
    if (!std::getline(in, line))
        fail_validation("empty log: missing header");

    const auto header = detail::split_csv_line(detail::trim(line));
    static constexpr std::string_view required[] = {"epoch", "sample_index", "true_label",
                                                    "predicted_label"};
    if (header.size() < 4)
        fail_validation("log header must start with epoch,sample_index,true_label,predicted_label");
    for (std::size_t i = 0; i < 4; ++i)
        if (detail::trim(header[i]) != required[i])
            fail_validation("log header column " + std::to_string(i + 1) + " must be '" +
                            std::string(required[i]) + "'");

    std::optional<std::size_t> loss_col, grad_col;
    for (std::size_t i = 4; i < header.size(); ++i) {
        const auto name = detail::trim(header[i]);
        if (name == "loss" && !loss_col) loss_col = i;
        else if (name == "grad_norm" && !grad_col) grad_col = i;
        else fail_validation("unexpected log column '" + std::string(name) + "'");
    }

    struct Row {
        std::size_t epoch, sample, truth, predicted;
        double loss, grad;
    };
    std::vector<Row> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = detail::trim(line);
        if (trimmed.empty())
            continue;
        const auto f = detail::split_csv_line(trimmed);
        if (f.size() != header.size())
            fail_validation("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields");
        Row r{};
        r.epoch = detail::parse_index(f[0], "epoch", line_no);
        r.sample = detail::parse_index(f[1], "sample_index", line_no);
        r.truth = detail::parse_index(f[2], "true_label", line_no);
        r.predicted = detail::parse_index(f[3], "predicted_label", line_no);
        if (loss_col) r.loss = detail::parse_real(f[*loss_col], "loss", line_no);
        if (grad_col) r.grad = detail::parse_real(f[*grad_col], "grad_norm", line_no);
        if (r.epoch == 0)
            fail_validation("line " + std::to_string(line_no) + ": epochs are 1-based");
        rows.push_back(r);
    }
    if (rows.empty())
        fail_validation("log has no rows");

    std::size_t max_epoch = 0, max_label = 0;
    std::map<std::size_t, std::size_t> slot;  // dataset index -> position
    for (const auto& r : rows) {
        max_epoch = std::max(max_epoch, r.epoch);
        max_label = std::max({max_label, r.truth, r.predicted});
        slot.emplace(r.sample, 0);
    }
    const std::size_t classes = num_classes.value_or(max_label + 1);
    if (max_label >= classes)
        fail_validation("label " + std::to_string(max_label) + " out of range for " +
                        std::to_string(classes) + " classes");

    PredictionLog log;
    log.num_epochs = max_epoch;
    log.num_classes = classes;
    for (auto& [sample, pos] : slot) {
        pos = log.sample_indices.size();
        log.sample_indices.push_back(sample);
    }
    const std::size_t n = log.sample_indices.size();
    log.true_labels.assign(n, 0);
    log.predictions.assign(n, std::vector<std::size_t>(max_epoch, 0));
    if (loss_col) log.loss.emplace(n, std::vector<double>(max_epoch, 0.0));
    if (grad_col) log.grad_norm.emplace(n, std::vector<double>(max_epoch, 0.0));

    std::vector<std::vector<bool>> seen(n, std::vector<bool>(max_epoch, false));
    std::vector<bool> label_set(n, false);
    for (const auto& r : rows) {
        const std::size_t i = slot[r.sample];
        const std::size_t e = r.epoch - 1;
        if (seen[i][e])
            fail_validation("duplicate row for epoch " + std::to_string(r.epoch) + ", sample " +
                            std::to_string(r.sample));
        seen[i][e] = true;
        if (label_set[i] && log.true_labels[i] != r.truth)
            fail_validation("inconsistent true_label for sample " + std::to_string(r.sample));
        log.true_labels[i] = r.truth;
        label_set[i] = true;
        log.predictions[i][e] = r.predicted;
        if (loss_col) (*log.loss)[i][e] = r.loss;
        if (grad_col) (*log.grad_norm)[i][e] = r.grad;
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t e = 0; e < max_epoch; ++e)
            if (!seen[i][e])
                fail_validation("sparse log: sample " + std::to_string(log.sample_indices[i]) +
                                " has no row for epoch " + std::to_string(e + 1));
    return log;
}

inline PredictionLog parse_log(const std::filesystem::path& path,
                               std::optional<std::size_t> num_classes = {}) {
    std::ifstream in(path);
    if (!in)
        fail_io("cannot open log " + path.string());
    return parse_log(in, num_classes);
}

// Canonical CSV form: epoch-major, samples ascending within an epoch.
inline std::string serialize_log(const PredictionLog& log) {
    std::ostringstream out;
    out << "epoch,sample_index,true_label,predicted_label";
    if (log.loss) out << ",loss";
    if (log.grad_norm) out << ",grad_norm";
    out << '\n';
    for (std::size_t e = 0; e < log.num_epochs; ++e) {
        for (std::size_t i = 0; i < log.num_samples(); ++i) {
            out << (log.first_epoch + e) << ',' << log.sample_indices[i] << ','
                << log.true_labels[i] << ',' << log.predictions[i][e];
            if (log.loss) out << ',' << detail::format_real((*log.loss)[i][e]);
            if (log.grad_norm) out << ',' << detail::format_real((*log.grad_norm)[i][e]);
            out << '\n';
        }
    }
    return out.str();
}

// Restricts a log to epochs [first, last] (1-based, inclusive).
inline PredictionLog slice_epochs(const PredictionLog& log, std::size_t first, std::size_t last) {
    const std::size_t lo = log.first_epoch;
    const std::size_t hi = log.first_epoch + log.num_epochs - 1;
    if (first < lo || last > hi || first > last)
        fail_validation("epoch range " + std::to_string(first) + ".." + std::to_string(last) +
                        " outside the log's " + std::to_string(lo) + ".." + std::to_string(hi));
    const auto b = static_cast<std::ptrdiff_t>(first - lo);
    const auto e = static_cast<std::ptrdiff_t>(last - lo + 1);

    PredictionLog out = log;
    out.first_epoch = first;
    out.num_epochs = last - first + 1;
    for (auto& p : out.predictions) p = {p.begin() + b, p.begin() + e};
    if (out.loss)
        for (auto& v : *out.loss) v = {v.begin() + b, v.begin() + e};
    if (out.grad_norm)
        for (auto& v : *out.grad_norm) v = {v.begin() + b, v.begin() + e};
    return out;
}

// Parses "a..b".
inline std::pair<std::size_t, std::size_t> parse_epoch_range(std::string_view text) {
    const auto dots = text.find("..");
    if (dots == std::string_view::npos)
        fail_validation("epoch range must look like a..b");
    const auto a = detail::parse_index(text.substr(0, dots), "epoch range start", 0);
    const auto b = detail::parse_index(text.substr(dots + 2), "epoch range end", 0);
    return {a, b};
}

enum class EventsMode {
    transitions,  // correct -> y_m transitions (forgetting events)
    epochs,       // epochs spent predicting y_m
};

struct MisclassStats {
    std::size_t num_classes = 0;
    std::size_t num_epochs = 0;
    // Empty when statistics were computed per own label (all-class scope).
    std::optional<std::size_t> target_label;
    std::vector<std::size_t> sample_indices;
    std::vector<std::size_t> reference_labels;
    std::vector<std::size_t> forget_counts;
    std::vector<std::vector<std::size_t>> events;  // [sample][class], 0 at the reference label

    std::size_t size() const noexcept { return sample_indices.size(); }

    friend bool operator==(const MisclassStats&, const MisclassStats&) = default;
};

namespace detail {

inline void accumulate_sample(const std::vector<std::size_t>& preds, std::size_t reference,
                              EventsMode mode, std::size_t& forgets,
                              std::vector<std::size_t>& row) {
    forgets = 0;
    for (std::size_t e = 1; e < preds.size(); ++e) {
        if (preds[e - 1] == reference && preds[e] != reference) {
            ++forgets;
            if (mode == EventsMode::transitions)
                ++row[preds[e]];
        }
    }
    if (mode == EventsMode::epochs)
        for (auto p : preds)
            if (p != reference)
                ++row[p];
}

} // namespace detail

// Statistics over the samples whose true label is `target`.
inline MisclassStats compute_misclass_stats(const PredictionLog& log, std::size_t target,
                                            EventsMode mode = EventsMode::transitions) {
    if (target >= log.num_classes)
        fail_validation("target label " + std::to_string(target) + " out of range");
    MisclassStats stats;
    stats.num_classes = log.num_classes;
    stats.num_epochs = log.num_epochs;
    stats.target_label = target;
    for (std::size_t i = 0; i < log.num_samples(); ++i) {
        if (log.true_labels[i] != target)
            continue;
        std::size_t forgets = 0;
        std::vector<std::size_t> row(log.num_classes, 0);
        detail::accumulate_sample(log.predictions[i], target, mode, forgets, row);
        stats.sample_indices.push_back(log.sample_indices[i]);
        stats.reference_labels.push_back(target);
        stats.forget_counts.push_back(forgets);
        stats.events.push_back(std::move(row));
    }
    if (stats.sample_indices.empty())
        fail_validation("no target samples in log for label " + std::to_string(target));
    return stats;
}

// Statistics over every sample, each measured against its own true label.
inline MisclassStats compute_misclass_stats_all(const PredictionLog& log,
                                                EventsMode mode = EventsMode::transitions) {
    MisclassStats stats;
    stats.num_classes = log.num_classes;
    stats.num_epochs = log.num_epochs;
    for (std::size_t i = 0; i < log.num_samples(); ++i) {
        std::size_t forgets = 0;
        std::vector<std::size_t> row(log.num_classes, 0);
        detail::accumulate_sample(log.predictions[i], log.true_labels[i], mode, forgets, row);
        stats.sample_indices.push_back(log.sample_indices[i]);
        stats.reference_labels.push_back(log.true_labels[i]);
        stats.forget_counts.push_back(forgets);
        stats.events.push_back(std::move(row));
    }
    if (stats.sample_indices.empty())
        fail_validation("log has no samples");
    return stats;
}

} // namespace poisonforge
