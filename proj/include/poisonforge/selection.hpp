#pragma once

// Hardness-based sample selection over training dynamics: Loss, Gradient Norm,
// Forgetting Event, Category Diversity and the Res-X family, plus composition
// with a stealthiness ranking.

#include "error.hpp"
#include "rng.hpp"
#include "training_log.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace poisonforge {

enum class Metric { random, loss, grad_norm, forget, diversity, res_log, res_x, res_x2, res_exp };

inline std::string_view to_string(Metric m) {
    switch (m) {
    case Metric::random: return "random";
    case Metric::loss: return "loss";
    case Metric::grad_norm: return "grad";
    case Metric::forget: return "forget";
    case Metric::diversity: return "diversity";
    case Metric::res_log: return "res-log";
    case Metric::res_x: return "res-x";
    case Metric::res_x2: return "res-x2";
    case Metric::res_exp: return "res-exp";
    }
    return "unknown";
}

inline Metric metric_from_string(std::string_view s) {
    for (auto m : {Metric::random, Metric::loss, Metric::grad_norm, Metric::forget,
                   Metric::diversity, Metric::res_log, Metric::res_x, Metric::res_x2,
                   Metric::res_exp})
        if (to_string(m) == s)
            return m;
    fail_validation("unknown selection metric '" + std::string(s) + "'");
}

// Negative function applied to aggregate per-class event counts.
enum class NegativeFunction { log, linear, square, exp };

inline std::optional<NegativeFunction> negative_function_of(Metric m) {
    switch (m) {
    case Metric::res_log: return NegativeFunction::log;
    case Metric::res_x: return NegativeFunction::linear;
    case Metric::res_x2: return NegativeFunction::square;
    case Metric::res_exp: return NegativeFunction::exp;
    default: return std::nullopt;
    }
}

// Per-sample scores aligned with candidate dataset indices (ascending).
struct ScoredSamples {
    std::vector<std::size_t> indices;
    std::vector<double> values;
};

struct ClassWeights {
    std::vector<std::size_t> classes;  // classes that receive a weight
    std::vector<double> weights;       // Cls[m], parallel to `classes`
    std::vector<std::size_t> totals;   // Num[m], parallel to `classes`

    // 0 for classes without a weight (the target class).
    double weight_of(std::size_t cls) const {
        for (std::size_t k = 0; k < classes.size(); ++k)
            if (classes[k] == cls)
                return weights[k];
        return 0.0;
    }
};

inline ScoredSamples score_forget(const MisclassStats& stats) {
    ScoredSamples out{stats.sample_indices, {}};
    out.values.reserve(stats.size());
    for (auto f : stats.forget_counts)
        out.values.push_back(static_cast<double>(f));
    return out;
}

enum class DiversityMean {
    per_sample,  // mean of the sample's own non-reference counts
    global,      // mean over all samples and non-reference classes
};

// Higher is more balanced: the negated L2 deviation of a sample's
// misclassification counts from their mean.
inline ScoredSamples score_diversity(const MisclassStats& stats,
                                     DiversityMean mean_mode = DiversityMean::per_sample) {
    if (stats.num_classes < 2)
        fail_validation("category diversity needs at least two classes");
    const double others = static_cast<double>(stats.num_classes - 1);

    double global_mu = 0.0;
    if (mean_mode == DiversityMean::global) {
        std::size_t total = 0;
        for (std::size_t i = 0; i < stats.size(); ++i)
            for (std::size_t m = 0; m < stats.num_classes; ++m)
                if (m != stats.reference_labels[i])
                    total += stats.events[i][m];
        global_mu = static_cast<double>(total) / (others * static_cast<double>(stats.size()));
    }

    ScoredSamples out{stats.sample_indices, {}};
    out.values.reserve(stats.size());
    for (std::size_t i = 0; i < stats.size(); ++i) {
        const auto& row = stats.events[i];
        const auto ref = stats.reference_labels[i];
        double mu = global_mu;
        if (mean_mode == DiversityMean::per_sample) {
            std::size_t sum = 0;
            for (std::size_t m = 0; m < row.size(); ++m)
                if (m != ref) sum += row[m];
            mu = static_cast<double>(sum) / others;
        }
        double sq = 0.0;
        for (std::size_t m = 0; m < row.size(); ++m) {
            if (m == ref) continue;
            const double d = static_cast<double>(row[m]) - mu;
            sq += d * d;
        }
        out.values.push_back(-std::sqrt(sq));
    }
    return out;
}

// Class weights Cls[m] = 1 - N_F(Num[m]) / sum_m' N_F(Num[m']), where Num[m] is the
// number of events into class m summed over every candidate. `log_base` only
// matters for the log function and cancels in the ratio.
inline ClassWeights class_weights(const MisclassStats& stats, NegativeFunction fn,
                                  double log_base = std::exp(1.0)) {
    ClassWeights w;
    for (std::size_t m = 0; m < stats.num_classes; ++m) {
        if (stats.target_label && m == *stats.target_label)
            continue;
        std::size_t num = 0;
        for (const auto& row : stats.events) num += row[m];
        w.classes.push_back(m);
        w.totals.push_back(num);
    }
    if (w.classes.empty())
        fail_validation("class weights need at least one non-target class");
    if (std::all_of(w.totals.begin(), w.totals.end(), [](auto n) { return n == 0; }))
        fail_degenerate("degenerate statistics: no misclassification events in the log");

    std::vector<double> f;
    f.reserve(w.totals.size());
    const double ln_base = std::log(log_base);
    for (auto n : w.totals) {
        const double x = static_cast<double>(n);
        switch (fn) {
        case NegativeFunction::log: f.push_back(std::log1p(x) / ln_base); break;
        case NegativeFunction::linear: f.push_back(x); break;
        case NegativeFunction::square: f.push_back(x * x); break;
        case NegativeFunction::exp: f.push_back(std::exp(-x)); break;
        }
    }
    const double sum = std::accumulate(f.begin(), f.end(), 0.0);
    for (double v : f) w.weights.push_back(1.0 - v / sum);
    return w;
}

inline ScoredSamples score_res(const MisclassStats& stats, const ClassWeights& weights) {
    std::vector<double> dense(stats.num_classes, 0.0);
    for (std::size_t k = 0; k < weights.classes.size(); ++k)
        dense.at(weights.classes[k]) = weights.weights[k];

    ScoredSamples out{stats.sample_indices, {}};
    out.values.reserve(stats.size());
    for (std::size_t i = 0; i < stats.size(); ++i) {
        double metric = 0.0;
        for (std::size_t m = 0; m < stats.num_classes; ++m) {
            if (m == stats.reference_labels[i]) continue;
            metric += dense[m] * static_cast<double>(stats.events[i][m]);
        }
        out.values.push_back(metric);
    }
    return out;
}

enum class ScalarField { loss, grad_norm };

// Ingested per-sample scalar taken at the log's last epoch. When `target` is
// set only samples with that true label are scored.
inline ScoredSamples score_scalar(const PredictionLog& log, ScalarField field,
                                  std::optional<std::size_t> target) {
    const auto& column = field == ScalarField::loss ? log.loss : log.grad_norm;
    if (!column)
        fail_validation(std::string("log has no ") +
                        (field == ScalarField::loss ? "loss" : "grad_norm") + " column");
    ScoredSamples out;
    for (std::size_t i = 0; i < log.num_samples(); ++i) {
        if (target && log.true_labels[i] != *target)
            continue;
        const double v = (*column)[i].back();
        if (!std::isfinite(v))
            fail_validation("non-finite scalar for sample " + std::to_string(log.sample_indices[i]));
        out.indices.push_back(log.sample_indices[i]);
        out.values.push_back(v);
    }
    if (out.indices.empty())
        fail_validation("no target samples in log");
    return out;
}

struct SelectionStrategy {
    Metric metric = Metric::res_log;
    std::uint64_t seed = 0;
    std::optional<std::size_t> count;
    std::optional<double> rate;  // fraction of the candidate (target) subset
    std::optional<std::size_t> target_label;  // empty in all-class scope

    void validate() const {
        if (count.has_value() == rate.has_value())
            fail_validation("exactly one of poison count or poison rate must be set");
        if (rate && !(*rate >= 0.0 && *rate <= 1.0))
            fail_validation("poison rate must lie in [0, 1]");
    }

    std::size_t poison_count(std::size_t candidates) const {
        validate();
        if (count) return *count;
        return static_cast<std::size_t>(std::floor(*rate * static_cast<double>(candidates) + 1e-9));
    }
};

struct SelectionReport {
    struct Entry {
        std::size_t index = 0;
        double score = 0.0;
        std::size_t rank = 0;  // 1-based
    };

    SelectionStrategy strategy;
    std::vector<Entry> entries;         // ascending dataset index
    std::vector<std::size_t> selected;  // in selection order
    std::optional<double> stealth_keep;  // set once composed with a stealth ranking

    friend bool operator==(const SelectionReport& a, const SelectionReport& b) {
        if (a.entries.size() != b.entries.size()) return false;
        for (std::size_t i = 0; i < a.entries.size(); ++i)
            if (a.entries[i].index != b.entries[i].index || a.entries[i].score != b.entries[i].score ||
                a.entries[i].rank != b.entries[i].rank)
                return false;
        return a.selected == b.selected && a.stealth_keep == b.stealth_keep;
    }
};

// Descending by score, ties broken by ascending dataset index.
inline std::vector<std::size_t> rank_order(const ScoredSamples& scores) {
    std::vector<std::size_t> order(scores.indices.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores.values[a] != scores.values[b])
            return scores.values[a] > scores.values[b];
        return scores.indices[a] < scores.indices[b];
    });
    return order;
}

inline SelectionReport select(const SelectionStrategy& strategy, const ScoredSamples& scores) {
    if (scores.indices.size() != scores.values.size())
        fail_validation("score vector does not match candidate list");
    const std::size_t n = scores.indices.size();
    const std::size_t k = strategy.poison_count(n);
    if (k > n)
        fail_validation("poison count " + std::to_string(k) + " exceeds target subset size " +
                        std::to_string(n));

    // Candidates sorted by dataset index so the report is independent of input order.
    std::vector<std::size_t> by_index(n);
    std::iota(by_index.begin(), by_index.end(), std::size_t{0});
    std::sort(by_index.begin(), by_index.end(),
              [&](auto a, auto b) { return scores.indices[a] < scores.indices[b]; });
    for (std::size_t i = 1; i < n; ++i)
        if (scores.indices[by_index[i]] == scores.indices[by_index[i - 1]])
            fail_validation("duplicate candidate index " + std::to_string(scores.indices[by_index[i]]));

    std::vector<std::size_t> order;
    if (strategy.metric == Metric::random) {
        order = seeded_shuffle<std::size_t>(by_index, strategy.seed);
    } else {
        order = rank_order(scores);
    }

    SelectionReport report;
    report.strategy = strategy;
    std::vector<std::size_t> rank_of(n, 0);
    for (std::size_t r = 0; r < n; ++r) rank_of[order[r]] = r + 1;
    for (auto pos : by_index)
        report.entries.push_back({scores.indices[pos], scores.values[pos], rank_of[pos]});
    for (std::size_t r = 0; r < k; ++r)
        report.selected.push_back(scores.indices[order[r]]);
    return report;
}

// Keeps the floor(keep * |selected|) selected samples with the lowest stealth
// score, ascending. Equal scores keep the incoming selection order.
inline SelectionReport compose_with_stealth(const SelectionReport& report,
                                            const std::map<std::size_t, double>& stealth,
                                            double keep) {
    if (!(keep > 0.0 && keep <= 1.0))
        fail_validation("stealth keep fraction must lie in (0, 1]");
    const auto n = report.selected.size();
    const auto kept = static_cast<std::size_t>(std::floor(keep * static_cast<double>(n) + 1e-9));
    if (kept == 0)
        fail_validation("stealth keep fraction leaves no samples");

    std::vector<std::pair<std::size_t, double>> tuples;
    tuples.reserve(n);
    for (auto idx : report.selected) {
        auto it = stealth.find(idx);
        if (it == stealth.end())
            fail_validation("no stealth score for index " + std::to_string(idx));
        tuples.emplace_back(idx, it->second);
    }
    std::stable_sort(tuples.begin(), tuples.end(),
                     [](const auto& a, const auto& b) { return a.second < b.second; });

    SelectionReport out = report;
    out.selected.clear();
    for (std::size_t i = 0; i < kept; ++i) out.selected.push_back(tuples[i].first);
    out.stealth_keep = keep;
    return out;
}

} // namespace poisonforge
