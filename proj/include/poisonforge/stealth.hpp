#pragma once

// Visual-insensitivity ranking of candidate images for a given trigger:
// patch MSE for local triggers, GMSD (gradient magnitude similarity deviation)
// for global ones. Lower scores are stealthier.

#include "error.hpp"
#include "image.hpp"
#include "triggers.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace poisonforge {

// Real-valued single-channel matrix, row-major.
struct Plane {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> data;

    Plane() = default;
    Plane(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), data(h * w, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * width + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * width + c]; }
};

enum class ColorMode {
    luminance,    // 0.2126 R + 0.7152 G + 0.0722 B
    per_channel,  // mean of the three single-channel scores
};

struct GmsdParams {
    double c = 0.0026;  // on [0, 1] intensities
    ColorMode color = ColorMode::luminance;
};

inline Plane channel_plane(const Image& image, std::size_t ch) {
    Plane p(image.height(), image.width());
    auto src = image.plane(ch);
    for (std::size_t i = 0; i < src.size(); ++i) p.data[i] = src[i] / 255.0;
    return p;
}

inline Plane luminance_plane(const Image& image) {
    Plane p(image.height(), image.width());
    auto r = image.plane(0), g = image.plane(1), b = image.plane(2);
    for (std::size_t i = 0; i < p.data.size(); ++i)
        p.data[i] = (0.2126 * r[i] + 0.7152 * g[i] + 0.0722 * b[i]) / 255.0;
    return p;
}

// Prewitt gradient magnitude with 1/3-scaled kernels, same-size output and
// replicated borders.
inline Plane prewitt_gradient_magnitude(const Plane& img) {
    if (img.height < 3 || img.width < 3)
        fail_validation("gradient magnitude needs at least a 3x3 matrix");
    const auto h = static_cast<std::ptrdiff_t>(img.height);
    const auto w = static_cast<std::ptrdiff_t>(img.width);
    auto px = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
        r = std::clamp<std::ptrdiff_t>(r, 0, h - 1);
        c = std::clamp<std::ptrdiff_t>(c, 0, w - 1);
        return img(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
    };

    Plane out(img.height, img.width);
    for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            double gx = 0.0, gy = 0.0;
            for (std::ptrdiff_t k = -1; k <= 1; ++k) {
                gx += px(r + k, c - 1) - px(r + k, c + 1);
                gy += px(r - 1, c + k) - px(r + 1, c + k);
            }
            gx /= 3.0;
            gy /= 3.0;
            out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = std::sqrt(gx * gx + gy * gy);
        }
    }
    return out;
}

inline double gmsd(const Plane& reference, const Plane& distorted, double c) {
    if (reference.height != distorted.height || reference.width != distorted.width)
        fail_validation("gmsd: dimension mismatch");
    if (!(c > 0.0))
        fail_validation("gmsd: stability constant must be positive");
    const auto mr = prewitt_gradient_magnitude(reference);
    const auto md = prewitt_gradient_magnitude(distorted);
    const std::size_t n = mr.data.size();

    std::vector<double> gms(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = mr.data[i], b = md.data[i];
        gms[i] = (2.0 * a * b + c) / (a * a + b * b + c);
    }
    const double mean = std::accumulate(gms.begin(), gms.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double g : gms) var += (g - mean) * (g - mean);
    return std::sqrt(var / static_cast<double>(n));
}

inline double gmsd(const Image& reference, const Image& distorted, const GmsdParams& params = {}) {
    if (!reference.same_shape(distorted))
        fail_validation("gmsd: dimension mismatch");
    if (params.color == ColorMode::luminance)
        return gmsd(luminance_plane(reference), luminance_plane(distorted), params.c);
    double total = 0.0;
    for (std::size_t ch = 0; ch < kChannels; ++ch)
        total += gmsd(channel_plane(reference, ch), channel_plane(distorted, ch), params.c);
    return total / static_cast<double>(kChannels);
}

// --- patch MSE --------------------------------------------------------------

enum class PlacementKind { fixed, search_min };

struct Placement {
    PlacementKind kind = PlacementKind::fixed;
    std::size_t row = 0;
    std::size_t col = 0;

    static Placement fixed_at(std::size_t r, std::size_t c) { return {PlacementKind::fixed, r, c}; }
    static Placement search() { return {PlacementKind::search_min, 0, 0}; }
};

struct PatchScore {
    double score = 0.0;
    std::size_t row = 0;
    std::size_t col = 0;
};

namespace detail {

// Mean over patch pixels and all three channels; a channel without a patch
// plane is left untouched by the trigger and contributes zero error.
inline double patch_mse_at(const Image& image, const TriggerPatch& patch, std::size_t row,
                           std::size_t col) {
    double sum = 0.0;
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
        if (!patch.planes[ch]) continue;
        const auto& plane = *patch.planes[ch];
        for (std::size_t r = 0; r < patch.height; ++r)
            for (std::size_t c = 0; c < patch.width; ++c) {
                const double d = static_cast<double>(image.at(ch, row + r, col + c)) -
                                 static_cast<double>(plane[r * patch.width + c]);
                sum += d * d;
            }
    }
    return sum / static_cast<double>(kChannels * patch.height * patch.width);
}

} // namespace detail

// On the 0-255 scale. Search ties resolve to the smallest row, then column.
inline PatchScore mse_patch_score(const Image& image, const TriggerPatch& patch,
                                  const Placement& placement) {
    if (patch.height == 0 || patch.width == 0 || patch.height > image.height() ||
        patch.width > image.width())
        fail_validation("patch larger than image");
    if (placement.kind == PlacementKind::fixed) {
        if (placement.row + patch.height > image.height() ||
            placement.col + patch.width > image.width())
            fail_validation("patch placement out of bounds");
        return {detail::patch_mse_at(image, patch, placement.row, placement.col), placement.row,
                placement.col};
    }
    PatchScore best{std::numeric_limits<double>::infinity(), 0, 0};
    for (std::size_t r = 0; r + patch.height <= image.height(); ++r)
        for (std::size_t c = 0; c + patch.width <= image.width(); ++c) {
            const double s = detail::patch_mse_at(image, patch, r, c);
            if (s < best.score) best = {s, r, c};
        }
    return best;
}

inline double image_mse(const Image& a, const Image& b) {
    if (!a.same_shape(b))
        fail_validation("mse: dimension mismatch");
    auto x = a.bytes(), y = b.bytes();
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(x.size());
}

// --- ranking ----------------------------------------------------------------

enum class StealthMetric { mse, gmsd };

inline std::string_view to_string(StealthMetric m) { return m == StealthMetric::mse ? "mse" : "gmsd"; }

inline StealthMetric default_stealth_metric(const TriggerSpec& spec) {
    return std::holds_alternative<BadnetsTrigger>(spec) ? StealthMetric::mse : StealthMetric::gmsd;
}

struct StealthOptions {
    std::optional<StealthMetric> metric;  // empty: MSE for Badnets, GMSD otherwise
    GmsdParams gmsd;
    // Badnets MSE placement; search_min scans all positions instead of the deployment spot.
    PlacementKind placement = PlacementKind::fixed;
};

struct StealthRanking {
    struct Entry {
        std::size_t index = 0;
        double score = 0.0;
    };
    StealthMetric metric = StealthMetric::gmsd;
    std::vector<Entry> entries;  // ascending score, ties by index

    std::map<std::size_t, double> score_map() const {
        std::map<std::size_t, double> out;
        for (const auto& e : entries) out.emplace(e.index, e.score);
        return out;
    }
};

inline double stealth_score(const Image& image, const TriggerSpec& trigger, StealthMetric metric,
                            const StealthOptions& options) {
    const Image poisoned = apply_trigger(image, trigger);
    if (metric == StealthMetric::gmsd)
        return gmsd(image, poisoned, options.gmsd);
    if (const auto* b = std::get_if<BadnetsTrigger>(&trigger)) {
        const auto placement = options.placement == PlacementKind::fixed
                                   ? Placement::fixed_at(b->row, b->col)
                                   : Placement::search();
        return mse_patch_score(image, badnets_patch(*b), placement).score;
    }
    return image_mse(image, poisoned);
}

// Scores every candidate against its own triggered version.
inline StealthRanking rank_stealth(std::span<const Image> images,
                                   std::span<const std::size_t> candidates,
                                   const TriggerSpec& trigger, const StealthOptions& options = {}) {
    StealthRanking ranking;
    ranking.metric = options.metric.value_or(default_stealth_metric(trigger));
    ranking.entries.reserve(candidates.size());
    for (auto idx : candidates) {
        if (idx >= images.size())
            fail_validation("candidate index " + std::to_string(idx) + " out of range");
        ranking.entries.push_back({idx, stealth_score(images[idx], trigger, ranking.metric, options)});
    }
    std::sort(ranking.entries.begin(), ranking.entries.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score < b.score;
        return a.index < b.index;
    });
    for (std::size_t i = 1; i < ranking.entries.size(); ++i)
        if (ranking.entries[i].index == ranking.entries[i - 1].index &&
            ranking.entries[i].score == ranking.entries[i - 1].score)
            fail_validation("duplicate candidate index " + std::to_string(ranking.entries[i].index));
    return ranking;
}

} // namespace poisonforge
