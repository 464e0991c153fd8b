#pragma once

// Trigger synthesis: Badnets per-channel patch patterns, Blended per-channel
// alpha compositing and MultiBpp per-channel quantization with error-diffusion
// dithering. Every apply_* returns a new image; inputs are never modified.

#include "error.hpp"
#include "image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace poisonforge {

enum class PatchPattern : int { checker = 0, black = 1, white = 2, vanilla = 3 };

struct BadnetsTrigger {
    std::size_t height = 3;
    std::size_t width = 3;
    std::size_t row = 29;
    std::size_t col = 29;
    std::array<PatchPattern, kChannels> patterns{PatchPattern::black, PatchPattern::black,
                                                 PatchPattern::black};

    friend bool operator==(const BadnetsTrigger&, const BadnetsTrigger&) = default;
};

struct BlendedTrigger {
    Image image;
    std::array<double, kChannels> alphas{0.2, 0.2, 0.2};
    // Where the trigger image came from: a file path or "procedural".
    std::string source = "procedural";

    friend bool operator==(const BlendedTrigger&, const BlendedTrigger&) = default;
};

enum class DitherMode {
    standard,  // Floyd-Steinberg accumulation, left-to-right, top-to-bottom
    literal,   // assignment instead of accumulation, columns right-to-left
};

struct MultiBppTrigger {
    std::array<int, kChannels> levels{32, 32, 32};
    std::array<int, kChannels> base{255, 255, 255};
    bool dithering = true;
    DitherMode mode = DitherMode::standard;
    // Weights for (right, down-right, down, down-left).
    std::array<double, 4> diffusion{7.0 / 16, 1.0 / 16, 5.0 / 16, 3.0 / 16};

    friend bool operator==(const MultiBppTrigger&, const MultiBppTrigger&) = default;
};

using TriggerSpec = std::variant<BadnetsTrigger, BlendedTrigger, MultiBppTrigger>;

inline std::string_view trigger_family(const TriggerSpec& spec) {
    switch (spec.index()) {
    case 0: return "badnets";
    case 1: return "blended";
    default: return "multibpp";
    }
}

// --- validation -------------------------------------------------------------

inline void validate(const BadnetsTrigger& t, std::size_t height, std::size_t width) {
    if (t.height == 0 || t.width == 0)
        fail_validation("badnets patch must be at least 1x1");
    if (t.row + t.height > height || t.col + t.width > width)
        fail_validation("badnets patch " + std::to_string(t.height) + "x" + std::to_string(t.width) +
                        " at (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                        ") is out of bounds for a " + std::to_string(height) + "x" +
                        std::to_string(width) + " image");
    for (auto p : t.patterns)
        if (static_cast<int>(p) < 0 || static_cast<int>(p) > 3)
            fail_validation("badnets channel pattern must be 0, 1, 2 or 3");
}

inline void validate(const BlendedTrigger& t, std::size_t height, std::size_t width) {
    if (t.image.height() != height || t.image.width() != width)
        fail_validation("blended trigger image size does not match the dataset images");
    for (double a : t.alphas)
        if (!(a >= 0.0 && a <= 1.0))
            fail_validation("blended alphas must lie in [0, 1]");
}

inline void validate(const MultiBppTrigger& t, std::size_t, std::size_t) {
    for (std::size_t c = 0; c < kChannels; ++c) {
        if (t.base[c] < 1 || t.base[c] > 255)
            fail_validation("multibpp base must lie in [1, 255]");
        if (t.levels[c] < 1 || t.levels[c] > t.base[c])
            fail_validation("multibpp levels must satisfy 1 <= N_p <= N_b");
    }
    double sum = 0.0;
    for (double d : t.diffusion) {
        if (!(d >= 0.0)) fail_validation("diffusion weights must be non-negative");
        sum += d;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        fail_validation("diffusion weights must sum to 1");
}

inline void validate(const TriggerSpec& spec, std::size_t height, std::size_t width) {
    std::visit([&](const auto& t) { validate(t, height, width); }, spec);
}

// --- Badnets ----------------------------------------------------------------

inline std::uint8_t badnets_value(PatchPattern p, std::size_t r, std::size_t c) {
    switch (p) {
    case PatchPattern::black: return 0;
    case PatchPattern::white: return 255;
    default: return (r + c) % 2 == 0 ? 0 : 255;
    }
}

inline Image apply_badnets(const Image& image, const BadnetsTrigger& t) {
    validate(t, image.height(), image.width());
    Image out = image;
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
        if (t.patterns[ch] == PatchPattern::vanilla)
            continue;
        for (std::size_t r = 0; r < t.height; ++r)
            for (std::size_t c = 0; c < t.width; ++c)
                out.at(ch, t.row + r, t.col + c) = badnets_value(t.patterns[ch], r, c);
    }
    return out;
}

// Patch content written by a Badnets trigger; vanilla channels carry no plane.
struct TriggerPatch {
    std::size_t height = 0;
    std::size_t width = 0;
    std::array<std::optional<std::vector<std::uint8_t>>, kChannels> planes;
};

inline TriggerPatch badnets_patch(const BadnetsTrigger& t) {
    TriggerPatch patch{t.height, t.width, {}};
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
        if (t.patterns[ch] == PatchPattern::vanilla)
            continue;
        std::vector<std::uint8_t> plane(t.height * t.width);
        for (std::size_t r = 0; r < t.height; ++r)
            for (std::size_t c = 0; c < t.width; ++c)
                plane[r * t.width + c] = badnets_value(t.patterns[ch], r, c);
        patch.planes[ch] = std::move(plane);
    }
    return patch;
}

// --- Blended ----------------------------------------------------------------

inline Image apply_blended(const Image& image, const BlendedTrigger& t) {
    if (!image.same_shape(t.image))
        fail_validation("blended trigger image size does not match the image");
    validate(t, image.height(), image.width());
    Image out = image;
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
        const double a = t.alphas[ch];
        if (a == 0.0)
            continue;
        auto dst = out.plane(ch);
        auto src = image.plane(ch);
        auto trg = t.image.plane(ch);
        for (std::size_t i = 0; i < dst.size(); ++i) {
            const double v = (1.0 - a) * src[i] + a * trg[i];
            dst[i] = clamp_to_byte(std::lround(v));
        }
    }
    return out;
}

// Deterministic stand-in for a user-supplied blend image: diagonal colour bands
// with a coarse checker overlay, integer arithmetic only.
inline Image procedural_trigger_image(std::size_t height, std::size_t width) {
    Image img(height, width);
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
            const bool tile = ((r / 4) + (c / 4)) % 2 == 0;
            img.at(0, r, c) = static_cast<std::uint8_t>((r * 7 + c * 3) * 4 % 256);
            img.at(1, r, c) = static_cast<std::uint8_t>(tile ? 200 : 40);
            img.at(2, r, c) = static_cast<std::uint8_t>((255 * (r + c)) / (height + width - 1));
        }
    }
    return img;
}

// --- MultiBpp ---------------------------------------------------------------

// Snaps x onto the lattice {round(k * base / levels)}. Inputs outside [0, 255]
// are clamped first; rounding is half away from zero.
inline int quantize_channel(double x, int base, int levels) {
    if (levels < 1 || levels > base)
        fail_validation("quantize_channel requires 1 <= N_p <= N_b");
    x = std::clamp(x, 0.0, 255.0);
    const double k = std::round(x / base * levels);
    const double v = std::round(k / levels * base);
    return static_cast<int>(std::clamp(v, 0.0, 255.0));
}

// Every value quantize_channel can return. Indices run past `levels` when
// base < 255, since inputs above base are still accepted.
inline std::vector<int> quantization_lattice(int base, int levels) {
    std::vector<int> out;
    const auto top = static_cast<int>(std::round(255.0 / base * levels));
    for (int k = 0; k <= top; ++k) {
        const double v = std::round(static_cast<double>(k) / levels * base);
        out.push_back(static_cast<int>(std::clamp(v, 0.0, 255.0)));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// Adds res * d to the four forward neighbours of (row, col) that exist.
inline void diffuse_residual(std::span<double> plane, std::size_t height, std::size_t width,
                             std::size_t row, std::size_t col, double res,
                             const std::array<double, 4>& d) {
    if (col + 1 < width) plane[row * width + col + 1] += res * d[0];
    if (row + 1 < height) {
        if (col + 1 < width) plane[(row + 1) * width + col + 1] += res * d[1];
        plane[(row + 1) * width + col] += res * d[2];
        if (col > 0) plane[(row + 1) * width + col - 1] += res * d[3];
    }
}

inline void dither_standard(std::span<double> plane, std::size_t height, std::size_t width,
                            int base, int levels, const std::array<double, 4>& d) {
    for (std::size_t r = 0; r < height; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
            double& px = plane[r * width + c];
            const double q = quantize_channel(px, base, levels);
            const double res = px - q;
            px = q;
            diffuse_residual(plane, height, width, r, c, res, d);
        }
    }
}

// Literal variant, x[i][j] with i the column scanned right to left and j the
// row. Neighbours are assigned, not accumulated.
inline void dither_literal(std::span<double> plane, std::size_t height, std::size_t width,
                           int base, int levels, const std::array<double, 4>& d) {
    auto at = [&](std::size_t col, std::size_t row) -> double& { return plane[row * width + col]; };
    for (std::size_t i = width; i-- > 0;) {
        for (std::size_t j = 0; j < height; ++j) {
            const double res = quantize_channel(at(i, j), base, levels) - at(i, j);
            at(i, j) += res;
            const double x = at(i, j);
            if (i + 1 < width) at(i + 1, j) = x + res * d[0];
            if (i + 1 < width && j + 1 < height) at(i + 1, j + 1) = x + res * d[1];
            if (j + 1 < height) at(i, j + 1) = x + res * d[2];
            if (i > 0 && j + 1 < height) at(i - 1, j + 1) = x + res * d[3];
        }
    }
}

inline Image apply_multibpp(const Image& image, const MultiBppTrigger& t) {
    validate(t, image.height(), image.width());
    Image out = image;
    const std::size_t h = image.height(), w = image.width();
    for (std::size_t ch = 0; ch < kChannels; ++ch) {
        auto src = image.plane(ch);
        auto dst = out.plane(ch);
        if (!t.dithering) {
            for (std::size_t i = 0; i < src.size(); ++i)
                dst[i] = static_cast<std::uint8_t>(quantize_channel(src[i], t.base[ch], t.levels[ch]));
            continue;
        }
        std::vector<double> work(src.begin(), src.end());
        if (t.mode == DitherMode::standard)
            dither_standard(work, h, w, t.base[ch], t.levels[ch], t.diffusion);
        else
            dither_literal(work, h, w, t.base[ch], t.levels[ch], t.diffusion);
        for (std::size_t i = 0; i < work.size(); ++i)
            dst[i] = clamp_to_byte(std::lround(work[i]));
    }
    return out;
}

inline Image apply_trigger(const Image& image, const TriggerSpec& spec) {
    return std::visit(
        [&](const auto& t) -> Image {
            using T = std::decay_t<decltype(t)>;
            if constexpr (std::is_same_v<T, BadnetsTrigger>) return apply_badnets(image, t);
            else if constexpr (std::is_same_v<T, BlendedTrigger>) return apply_blended(image, t);
            else return apply_multibpp(image, t);
        },
        spec);
}

// --- presets ----------------------------------------------------------------

inline constexpr std::string_view kPresetNames[] = {
    "badnets_vanilla", "badnets_c", "blended_vanilla", "blended_c",
    "multibpp_b",      "multibpp_rgb", "bpp_base"};

// 3x3 patch for 32x32 images, 9x9 for 64x64 and larger, anchored bottom-right.
inline BadnetsTrigger default_badnets(std::size_t height, std::size_t width) {
    BadnetsTrigger t;
    const std::size_t side = std::min(height, width) >= 64 ? 9 : 3;
    t.height = t.width = std::min({side, height, width});
    t.row = height - t.height;
    t.col = width - t.width;
    return t;
}

inline TriggerSpec preset_trigger(std::string_view family, std::size_t height = 32,
                                      std::size_t width = 32) {
    using P = PatchPattern;
    if (family == "badnets_vanilla") {
        auto t = default_badnets(height, width);
        t.patterns = {P::black, P::black, P::black};
        return t;
    }
    if (family == "badnets_c") {
        auto t = default_badnets(height, width);
        t.patterns = {P::black, P::black, P::checker};
        return t;
    }
    if (family == "blended_vanilla" || family == "blended_c") {
        BlendedTrigger t;
        t.image = procedural_trigger_image(height, width);
        t.alphas = family == "blended_c" ? std::array{0.2, 0.1, 0.3} : std::array{0.2, 0.2, 0.2};
        return t;
    }
    if (family == "multibpp_b" || family == "multibpp_rgb" || family == "bpp_base") {
        MultiBppTrigger t;
        if (family == "multibpp_b") t.levels = {255, 255, 8};
        else if (family == "multibpp_rgb") t.levels = {24, 48, 8};
        else t.levels = {32, 32, 32};
        return t;
    }
    fail_validation("unknown trigger preset '" + std::string(family) + "'");
}

// "24:48:8" style notation of MultiBpp levels.
inline std::string levels_string(const MultiBppTrigger& t) {
    return std::to_string(t.levels[0]) + ":" + std::to_string(t.levels[1]) + ":" +
           std::to_string(t.levels[2]);
}

// --- chromaticity -----------------------------------------------------------

struct Chromaticity {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

// Normalized CIE-RGB shares (r + g + b = 1) to XYZ chromaticity coordinates.
inline Chromaticity rgb_to_xyz_chromaticity(double r, double g, double b) {
    const double den = 0.607 * r + 1.132 * g + 1.200 * b;
    if (den == 0.0)
        return {};
    return {(0.490 * r + 0.310 * g + 0.200 * b) / den,
            (0.117 * r + 0.812 * g + 0.010 * b) / den,
            (0.000 * r + 0.010 * g + 0.990 * b) / den};
}

// Pixel values to chromaticity; a black pixel maps to (0, 0, 0).
inline Chromaticity pixel_chromaticity(std::uint8_t red, std::uint8_t green, std::uint8_t blue) {
    const double sum = static_cast<double>(red) + green + blue;
    if (sum == 0.0)
        return {};
    return rgb_to_xyz_chromaticity(red / sum, green / sum, blue / sum);
}

} // namespace poisonforge
