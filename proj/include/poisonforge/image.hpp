#pragma once

#include "error.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace poisonforge {

inline constexpr std::size_t kChannels = 3;

enum class Channel : std::size_t { red = 0, green = 1, blue = 2 };

// 8-bit RGB image stored channel-planar: R plane, G plane, B plane, each row-major.
class Image {
public:
    Image() = default;

    Image(std::size_t height, std::size_t width, std::uint8_t fill = 0)
        : height_(height), width_(width), pixels_(kChannels * height * width, fill) {
        if (height == 0 || width == 0)
            fail_validation("image dimensions must be at least 1x1");
    }

    Image(std::size_t height, std::size_t width, std::vector<std::uint8_t> planar)
        : height_(height), width_(width), pixels_(std::move(planar)) {
        if (height == 0 || width == 0)
            fail_validation("image dimensions must be at least 1x1");
        if (pixels_.size() != kChannels * height * width)
            fail_validation("pixel buffer length does not match 3*H*W");
    }

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t plane_size() const noexcept { return height_ * width_; }

    std::uint8_t& at(std::size_t c, std::size_t row, std::size_t col) {
        return pixels_[(c * height_ + row) * width_ + col];
    }
    std::uint8_t at(std::size_t c, std::size_t row, std::size_t col) const {
        return pixels_[(c * height_ + row) * width_ + col];
    }

    std::span<std::uint8_t> plane(std::size_t c) {
        return {pixels_.data() + c * plane_size(), plane_size()};
    }
    std::span<const std::uint8_t> plane(std::size_t c) const {
        return {pixels_.data() + c * plane_size(), plane_size()};
    }

    std::span<const std::uint8_t> bytes() const noexcept { return pixels_; }

    bool same_shape(const Image& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<std::uint8_t> pixels_;
};

struct DatasetProfile {
    std::string name;
    std::size_t num_classes = 10;
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t target_label = 0;
    // CIFAR-100 records carry a coarse label byte ahead of the fine label.
    bool coarse_label = false;

    std::size_t record_size() const noexcept {
        return (coarse_label ? 2 : 1) + kChannels * height * width;
    }

    friend bool operator==(const DatasetProfile&, const DatasetProfile&) = default;
};

inline DatasetProfile cifar10_profile() { return {"cifar10", 10, 32, 32, 0, false}; }
inline DatasetProfile cifar100_profile() { return {"cifar100", 100, 32, 32, 0, true}; }
inline DatasetProfile tiny_imagenet_profile() { return {"tiny", 200, 64, 64, 0, false}; }

inline std::optional<DatasetProfile> profile_by_name(std::string_view name) {
    if (name == "cifar10") return cifar10_profile();
    if (name == "cifar100") return cifar100_profile();
    if (name == "tiny") return tiny_imagenet_profile();
    return std::nullopt;
}

struct LabeledDataset {
    std::size_t num_classes = 0;
    std::vector<Image> images;
    std::vector<std::size_t> labels;
    // Present only for profiles with a coarse label byte; written back verbatim.
    std::vector<std::uint8_t> coarse_labels;

    std::size_t size() const noexcept { return images.size(); }

    void validate() const {
        if (images.size() != labels.size())
            fail_validation("dataset has mismatched image and label counts");
        if (!coarse_labels.empty() && coarse_labels.size() != labels.size())
            fail_validation("dataset has mismatched coarse label count");
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= num_classes)
                fail_validation("label out of range at index " + std::to_string(i));
        }
    }

    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

inline std::uint8_t clamp_to_byte(long v) {
    return static_cast<std::uint8_t>(v < 0 ? 0 : (v > 255 ? 255 : v));
}

} // namespace poisonforge
