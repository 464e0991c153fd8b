#pragma once

// CIFAR-style binary codec. A record is an optional coarse label byte, one
// label byte, then the R, G and B planes, each row-major. Files carry no header.

#include "error.hpp"
#include "image.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

namespace poisonforge {

inline LabeledDataset decode_cifar_binary(std::span<const std::uint8_t> bytes,
                                          const DatasetProfile& profile) {
    const std::size_t record = profile.record_size();
    if (bytes.size() % record != 0)
        fail_validation("truncated file: " + std::to_string(bytes.size()) +
                        " bytes is not a multiple of the " + std::to_string(record) +
                        "-byte record size");

    const std::size_t count = bytes.size() / record;
    const std::size_t pixel_bytes = kChannels * profile.height * profile.width;

    LabeledDataset out;
    out.num_classes = profile.num_classes;
    out.images.reserve(count);
    out.labels.reserve(count);
    if (profile.coarse_label)
        out.coarse_labels.reserve(count);

    for (std::size_t r = 0; r < count; ++r) {
        auto rec = bytes.subspan(r * record, record);
        if (profile.coarse_label) {
            out.coarse_labels.push_back(rec[0]);
            rec = rec.subspan(1);
        }
        const std::size_t label = rec[0];
        if (label >= profile.num_classes)
            fail_validation("label out of range: record " + std::to_string(r) + " has label " +
                            std::to_string(label) + " but the profile has " +
                            std::to_string(profile.num_classes) + " classes");
        out.labels.push_back(label);
        auto px = rec.subspan(1, pixel_bytes);
        out.images.emplace_back(profile.height, profile.width,
                                std::vector<std::uint8_t>(px.begin(), px.end()));
    }
    return out;
}

inline std::vector<std::uint8_t> encode_cifar_binary(const LabeledDataset& dataset) {
    dataset.validate();
    std::vector<std::uint8_t> out;
    const bool coarse = !dataset.coarse_labels.empty();
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (dataset.labels[i] > 255)
            fail_validation("label does not fit in a record byte");
        if (coarse)
            out.push_back(dataset.coarse_labels[i]);
        out.push_back(static_cast<std::uint8_t>(dataset.labels[i]));
        auto px = dataset.images[i].bytes();
        out.insert(out.end(), px.begin(), px.end());
    }
    return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail_io("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad())
        fail_io("read failure on " + path.string());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail_io("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out)
        fail_io("write failure on " + path.string());
}

inline LabeledDataset read_cifar_binary(const std::filesystem::path& path,
                                        const DatasetProfile& profile) {
    const auto bytes = read_file_bytes(path);
    return decode_cifar_binary(bytes, profile);
}

inline void write_cifar_binary(const LabeledDataset& dataset, const std::filesystem::path& path) {
    write_file_bytes(path, encode_cifar_binary(dataset));
}

// Indices of samples labelled `target`, ascending.
inline std::vector<std::size_t> target_subset(const LabeledDataset& dataset, std::size_t target) {
    if (target >= dataset.num_classes)
        fail_validation("target label " + std::to_string(target) + " out of range");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < dataset.labels.size(); ++i)
        if (dataset.labels[i] == target)
            out.push_back(i);
    return out;
}

} // namespace poisonforge
