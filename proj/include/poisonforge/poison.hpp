#pragma once

#include "dataset_io.hpp"
#include "error.hpp"
#include "hash.hpp"
#include "image.hpp"
#include "selection.hpp"
#include "triggers.hpp"
#include "version.hpp"

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace poisonforge {

struct PoisonManifest {
    std::size_t target_label = 0;
    TriggerSpec trigger;
    std::vector<std::size_t> indices;  // ascending, unique
    std::size_t dataset_size = 0;
    double rate = 0.0;                 // |indices| / |D_tr|
    std::string tool_version = kVersion;
    std::string output_hash;           // sha256 of the encoded poisoned dataset
    // Reproducibility block, filled in by callers that know their inputs.
    std::map<std::string, std::string> input_hashes;
};

// Replaces exactly the selected images by their triggered versions. Labels are
// copied untouched; every selected sample must already carry `target`.
inline std::pair<LabeledDataset, PoisonManifest>
poison_dataset(const LabeledDataset& dataset, std::span<const std::size_t> selected,
               std::size_t target, const TriggerSpec& trigger) {
    dataset.validate();
    std::vector<std::size_t> indices(selected.begin(), selected.end());
    std::sort(indices.begin(), indices.end());
    if (std::adjacent_find(indices.begin(), indices.end()) != indices.end())
        fail_validation("selection contains duplicate indices");
    for (auto idx : indices) {
        if (idx >= dataset.size())
            fail_validation("selected index " + std::to_string(idx) + " out of range");
        if (dataset.labels[idx] != target)
            fail_validation("clean-label violation: index " + std::to_string(idx) + " has label " +
                            std::to_string(dataset.labels[idx]) + ", target is " +
                            std::to_string(target));
    }
    if (!dataset.images.empty())
        validate(trigger, dataset.images.front().height(), dataset.images.front().width());

    LabeledDataset out = dataset;
    for (auto idx : indices)
        out.images[idx] = apply_trigger(dataset.images[idx], trigger);

    PoisonManifest manifest;
    manifest.target_label = target;
    manifest.trigger = trigger;
    manifest.indices = std::move(indices);
    manifest.dataset_size = dataset.size();
    manifest.rate = dataset.size() == 0
                        ? 0.0
                        : static_cast<double>(manifest.indices.size()) / static_cast<double>(dataset.size());
    manifest.output_hash = sha256_hex(encode_cifar_binary(out));
    return {std::move(out), std::move(manifest)};
}

inline std::pair<LabeledDataset, PoisonManifest>
poison_dataset(const LabeledDataset& dataset, const SelectionReport& report, const TriggerSpec& trigger) {
    if (!report.strategy.target_label)
        fail_validation("clean-label violation: selection was not restricted to a target label");
    return poison_dataset(dataset, report.selected, *report.strategy.target_label, trigger);
}

} // namespace poisonforge
