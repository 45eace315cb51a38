#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "holmes/selector.hpp"

namespace holmes {

// One zoo entry. The ROC-AUC field is the model's standalone validation accuracy.
struct ModelProfile {
    std::string id;
    int depth = 1;        // residual blocks
    int width = 1;        // first-layer filters
    double macs = 0.0;    // multiply-accumulates per query
    double memory_mb = 0.0;
    std::string modality; // "ECG-I", "ECG-II", ...
    int input_len = 7500; // samples per segment
    double target_auc = 0.75;

    friend bool operator==(const ModelProfile&, const ModelProfile&) = default;
};

// Ordered, immutable collection of profiles. Index order defines the Selector space.
class ModelZoo {
public:
    ModelZoo() = default;
    // Validates ids are unique and every profile is in range; throws InvalidArgument.
    explicit ModelZoo(std::vector<ModelProfile> profiles);

    std::size_t size() const { return profiles_.size(); }
    const ModelProfile& operator[](std::size_t i) const { return profiles_[i]; }
    const std::vector<ModelProfile>& profiles() const { return profiles_; }

    // Sum of MACs over the selected models.
    double selected_macs(const Selector& b) const;
    std::size_t index_of(const std::string& id) const;

    friend bool operator==(const ModelZoo&, const ModelZoo&) = default;

private:
    std::vector<ModelProfile> profiles_;
};

struct ZooGenOptions {
    double kappa = 1.0;       // macs = kappa * width * depth * input_len
    int input_len = 7500;     // 30 s at 250 Hz
    double auc_noise = 0.03;  // uniform +/- jitter around the size-rank baseline
};

// Synthesizes leads x filters x blocks profiles (lead-major, then filters, then blocks).
ModelZoo generate_zoo(int leads, const std::vector<int>& filter_grid, const std::vector<int>& block_grid,
                      std::uint64_t seed, const ZooGenOptions& opts = {});

std::string zoo_to_json(const ModelZoo& zoo);
ModelZoo zoo_from_json(const std::string& text);
void save_zoo(const ModelZoo& zoo, const std::filesystem::path& path);
ModelZoo load_zoo(const std::filesystem::path& path);

std::string lead_modality(int lead);

}  // namespace holmes
