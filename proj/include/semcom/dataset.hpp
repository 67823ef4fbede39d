#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace semcom {

struct Dataset {
    std::vector<std::vector<double>> inputs;
    std::vector<int> labels;
    int num_classes = 0;
    std::string name;

    std::size_t size() const { return inputs.size(); }
    std::size_t dim() const { return inputs.empty() ? 0 : inputs.front().size(); }
    void validate() const;
};

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 1;
};

// Synthetic classification task: class means drawn on the unit sphere scaled
// by a fixed 3.0 separation, samples N(mean, spread^2 I). Deterministic in seed.
Dataset gen_gaussian_mixture(int num_classes, std::size_t dim, std::size_t per_class,
                             double spread, std::uint64_t seed);

// IDX image/label pair (big-endian sizes, magic 0x00000803 / 0x00000801).
// Pixels are scaled by 1/255 into [0,1] and flattened row-major.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Seeded permutation, exact disjoint partition.
std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

// CSV with header "label,x0,x1,...".
void write_dataset_csv(const Dataset& ds, const std::string& path);
Dataset read_dataset_csv(const std::string& path);

}  // namespace semcom
