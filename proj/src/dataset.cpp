#include "semcom/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "semcom/errors.hpp"
#include "semcom/rng.hpp"
#include "semcom/serialize.hpp"

namespace semcom {

namespace {

constexpr double kClassSeparation = 3.0;

// Internal rng stream tags.
constexpr std::uint64_t kMeanStream = 0x6d69785f6d65616eull;
constexpr std::uint64_t kSampleStream = 0x6d69785f73616d70ull;
constexpr std::uint64_t kSplitStream = 0x73706c6974ull;

std::uint32_t read_u32_be(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

}  // namespace

void Dataset::validate() const {
    if (inputs.size() != labels.size())
        throw config_error("dataset: inputs and labels differ in length");
    for (int label : labels)
        if (label < 0 || label >= num_classes)
            throw config_error("dataset: label out of range");
    const std::size_t d = dim();
    for (const auto& x : inputs) {
        if (x.size() != d) throw config_error("dataset: ragged input dimensions");
        for (double v : x)
            if (!std::isfinite(v)) throw config_error("dataset: non-finite input entry");
    }
}

Dataset gen_gaussian_mixture(int num_classes, std::size_t dim, std::size_t per_class,
                             double spread, std::uint64_t seed) {
    if (num_classes < 2) throw config_error("gen_gaussian_mixture: num_classes must be >= 2");
    if (dim < 2) throw config_error("gen_gaussian_mixture: dim must be >= 2");
    if (per_class < 1) throw config_error("gen_gaussian_mixture: per_class must be >= 1");
    if (!(spread > 0.0)) throw config_error("gen_gaussian_mixture: spread must be > 0");

    Rng mean_rng(seed, kMeanStream);
    std::vector<std::vector<double>> means(num_classes);
    for (auto& mu : means) {
        mu = mean_rng.normal_vector(dim);
        double norm = 0.0;
        for (double v : mu) norm += v * v;
        norm = std::sqrt(norm);
        if (norm < 1e-12) norm = 1.0;
        for (double& v : mu) v *= kClassSeparation / norm;
    }

    Dataset ds;
    ds.num_classes = num_classes;
    ds.name = "gaussian_mixture";
    ds.inputs.reserve(static_cast<std::size_t>(num_classes) * per_class);
    ds.labels.reserve(ds.inputs.capacity());
    Rng sample_rng(seed, kSampleStream);
    for (int c = 0; c < num_classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            std::vector<double> x(dim);
            for (std::size_t j = 0; j < dim; ++j)
                x[j] = means[c][j] + spread * sample_rng.next_normal();
            ds.inputs.push_back(std::move(x));
            ds.labels.push_back(c);
        }
    }
    return ds;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const std::string img = read_file(images_path);
    const std::string lab = read_file(labels_path);
    const auto* ip = reinterpret_cast<const unsigned char*>(img.data());
    const auto* lp = reinterpret_cast<const unsigned char*>(lab.data());

    if (img.size() < 4 || std::memcmp(ip, "\x00\x00\x08\x03", 4) != 0)
        throw artifact_error("idx: bad image magic in " + images_path);
    if (lab.size() < 4 || std::memcmp(lp, "\x00\x00\x08\x01", 4) != 0)
        throw artifact_error("idx: bad label magic in " + labels_path);
    if (img.size() < 16) throw artifact_error("idx: truncated image header in " + images_path);
    if (lab.size() < 8) throw artifact_error("idx: truncated label header in " + labels_path);

    const std::uint32_t n_images = read_u32_be(ip + 4);
    const std::uint32_t rows = read_u32_be(ip + 8);
    const std::uint32_t cols = read_u32_be(ip + 12);
    const std::uint32_t n_labels = read_u32_be(lp + 4);
    const std::size_t pixels = std::size_t(rows) * cols;

    if (img.size() != 16 + std::size_t(n_images) * pixels)
        throw artifact_error("idx: image payload length mismatch in " + images_path);
    if (lab.size() != 8 + std::size_t(n_labels))
        throw artifact_error("idx: label payload length mismatch in " + labels_path);
    if (n_images != n_labels)
        throw artifact_error("idx: image/label count mismatch");

    Dataset ds;
    ds.name = "idx";
    int max_label = -1;
    ds.inputs.reserve(n_images);
    ds.labels.reserve(n_images);
    for (std::uint32_t i = 0; i < n_images; ++i) {
        std::vector<double> x(pixels);
        const unsigned char* px = ip + 16 + std::size_t(i) * pixels;
        for (std::size_t j = 0; j < pixels; ++j) x[j] = px[j] / 255.0;
        ds.inputs.push_back(std::move(x));
        const int label = lp[8 + i];
        ds.labels.push_back(label);
        max_label = std::max(max_label, label);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
    if (ds.size() == 0) throw config_error("split: dataset is empty");
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw config_error("split: train_fraction must be in (0,1)");

    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(spec.seed, kSplitStream);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.next_below(i)]);

    const auto n_train = static_cast<std::size_t>(
        std::llround(spec.train_fraction * static_cast<double>(ds.size())));
    Dataset train, test;
    train.num_classes = test.num_classes = ds.num_classes;
    train.name = ds.name + "/train";
    test.name = ds.name + "/test";
    for (std::size_t i = 0; i < order.size(); ++i) {
        Dataset& out = i < n_train ? train : test;
        out.inputs.push_back(ds.inputs[order[i]]);
        out.labels.push_back(ds.labels[order[i]]);
    }
    return {std::move(train), std::move(test)};
}

void write_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ostringstream out;
    out << "label";
    for (std::size_t j = 0; j < ds.dim(); ++j) out << ",x" << j;
    out << "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.labels[i];
        for (double v : ds.inputs[i]) out << "," << format_double(v);
        out << "\n";
    }
    write_file(path, out.str());
}

Dataset read_dataset_csv(const std::string& path) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("label", 0) != 0)
        throw artifact_error("dataset csv: missing 'label,...' header in " + path);
    Dataset ds;
    ds.name = std::filesystem::path(path).stem().string();
    int max_label = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        if (!std::getline(row, cell, ',')) throw artifact_error("dataset csv: bad row");
        const int label = std::stoi(cell);
        std::vector<double> x;
        while (std::getline(row, cell, ',')) x.push_back(std::stod(cell));
        ds.labels.push_back(label);
        ds.inputs.push_back(std::move(x));
        max_label = std::max(max_label, label);
    }
    ds.num_classes = max_label + 1;
    ds.validate();
    return ds;
}

}  // namespace semcom
