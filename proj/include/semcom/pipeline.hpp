#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "semcom/eval.hpp"
#include "semcom/ib_mask.hpp"
#include "semcom/transceiver.hpp"

namespace semcom {

struct DatasetConfig {
    std::string type = "gaussian_mixture";  // or "idx"
    int num_classes = 4;
    std::size_t dim = 8;
    std::size_t per_class = 500;
    double spread = 1.0;
    double train_fraction = 0.8;
    std::string idx_images;
    std::string idx_labels;

    void validate() const;
};

struct ChannelConfig {
    std::size_t subchannels = 16;
    std::size_t capacity = 2;
    double mean_snr_db = 0.0;
    double variance_db = 15.0;
    // When true, variance-style values (here and in the sweep list) are read
    // as standard deviations and squared before use.
    bool dispersion_is_std = false;
    std::size_t pilots = 16;  // recorded metadata only, not simulated

    void validate() const;
    double effective_variance(double value) const {
        return dispersion_is_std ? value * value : value;
    }
};

// One declarative document driving the whole pipeline. Stage seeds are all
// derived from the single global seed.
struct RunConfig {
    std::uint64_t seed = 2;
    std::string out_dir = "out";
    DatasetConfig dataset;
    TrainConfig transceiver;
    IbConfig ib;
    ChannelConfig channel;
    SweepConfig sweep;
    double halfsplit_noisy_snr_db = 0.0;

    // m = 512 feature units over 256 data subchannels, capacity 2, beta 0.3.
    void apply_paper_scale();
    void validate() const;
};

RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json(const nlohmann::json& j);
// Config echo for metadata sidecars (out_dir excluded so artifacts do not
// depend on where they are written).
nlohmann::json run_config_to_json(const RunConfig& cfg);

// Artifact file names inside out_dir.
namespace artifacts {
inline constexpr const char* dataset_csv = "dataset.csv";
inline constexpr const char* model_bin = "model.tscm";
inline constexpr const char* mask_json = "mask.json";
inline constexpr const char* csi_csv = "csi.csv";
inline constexpr const char* plan_csv = "plan.csv";
inline constexpr const char* sweep_csv = "sweep.csv";
inline constexpr const char* halfsplit_json = "halfsplit.json";
inline constexpr const char* halfsplit_coords_csv = "halfsplit_coords.csv";
}  // namespace artifacts

// Sidecar <artifact>.meta.json with seed, config echo and checksums.
void write_sidecar(const std::string& artifact_path, const nlohmann::json& meta);
// Checks existence and that the artifact hash matches its sidecar.
void require_artifact(const std::string& artifact_path);

// Pipeline stages. Each writes its artifact plus sidecar under cfg.out_dir
// and is byte-reproducible from (config, seed, upstream artifacts).
std::string cmd_gen_data(const RunConfig& cfg);
std::string cmd_train(const RunConfig& cfg);
std::string cmd_mask(const RunConfig& cfg);
std::string cmd_allocate(const RunConfig& cfg,
                         const std::optional<std::string>& external_csi = std::nullopt);
std::string cmd_sweep(const RunConfig& cfg);
std::string cmd_halfsplit(const RunConfig& cfg);

}  // namespace semcom
