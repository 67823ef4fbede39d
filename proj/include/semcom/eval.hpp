#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "semcom/allocation.hpp"
#include "semcom/channel.hpp"
#include "semcom/dataset.hpp"
#include "semcom/ib_mask.hpp"
#include "semcom/transceiver.hpp"

namespace semcom {

struct ChannelGeometry {
    std::size_t subchannels = 16;
    std::size_t capacity = 2;
};

struct SweepConfig {
    std::vector<double> snr_points_db = {-5, 0, 5, 10, 15, 20};
    std::vector<double> variance_list_db = {15, 2};
    std::vector<Strategy> strategies = {Strategy::proposed, Strategy::random,
                                        Strategy::worst_case};
    int realizations_per_point = 20;
    std::size_t samples_per_realization = 0;  // 0 = full test set
    std::uint64_t seed = 1;

    void validate() const;
};

struct SweepRow {
    double snr_db = 0.0;
    double variance_db = 0.0;
    Strategy strategy = Strategy::proposed;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
    int n = 0;
};

struct SweepReport {
    std::vector<SweepRow> rows;
    std::uint64_t seed = 0;
};

// For each (variance, snr, realization): sample a SubchannelSet, build each
// strategy's plan, realize the channel, and measure test accuracy. The noise
// draws are shared across strategies within a realization (paired runs), so
// strategy comparisons are common-random-number comparisons.
SweepReport run_snr_sweep(const TscModel& model, const RobustnessMask& mask,
                          ChannelGeometry geometry, const SweepConfig& cfg,
                          const Dataset& test_ds);

// CSV: "snr_db,variance_db,strategy,mean_accuracy,std_accuracy,n"
void write_sweep_csv(const SweepReport& report, const std::string& path);

struct Pca2dResult {
    std::vector<std::array<double, 2>> coords;
    std::array<double, 2> eigenvalues = {0.0, 0.0};
    std::array<std::vector<double>, 2> components;
    bool rank_deficient = false;  // second eigenvalue collapsed to ~0
    bool near_isotropic = false;  // eigenvalue ratio close to 1
};

// Top-2 principal components by power iteration with deflation
// (tolerance 1e-9, max 1000 iterations). Component signs fixed so the
// largest-magnitude loading is positive.
Pca2dResult pca_2d(const std::vector<std::vector<double>>& vectors);

struct SilhouetteResult {
    double score = 0.0;
    bool degenerate = false;       // zero-distance geometry handled as 0
    std::size_t excluded = 0;      // points dropped with their singleton class
};

// Mean silhouette with Euclidean distance; singleton classes are excluded.
SilhouetteResult silhouette(const std::vector<std::array<double, 2>>& coords,
                            const std::vector<int>& labels);

enum class HalfId { first, second };
enum class ChannelCondition { ideal, noisy };

const char* half_name(HalfId h);
const char* channel_condition_name(ChannelCondition c);

struct HalfSplitCondition {
    HalfId half = HalfId::first;
    ChannelCondition channel = ChannelCondition::ideal;
    double accuracy = 0.0;
    double silhouette_score = 0.0;
    bool silhouette_degenerate = false;
    std::vector<std::array<double, 2>> coords;  // PCA projection per sample
};

struct HalfSplitReport {
    std::vector<HalfSplitCondition> conditions;  // first/second x ideal/noisy
    std::vector<int> labels;                     // class per coords row
    std::vector<std::size_t> unit_order;         // rank_units order used
    double noisy_snr_db = 0.0;
    std::uint64_t seed = 0;
};

// Rank units by robustness score, keep one half (first = top-ranked), impute
// the complementary half with its per-unit mean, and decode under ideal and
// noisy (uniform SNR) conditions. imputation_means defaults to the per-unit
// feature means of ds; pass training-set means to impute from the train split.
HalfSplitReport half_split_analysis(const TscModel& model, const RobustnessMask& mask,
                                    const Dataset& ds, double noisy_snr_db,
                                    std::uint64_t seed,
                                    const std::vector<double>* imputation_means = nullptr);

void write_halfsplit_json(const HalfSplitReport& report, const std::string& path);
// CSV: "half,channel,class,pc1,pc2"
void write_halfsplit_coords_csv(const HalfSplitReport& report, const std::string& path);

}  // namespace semcom
