#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "semcom/dataset.hpp"
#include "semcom/network.hpp"

namespace semcom {

// The m encoded feature units of one sample.
using FeatureBlock = std::vector<double>;

struct TrainConfig {
    int epochs = 30;
    std::size_t batch_size = 32;
    double lr = 0.05;
    double momentum = 0.9;
    double train_snr_db = 10.0;
    std::uint64_t seed = 1;
    std::size_t m = 32;  // encoded feature units
    std::vector<std::size_t> encoder_hidden = {32};
    std::vector<std::size_t> decoder_hidden = {32, 16};

    void validate() const;
};

// Frozen encoder/decoder pair. signal_power is the mean of z_k^2 over the
// training set and all units, the reference for SNR calibration.
struct TscModel {
    Network encoder;
    Network decoder;
    std::size_t m = 0;
    double train_snr_db = 0.0;
    double signal_power = 0.0;
    bool frozen = false;
    std::uint64_t seed = 0;
    std::string dataset_name;

    // Assemble a model from explicit networks (toy probes, tests).
    static TscModel from_parts(Network encoder, Network decoder, double signal_power,
                               double train_snr_db = 10.0, std::uint64_t seed = 0);
};

// Joint training through an AWGN channel at cfg.train_snr_db, calibrated
// against a running estimate of the encoded signal power. Returns a frozen
// model; deterministic given cfg.seed.
TscModel train(const Dataset& ds, const TrainConfig& cfg);

FeatureBlock encode(const TscModel& model, std::span<const double> x);

struct DecodeResult {
    std::vector<double> logits;
    int predicted = 0;  // argmax, ties to lowest class index
};
DecodeResult decode(const TscModel& model, std::span<const double> z_hat);

// Versioned binary container with checksummed parameter payload.
void save_model(const TscModel& model, const std::string& path);
TscModel load_model(const std::string& path);

// Fraction of samples decoded correctly after per-unit Gaussian noise on z.
double evaluate_accuracy(const TscModel& model, const Dataset& ds,
                         std::span<const double> noise_std_per_unit, Rng& rng);
double evaluate_accuracy(const TscModel& model, const Dataset& ds, double noise_std, Rng& rng);

}  // namespace semcom
