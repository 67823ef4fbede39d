#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semcom/rng.hpp"

namespace semcom {

struct AllocationPlan;

// Parallel AWGN pipes with per-subchannel instantaneous SNR (the CSI).
// Unit gain; impairment is expressed purely through noise variance.
struct SubchannelSet {
    std::vector<double> snr_db;
    std::size_t capacity = 1;  // feature units per subchannel
    double mean_snr_db = 0.0;
    double variance_db = 0.0;
    std::uint64_t seed = 0;

    std::size_t size() const { return snr_db.size(); }
    std::size_t total_capacity() const { return snr_db.size() * capacity; }
};

// Per-subchannel SNR ~ N(mean, variance) in the dB domain, clamped to
// mean +- 3*sqrt(variance).
SubchannelSet sample_subchannels(std::size_t s, std::size_t capacity, double mean_snr_db,
                                 double variance_db, std::uint64_t seed);

// sqrt(signal_power * 10^(-snr_db/10))
double snr_to_noise_std(double snr_db, double signal_power);

struct ChannelRealization {
    std::vector<double> per_unit_noise_std;
};

ChannelRealization realize(const AllocationPlan& plan, const SubchannelSet& subs,
                           double signal_power);

// z_hat_k = z_k + noise_std_k * eps_k
std::vector<double> transmit(const std::vector<double>& z, const ChannelRealization& real,
                             Rng& rng);

// CSI trace format: "subchannel_index,snr_db" with header.
void write_csi_csv(const SubchannelSet& subs, const std::string& path);
SubchannelSet read_csi_csv(const std::string& path, std::size_t capacity);

}  // namespace semcom
