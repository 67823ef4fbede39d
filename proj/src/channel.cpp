#include "semcom/channel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "semcom/allocation.hpp"
#include "semcom/errors.hpp"
#include "semcom/serialize.hpp"

namespace semcom {

namespace {
constexpr std::uint64_t kCsiStream = 0x637369ull;
}

SubchannelSet sample_subchannels(std::size_t s, std::size_t capacity, double mean_snr_db,
                                 double variance_db, std::uint64_t seed) {
    if (s < 1) throw config_error("sample_subchannels: need at least one subchannel");
    if (capacity < 1) throw config_error("sample_subchannels: capacity must be >= 1");
    if (variance_db < 0.0) throw config_error("sample_subchannels: variance must be >= 0");

    SubchannelSet subs;
    subs.capacity = capacity;
    subs.mean_snr_db = mean_snr_db;
    subs.variance_db = variance_db;
    subs.seed = seed;
    subs.snr_db.resize(s);
    const double spread = std::sqrt(variance_db);
    Rng rng(seed, kCsiStream);
    for (double& v : subs.snr_db) {
        const double raw = mean_snr_db + spread * rng.next_normal();
        v = std::clamp(raw, mean_snr_db - 3.0 * spread, mean_snr_db + 3.0 * spread);
    }
    return subs;
}

double snr_to_noise_std(double snr_db, double signal_power) {
    if (!(signal_power > 0.0)) throw config_error("snr_to_noise_std: signal_power must be > 0");
    return std::sqrt(signal_power * std::pow(10.0, -snr_db / 10.0));
}

ChannelRealization realize(const AllocationPlan& plan, const SubchannelSet& subs,
                           double signal_power) {
    validate_plan(plan, subs);
    ChannelRealization real;
    real.per_unit_noise_std.resize(plan.assign.size());
    for (std::size_t k = 0; k < plan.assign.size(); ++k)
        real.per_unit_noise_std[k] = snr_to_noise_std(subs.snr_db[plan.assign[k]], signal_power);
    return real;
}

std::vector<double> transmit(const std::vector<double>& z, const ChannelRealization& real,
                             Rng& rng) {
    if (z.size() != real.per_unit_noise_std.size())
        throw std::invalid_argument("transmit: feature/noise length mismatch");
    std::vector<double> out(z.size());
    for (std::size_t k = 0; k < z.size(); ++k)
        out[k] = z[k] + real.per_unit_noise_std[k] * rng.next_normal();
    return out;
}

void write_csi_csv(const SubchannelSet& subs, const std::string& path) {
    std::ostringstream out;
    out << "subchannel_index,snr_db\n";
    for (std::size_t j = 0; j < subs.size(); ++j)
        out << j << "," << format_double(subs.snr_db[j]) << "\n";
    write_file(path, out.str());
}

SubchannelSet read_csi_csv(const std::string& path, std::size_t capacity) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "subchannel_index,snr_db")
        throw artifact_error("csi csv: missing 'subchannel_index,snr_db' header in " + path);
    SubchannelSet subs;
    subs.capacity = capacity;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        if (!std::getline(row, cell, ',')) throw artifact_error("csi csv: bad row");
        const auto index = static_cast<std::size_t>(std::stoull(cell));
        if (index != subs.snr_db.size())
            throw artifact_error("csi csv: subchannel indices must be 0..s-1 in order");
        if (!std::getline(row, cell, ',')) throw artifact_error("csi csv: missing snr_db");
        subs.snr_db.push_back(std::stod(cell));
    }
    if (subs.snr_db.empty()) throw artifact_error("csi csv: no subchannels in " + path);
    double mean = 0.0;
    for (double v : subs.snr_db) mean += v;
    mean /= static_cast<double>(subs.size());
    double var = 0.0;
    for (double v : subs.snr_db) var += (v - mean) * (v - mean);
    subs.mean_snr_db = mean;
    subs.variance_db = var / static_cast<double>(subs.size());
    return subs;
}

}  // namespace semcom
