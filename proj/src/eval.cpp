#include "semcom/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "semcom/errors.hpp"
#include "semcom/serialize.hpp"

namespace semcom {

namespace {

enum SweepRole : std::uint64_t {
    kRoleCsi = 0,
    kRoleNoise = 1,
    kRoleRandomPlan = 2,
    kRoleSubset = 3,
};

std::uint64_t sweep_tag(std::size_t vi, std::size_t si, int ri, SweepRole role) {
    return (((static_cast<std::uint64_t>(vi) * 4096 + si) * 65536 +
             static_cast<std::uint64_t>(ri)) << 3) |
           static_cast<std::uint64_t>(role);
}

double accuracy_over(const TscModel& model, const std::vector<FeatureBlock>& features,
                     const std::vector<int>& labels, const std::vector<std::size_t>& subset,
                     const ChannelRealization& real, Rng& rng) {
    std::size_t correct = 0;
    std::vector<double> z_hat(model.m);
    for (std::size_t idx : subset) {
        const FeatureBlock& z = features[idx];
        for (std::size_t k = 0; k < model.m; ++k)
            z_hat[k] = z[k] + real.per_unit_noise_std[k] * rng.next_normal();
        if (decode(model, z_hat).predicted == labels[idx]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(subset.size());
}

std::uint64_t halfsplit_tag(HalfId half, ChannelCondition cond) {
    return 0x4853ull << 8 | (static_cast<std::uint64_t>(half) << 1) |
           static_cast<std::uint64_t>(cond);
}

}  // namespace

void SweepConfig::validate() const {
    if (snr_points_db.empty()) throw config_error("sweep.snr_points_db must be non-empty");
    if (variance_list_db.empty()) throw config_error("sweep.variance_list_db must be non-empty");
    if (strategies.empty()) throw config_error("sweep.strategies must be non-empty");
    if (realizations_per_point < 1) throw config_error("sweep.realizations_per_point >= 1");
    for (double v : variance_list_db)
        if (v < 0.0) throw config_error("sweep.variance_list_db entries must be >= 0");
    for (Strategy s : strategies)
        if (s == Strategy::brute_force)
            throw config_error("sweep: brute_force is a test oracle, not a sweep strategy");
}

SweepReport run_snr_sweep(const TscModel& model, const RobustnessMask& mask,
                          ChannelGeometry geometry, const SweepConfig& cfg,
                          const Dataset& test_ds) {
    cfg.validate();
    if (mask.size() != model.m) throw config_error("sweep: mask length does not match model m");
    if (geometry.subchannels * geometry.capacity < model.m)
        throw config_error("sweep: channel geometry cannot carry all feature units");
    if (test_ds.size() == 0) throw config_error("sweep: test dataset is empty");

    std::vector<FeatureBlock> features(test_ds.size());
    for (std::size_t i = 0; i < test_ds.size(); ++i)
        features[i] = encode(model, test_ds.inputs[i]);

    SweepReport report;
    report.seed = cfg.seed;
    const std::size_t n_real = static_cast<std::size_t>(cfg.realizations_per_point);

    for (std::size_t vi = 0; vi < cfg.variance_list_db.size(); ++vi) {
        for (std::size_t si = 0; si < cfg.snr_points_db.size(); ++si) {
            // accuracy[strategy][realization]
            std::vector<std::vector<double>> acc(cfg.strategies.size(),
                                                 std::vector<double>(n_real, 0.0));
            for (int ri = 0; ri < cfg.realizations_per_point; ++ri) {
                const SubchannelSet subs = sample_subchannels(
                    geometry.subchannels, geometry.capacity, cfg.snr_points_db[si],
                    cfg.variance_list_db[vi],
                    derive_seed(cfg.seed, sweep_tag(vi, si, ri, kRoleCsi)));

                std::vector<std::size_t> subset(test_ds.size());
                std::iota(subset.begin(), subset.end(), std::size_t{0});
                if (cfg.samples_per_realization > 0 &&
                    cfg.samples_per_realization < subset.size()) {
                    Rng pick(derive_seed(cfg.seed, sweep_tag(vi, si, ri, kRoleSubset)), 0);
                    for (std::size_t i = subset.size(); i > 1; --i)
                        std::swap(subset[i - 1], subset[pick.next_below(i)]);
                    subset.resize(cfg.samples_per_realization);
                }

                for (std::size_t sti = 0; sti < cfg.strategies.size(); ++sti) {
                    AllocationPlan plan;
                    switch (cfg.strategies[sti]) {
                        case Strategy::proposed:
                            plan = greedy_allocate(mask, subs);
                            break;
                        case Strategy::worst_case:
                            plan = worst_case_allocate(mask, subs);
                            break;
                        case Strategy::random: {
                            Rng plan_rng(
                                derive_seed(cfg.seed, sweep_tag(vi, si, ri, kRoleRandomPlan)),
                                0);
                            plan = random_allocate(model.m, subs, plan_rng);
                            break;
                        }
                        case Strategy::brute_force:
                            throw config_error("sweep: brute_force not supported");
                    }
                    const ChannelRealization real = realize(plan, subs, model.signal_power);
                    // Shared noise stream across strategies: paired comparison.
                    Rng noise_rng(derive_seed(cfg.seed, sweep_tag(vi, si, ri, kRoleNoise)), 0);
                    acc[sti][static_cast<std::size_t>(ri)] =
                        accuracy_over(model, features, test_ds.labels, subset, real, noise_rng);
                }
            }
            for (std::size_t sti = 0; sti < cfg.strategies.size(); ++sti) {
                SweepRow row;
                row.snr_db = cfg.snr_points_db[si];
                row.variance_db = cfg.variance_list_db[vi];
                row.strategy = cfg.strategies[sti];
                row.n = cfg.realizations_per_point;
                double mean = 0.0;
                for (double a : acc[sti]) mean += a;
                mean /= static_cast<double>(n_real);
                double var = 0.0;
                for (double a : acc[sti]) var += (a - mean) * (a - mean);
                row.mean_accuracy = mean;
                row.std_accuracy =
                    n_real > 1 ? std::sqrt(var / static_cast<double>(n_real - 1)) : 0.0;
                report.rows.push_back(row);
            }
        }
    }
    return report;
}

void write_sweep_csv(const SweepReport& report, const std::string& path) {
    std::ostringstream out;
    out << "snr_db,variance_db,strategy,mean_accuracy,std_accuracy,n\n";
    for (const SweepRow& row : report.rows)
        out << format_double(row.snr_db) << "," << format_double(row.variance_db) << ","
            << strategy_name(row.strategy) << "," << format_double(row.mean_accuracy) << ","
            << format_double(row.std_accuracy) << "," << row.n << "\n";
    write_file(path, out.str());
}

Pca2dResult pca_2d(const std::vector<std::vector<double>>& vectors) {
    if (vectors.size() < 3) throw std::invalid_argument("pca_2d: need at least 3 vectors");
    const std::size_t n = vectors.size();
    const std::size_t d = vectors.front().size();
    if (d < 2) throw std::invalid_argument("pca_2d: need dimension >= 2");
    for (const auto& v : vectors)
        if (v.size() != d) throw std::invalid_argument("pca_2d: ragged input");

    std::vector<double> mean(d, 0.0);
    for (const auto& v : vectors)
        for (std::size_t j = 0; j < d; ++j) mean[j] += v[j];
    for (double& v : mean) v /= static_cast<double>(n);

    // Population covariance.
    RealMatrix cov(d, d);
    {
        std::vector<double> centered(d);
        for (const auto& v : vectors) {
            for (std::size_t j = 0; j < d; ++j) centered[j] = v[j] - mean[j];
            for (std::size_t a = 0; a < d; ++a)
                for (std::size_t b = a; b < d; ++b) cov(a, b) += centered[a] * centered[b];
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = a; b < d; ++b) {
                cov(a, b) *= inv_n;
                cov(b, a) = cov(a, b);
            }
    }

    constexpr double kTol = 1e-9;
    constexpr int kMaxIters = 1000;
    Pca2dResult res;
    for (int comp = 0; comp < 2; ++comp) {
        Rng rng(0x9CA0 + static_cast<std::uint64_t>(comp), 0);
        std::vector<double> v = rng.normal_vector(d);
        auto orthogonalize = [&](std::vector<double>& u) {
            if (comp == 0) return;
            const auto& prev = res.components[0];
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += u[j] * prev[j];
            for (std::size_t j = 0; j < d; ++j) u[j] -= dot * prev[j];
        };
        auto normalize = [&](std::vector<double>& u) {
            double norm = 0.0;
            for (double x : u) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 0.0)
                for (double& x : u) x /= norm;
            return norm;
        };
        orthogonalize(v);
        if (normalize(v) == 0.0) v.assign(d, 0.0);

        double eigenvalue = 0.0;
        for (int it = 0; it < kMaxIters; ++it) {
            std::vector<double> w = matvec(cov, v);
            orthogonalize(w);
            const double norm = normalize(w);
            if (norm <= std::numeric_limits<double>::min()) {
                v.assign(d, 0.0);
                eigenvalue = 0.0;
                break;
            }
            double drift = 0.0;
            for (std::size_t j = 0; j < d; ++j) drift += (w[j] - v[j]) * (w[j] - v[j]);
            v = std::move(w);
            eigenvalue = norm;
            if (std::sqrt(drift) < kTol) break;
        }
        // Sign convention: largest-magnitude loading positive.
        std::size_t peak = 0;
        for (std::size_t j = 1; j < d; ++j)
            if (std::abs(v[j]) > std::abs(v[peak])) peak = j;
        if (v[peak] < 0.0)
            for (double& x : v) x = -x;
        res.components[comp] = v;
        res.eigenvalues[comp] = eigenvalue;
    }

    res.rank_deficient =
        res.eigenvalues[1] <= 1e-12 * std::max(res.eigenvalues[0], 1e-12);
    res.near_isotropic = !res.rank_deficient && res.eigenvalues[0] > 0.0 &&
                         res.eigenvalues[1] / res.eigenvalues[0] > 0.95;

    res.coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double c0 = 0.0, c1 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double centered = vectors[i][j] - mean[j];
            c0 += centered * res.components[0][j];
            c1 += centered * res.components[1][j];
        }
        res.coords[i] = {c0, c1};
    }
    return res;
}

SilhouetteResult silhouette(const std::vector<std::array<double, 2>>& coords,
                            const std::vector<int>& labels) {
    if (coords.size() != labels.size())
        throw std::invalid_argument("silhouette: coords/labels length mismatch");
    std::vector<std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) throw std::invalid_argument("silhouette: negative label");
        const auto c = static_cast<std::size_t>(labels[i]);
        if (clusters.size() <= c) clusters.resize(c + 1);
        clusters[c].push_back(i);
    }

    SilhouetteResult res;
    std::vector<std::vector<std::size_t>> kept;
    for (const auto& members : clusters) {
        if (members.size() == 1)
            res.excluded += 1;  // singleton class dropped
        else if (members.size() >= 2)
            kept.push_back(members);
    }
    if (kept.size() < 2)
        throw std::invalid_argument("silhouette: need >= 2 classes with >= 2 points");

    auto dist = [&](std::size_t a, std::size_t b) {
        const double dx = coords[a][0] - coords[b][0];
        const double dy = coords[a][1] - coords[b][1];
        return std::sqrt(dx * dx + dy * dy);
    };

    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t ci = 0; ci < kept.size(); ++ci) {
        for (std::size_t i : kept[ci]) {
            double a = 0.0;
            for (std::size_t j : kept[ci])
                if (j != i) a += dist(i, j);
            a /= static_cast<double>(kept[ci].size() - 1);

            double b = std::numeric_limits<double>::infinity();
            for (std::size_t cj = 0; cj < kept.size(); ++cj) {
                if (cj == ci) continue;
                double mean_d = 0.0;
                for (std::size_t j : kept[cj]) mean_d += dist(i, j);
                mean_d /= static_cast<double>(kept[cj].size());
                b = std::min(b, mean_d);
            }
            const double denom = std::max(a, b);
            if (denom == 0.0) {
                res.degenerate = true;  // coincident points, score contributes 0
            } else {
                total += (b - a) / denom;
            }
            ++counted;
        }
    }
    res.score = counted > 0 ? total / static_cast<double>(counted) : 0.0;
    return res;
}

const char* half_name(HalfId h) { return h == HalfId::first ? "first" : "second"; }

const char* channel_condition_name(ChannelCondition c) {
    return c == ChannelCondition::ideal ? "ideal" : "noisy";
}

HalfSplitReport half_split_analysis(const TscModel& model, const RobustnessMask& mask,
                                    const Dataset& ds, double noisy_snr_db,
                                    std::uint64_t seed,
                                    const std::vector<double>* imputation_means) {
    if (mask.size() != model.m)
        throw config_error("half_split: mask length does not match model m");
    if (ds.size() == 0) throw config_error("half_split: dataset is empty");

    const std::size_t m = model.m;
    std::vector<FeatureBlock> features(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) features[i] = encode(model, ds.inputs[i]);

    std::vector<double> means(m, 0.0);
    if (imputation_means) {
        if (imputation_means->size() != m)
            throw config_error("half_split: imputation means length must equal m");
        means = *imputation_means;
    } else {
        for (const auto& z : features)
            for (std::size_t k = 0; k < m; ++k) means[k] += z[k];
        for (double& v : means) v /= static_cast<double>(ds.size());
    }

    HalfSplitReport report;
    report.noisy_snr_db = noisy_snr_db;
    report.seed = seed;
    report.labels = ds.labels;
    report.unit_order = rank_units(mask);
    const std::size_t first_count = (m + 1) / 2;

    const double noise_std = snr_to_noise_std(noisy_snr_db, model.signal_power);

    for (HalfId half : {HalfId::first, HalfId::second}) {
        std::vector<std::size_t> retained(
            half == HalfId::first ? report.unit_order.begin()
                                  : report.unit_order.begin() + first_count,
            half == HalfId::first ? report.unit_order.begin() + first_count
                                  : report.unit_order.end());
        std::sort(retained.begin(), retained.end());

        for (ChannelCondition cond : {ChannelCondition::ideal, ChannelCondition::noisy}) {
            Rng rng(seed, halfsplit_tag(half, cond));
            HalfSplitCondition out;
            out.half = half;
            out.channel = cond;
            std::vector<std::vector<double>> retained_vectors(ds.size());
            std::size_t correct = 0;
            std::vector<double> z_in(m);
            for (std::size_t i = 0; i < ds.size(); ++i) {
                z_in = means;
                auto& sub = retained_vectors[i];
                sub.resize(retained.size());
                for (std::size_t p = 0; p < retained.size(); ++p) {
                    double v = features[i][retained[p]];
                    if (cond == ChannelCondition::noisy) v += noise_std * rng.next_normal();
                    z_in[retained[p]] = v;
                    sub[p] = v;
                }
                if (decode(model, z_in).predicted == ds.labels[i]) ++correct;
            }
            out.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
            const Pca2dResult pca = pca_2d(retained_vectors);
            out.coords = pca.coords;
            const SilhouetteResult sil = silhouette(pca.coords, ds.labels);
            out.silhouette_score = sil.score;
            out.silhouette_degenerate = sil.degenerate || pca.rank_deficient;
            report.conditions.push_back(std::move(out));
        }
    }
    return report;
}

void write_halfsplit_json(const HalfSplitReport& report, const std::string& path) {
    nlohmann::json j;
    j["noisy_snr_db"] = report.noisy_snr_db;
    j["seed"] = report.seed;
    j["unit_order"] = report.unit_order;
    j["conditions"] = nlohmann::json::array();
    for (const auto& cond : report.conditions) {
        nlohmann::json c;
        c["half"] = half_name(cond.half);
        c["channel"] = channel_condition_name(cond.channel);
        c["accuracy"] = cond.accuracy;
        c["silhouette"] = cond.silhouette_score;
        c["silhouette_degenerate"] = cond.silhouette_degenerate;
        j["conditions"].push_back(c);
    }
    write_file(path, j.dump(2) + "\n");
}

void write_halfsplit_coords_csv(const HalfSplitReport& report, const std::string& path) {
    std::ostringstream out;
    out << "half,channel,class,pc1,pc2\n";
    for (const auto& cond : report.conditions)
        for (std::size_t i = 0; i < cond.coords.size(); ++i)
            out << half_name(cond.half) << "," << channel_condition_name(cond.channel) << ","
                << report.labels[i] << "," << format_double(cond.coords[i][0]) << ","
                << format_double(cond.coords[i][1]) << "\n";
    write_file(path, out.str());
}

}  // namespace semcom
