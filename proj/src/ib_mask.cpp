#include "semcom/ib_mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "semcom/errors.hpp"
#include "semcom/serialize.hpp"

namespace semcom {

namespace {

constexpr std::uint64_t kSigmaStreamBase = 0x5347ull;  // 'SG'

std::uint64_t sigma_stream(std::size_t sample_index) {
    return (kSigmaStreamBase << 32) | static_cast<std::uint64_t>(sample_index);
}

void check_positive(std::span<const double> sigma, std::span<const double> delta) {
    for (double v : sigma)
        if (!(v > 0.0)) throw std::domain_error("ib loss: sigma must be > 0");
    for (double v : delta)
        if (!(v > 0.0)) throw std::domain_error("ib loss: delta must be > 0");
}

}  // namespace

void IbConfig::validate() const {
    if (beta < 0.0) throw config_error("ib.beta must be >= 0");
    if (!(lr > 0.0)) throw config_error("ib.lr must be > 0");
    if (iters < 0) throw config_error("ib.iters must be >= 0");
    if (noise_draws < 1) throw config_error("ib.noise_draws must be >= 1");
    if (!(delta_floor > 0.0)) throw config_error("ib.delta_floor must be > 0");
    if (!(sigma_pre_clamp_lo < sigma_pre_clamp_hi))
        throw config_error("ib.sigma_pre_clamp bounds must be ordered");
}

DeltaProfile estimate_delta(const TscModel& model, const Dataset& ds, double delta_floor) {
    if (!model.frozen) throw std::logic_error("estimate_delta: model must be frozen");
    if (ds.size() == 0) throw config_error("estimate_delta: dataset is empty");
    if (!(delta_floor > 0.0)) throw config_error("estimate_delta: delta_floor must be > 0");

    const std::size_t m = model.m;
    std::vector<double> mean(m, 0.0), mean_sq(m, 0.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const FeatureBlock z = encode(model, ds.inputs[i]);
        for (std::size_t k = 0; k < m; ++k) {
            mean[k] += z[k];
            mean_sq[k] += z[k] * z[k];
        }
    }
    const double inv_n = 1.0 / static_cast<double>(ds.size());
    DeltaProfile profile;
    profile.delta.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
        mean[k] *= inv_n;
        const double var = std::max(mean_sq[k] * inv_n - mean[k] * mean[k], 0.0);
        profile.delta[k] = std::max(std::sqrt(var), delta_floor);
        profile.max_delta_sq = std::max(profile.max_delta_sq,
                                        profile.delta[k] * profile.delta[k]);
    }
    return profile;
}

double kl_gaussian_unit(double sigma, double delta) {
    if (!(sigma > 0.0) || !(delta > 0.0))
        throw std::domain_error("kl_gaussian_unit: sigma and delta must be > 0");
    const double ratio_sq = (sigma * sigma) / (delta * delta);
    return 0.5 * (ratio_sq - std::log(ratio_sq) - 1.0);
}

double kl_gaussian_sum(std::span<const double> sigma, std::span<const double> delta) {
    if (sigma.size() != delta.size())
        throw std::invalid_argument("kl_gaussian_sum: length mismatch");
    double total = 0.0;
    for (std::size_t k = 0; k < sigma.size(); ++k)
        total += kl_gaussian_unit(sigma[k], delta[k]);
    return total;
}

IbLoss ib_loss_and_grad_fixed_eps(const TscModel& model, const FeatureBlock& z, int label,
                                  std::span<const double> sigma, const DeltaProfile& delta,
                                  double beta, KlSign kl_sign,
                                  std::span<const double> eps) {
    if (!model.frozen) throw std::logic_error("ib loss: model must be frozen");
    const std::size_t m = model.m;
    if (z.size() != m || sigma.size() != m || delta.delta.size() != m)
        throw std::invalid_argument("ib loss: length mismatch against m");
    if (eps.size() == 0 || eps.size() % m != 0)
        throw std::invalid_argument("ib loss: eps must hold draws*m entries");
    check_positive(sigma, delta.delta);

    const std::size_t draws = eps.size() / m;
    IbLoss out;
    out.dloss_dsigma.assign(m, 0.0);
    std::vector<double> z_tilde(m);
    for (std::size_t d = 0; d < draws; ++d) {
        const double* e = eps.data() + d * m;
        for (std::size_t k = 0; k < m; ++k) z_tilde[k] = z[k] + sigma[k] * e[k];
        ForwardCache cache;
        const std::vector<double> logits = forward(model.decoder, z_tilde, &cache);
        const auto ce = softmax_cross_entropy(logits, static_cast<std::size_t>(label));
        out.task_term += ce.loss;
        const GradBundle grads = backward(model.decoder, cache, ce.dlogits);
        for (std::size_t k = 0; k < m; ++k)
            out.dloss_dsigma[k] += grads.input_grad[k] * e[k];
    }
    const double inv_draws = 1.0 / static_cast<double>(draws);
    out.task_term *= inv_draws;
    for (double& g : out.dloss_dsigma) g *= inv_draws;

    out.kl_term = kl_gaussian_sum(sigma, delta.delta);
    const double sign = kl_sign == KlSign::paper_literal ? -1.0 : 1.0;
    out.loss = out.task_term + sign * beta * out.kl_term;
    for (std::size_t k = 0; k < m; ++k) {
        const double dkl = sigma[k] / (delta.delta[k] * delta.delta[k]) - 1.0 / sigma[k];
        out.dloss_dsigma[k] += sign * beta * dkl;
    }
    return out;
}

IbLoss ib_loss_and_grad(const TscModel& model, const FeatureBlock& z, int label,
                        std::span<const double> sigma, const DeltaProfile& delta, double beta,
                        KlSign kl_sign, int noise_draws, Rng& rng) {
    if (noise_draws < 1) throw config_error("ib loss: noise_draws must be >= 1");
    const std::vector<double> eps =
        rng.normal_vector(static_cast<std::size_t>(noise_draws) * model.m);
    return ib_loss_and_grad_fixed_eps(model, z, label, sigma, delta, beta, kl_sign, eps);
}

SigmaResult optimize_sigma_for_sample(const TscModel& model, std::span<const double> x,
                                      int label, const DeltaProfile& delta,
                                      const IbConfig& cfg, std::size_t sample_index) {
    cfg.validate();
    if (!model.frozen) throw std::logic_error("optimize_sigma: model must be frozen");
    const FeatureBlock z = encode(model, x);
    const std::size_t m = model.m;

    Rng rng(cfg.seed, sigma_stream(sample_index));
    std::vector<double> rho(m, 0.0);
    std::vector<double> sigma(m);
    SigmaResult result;
    result.sample_index = sample_index;
    result.loss_trace.reserve(static_cast<std::size_t>(cfg.iters));

    for (int it = 0; it < cfg.iters; ++it) {
        for (std::size_t k = 0; k < m; ++k) sigma[k] = softplus(rho[k]);
        const IbLoss step = ib_loss_and_grad(model, z, label, sigma, delta, cfg.beta,
                                             cfg.kl_sign, cfg.noise_draws, rng);
        if (!std::isfinite(step.loss)) {
            std::ostringstream msg;
            msg << "optimize_sigma: non-finite loss at iteration " << it << " (sample "
                << sample_index << ")";
            throw divergence_error(msg.str());
        }
        result.loss_trace.push_back(step.loss);
        for (std::size_t k = 0; k < m; ++k) {
            rho[k] -= cfg.lr * step.dloss_dsigma[k] * softplus_grad(rho[k]);
            rho[k] = std::clamp(rho[k], cfg.sigma_pre_clamp_lo, cfg.sigma_pre_clamp_hi);
        }
    }
    result.sigma.resize(m);
    for (std::size_t k = 0; k < m; ++k) result.sigma[k] = softplus(rho[k]);
    return result;
}

SigmaResult optimize_sigma_shared(const TscModel& model, const Dataset& ds,
                                  const DeltaProfile& delta, const IbConfig& cfg) {
    cfg.validate();
    if (!model.frozen) throw std::logic_error("optimize_sigma: model must be frozen");
    if (ds.size() == 0) throw config_error("optimize_sigma_shared: dataset is empty");
    const std::size_t m = model.m;

    std::vector<FeatureBlock> features(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) features[i] = encode(model, ds.inputs[i]);

    Rng rng(cfg.seed, sigma_stream(0));
    std::vector<double> rho(m, 0.0);
    std::vector<double> sigma(m);
    SigmaResult result;
    result.sample_index = 0;
    for (int it = 0; it < cfg.iters; ++it) {
        for (std::size_t k = 0; k < m; ++k) sigma[k] = softplus(rho[k]);
        double loss = 0.0;
        std::vector<double> grad(m, 0.0);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const IbLoss step = ib_loss_and_grad(model, features[i], ds.labels[i], sigma,
                                                 delta, cfg.beta, cfg.kl_sign,
                                                 cfg.noise_draws, rng);
            loss += step.loss;
            for (std::size_t k = 0; k < m; ++k) grad[k] += step.dloss_dsigma[k];
        }
        const double inv_n = 1.0 / static_cast<double>(ds.size());
        loss *= inv_n;
        if (!std::isfinite(loss)) {
            std::ostringstream msg;
            msg << "optimize_sigma_shared: non-finite loss at iteration " << it;
            throw divergence_error(msg.str());
        }
        result.loss_trace.push_back(loss);
        for (std::size_t k = 0; k < m; ++k) {
            rho[k] -= cfg.lr * grad[k] * inv_n * softplus_grad(rho[k]);
            rho[k] = std::clamp(rho[k], cfg.sigma_pre_clamp_lo, cfg.sigma_pre_clamp_hi);
        }
    }
    result.sigma.resize(m);
    for (std::size_t k = 0; k < m; ++k) result.sigma[k] = softplus(rho[k]);
    return result;
}

RobustnessMask compute_mask(const std::vector<SigmaResult>& sigma_results,
                            const DeltaProfile& delta) {
    if (sigma_results.empty()) throw config_error("compute_mask: no sigma results");
    const std::size_t m = sigma_results.front().sigma.size();
    for (const auto& res : sigma_results)
        if (res.sigma.size() != m)
            throw std::invalid_argument("compute_mask: inconsistent sigma lengths");
    if (delta.delta.size() != m)
        throw std::invalid_argument("compute_mask: delta length mismatch");

    RobustnessMask mask;
    mask.delta_profile = delta;
    mask.num_samples = sigma_results.size();
    mask.r.assign(m, 0.0);
    mask.sigma_mean_sq.assign(m, 0.0);
    double total = 0.0;
    // Fixed summation order (samples outer, units inner) for determinism.
    for (const auto& res : sigma_results) {
        for (std::size_t k = 0; k < m; ++k) {
            mask.r[k] += res.sigma[k];
            mask.sigma_mean_sq[k] += res.sigma[k] * res.sigma[k];
            total += res.sigma[k];
        }
    }
    const double inv_n = 1.0 / static_cast<double>(sigma_results.size());
    mask.robust_flags.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
        mask.r[k] /= total;
        mask.sigma_mean_sq[k] *= inv_n;
        mask.robust_flags[k] = mask.sigma_mean_sq[k] > delta.max_delta_sq;
    }
    return mask;
}

std::vector<std::size_t> rank_units(const RobustnessMask& mask) {
    std::vector<std::size_t> order(mask.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return mask.r[a] > mask.r[b];
    });
    return order;
}

RobustnessMask generate_mask(const TscModel& model, const Dataset& ds, const IbConfig& cfg) {
    cfg.validate();
    if (ds.size() == 0) throw config_error("generate_mask: dataset is empty");
    const DeltaProfile delta = estimate_delta(model, ds, cfg.delta_floor);

    std::size_t n = ds.size();
    if (cfg.analysis_samples > 0) n = std::min(n, cfg.analysis_samples);

    std::vector<SigmaResult> results;
    if (cfg.mode == SigmaMode::shared) {
        Dataset subset;
        subset.num_classes = ds.num_classes;
        subset.name = ds.name;
        subset.inputs.assign(ds.inputs.begin(), ds.inputs.begin() + n);
        subset.labels.assign(ds.labels.begin(), ds.labels.begin() + n);
        results.push_back(optimize_sigma_shared(model, subset, delta, cfg));
    } else {
        results.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            results.push_back(
                optimize_sigma_for_sample(model, ds.inputs[i], ds.labels[i], delta, cfg, i));
    }
    RobustnessMask mask = compute_mask(results, delta);
    mask.beta = cfg.beta;
    mask.kl_sign = cfg.kl_sign;
    mask.seed = cfg.seed;
    return mask;
}

void write_mask_json(const RobustnessMask& mask, const std::string& path) {
    nlohmann::json j;
    j["m"] = mask.size();
    j["beta"] = mask.beta;
    j["kl_sign"] = mask.kl_sign == KlSign::paper_literal ? "paper_literal" : "well_posed";
    j["delta"] = mask.delta_profile.delta;
    j["R"] = mask.delta_profile.max_delta_sq;
    j["sigma_mean_sq"] = mask.sigma_mean_sq;
    j["r"] = mask.r;
    j["robust_flags"] = mask.robust_flags;
    j["num_samples"] = mask.num_samples;
    j["seed"] = mask.seed;
    write_file(path, j.dump(2) + "\n");
}

RobustnessMask read_mask_json(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw artifact_error(std::string("mask: parse failure: ") + e.what());
    }
    RobustnessMask mask;
    try {
        mask.r = j.at("r").get<std::vector<double>>();
        mask.sigma_mean_sq = j.at("sigma_mean_sq").get<std::vector<double>>();
        mask.robust_flags = j.at("robust_flags").get<std::vector<bool>>();
        mask.delta_profile.delta = j.at("delta").get<std::vector<double>>();
        mask.delta_profile.max_delta_sq = j.at("R").get<double>();
        mask.num_samples = j.at("num_samples").get<std::size_t>();
        mask.beta = j.at("beta").get<double>();
        mask.seed = j.at("seed").get<std::uint64_t>();
        const std::string sign = j.at("kl_sign").get<std::string>();
        if (sign == "paper_literal")
            mask.kl_sign = KlSign::paper_literal;
        else if (sign == "well_posed")
            mask.kl_sign = KlSign::well_posed;
        else
            throw artifact_error("mask: unknown kl_sign '" + sign + "'");
    } catch (const nlohmann::json::exception& e) {
        throw artifact_error(std::string("mask: missing field: ") + e.what());
    }
    const std::size_t m = j.at("m").get<std::size_t>();
    if (mask.r.size() != m || mask.sigma_mean_sq.size() != m ||
        mask.robust_flags.size() != m || mask.delta_profile.delta.size() != m)
        throw artifact_error("mask: field lengths do not match m in " + path);
    double sum = 0.0;
    for (double v : mask.r) {
        if (v < 0.0) throw artifact_error("mask: negative score in " + path);
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw artifact_error("mask: scores do not sum to 1 in " + path);
    return mask;
}

}  // namespace semcom
