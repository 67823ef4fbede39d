#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "semcom/dataset.hpp"
#include "semcom/transceiver.hpp"

namespace semcom {

// Sign convention for the weighted KL term in the bound loss.
// paper_literal subtracts it (loss = CE - beta*KL); well_posed adds it.
enum class KlSign { paper_literal, well_posed };

// per_sample optimizes one sigma per analysis sample and aggregates;
// shared optimizes a single sigma against the whole analysis set.
enum class SigmaMode { per_sample, shared };

struct IbConfig {
    double beta = 0.3;
    double lr = 0.05;
    int iters = 100;
    int noise_draws = 8;
    double sigma_pre_clamp_lo = -10.0;  // bounds on the pre-softplus parameter
    double sigma_pre_clamp_hi = 10.0;
    KlSign kl_sign = KlSign::paper_literal;
    double delta_floor = 1e-6;
    SigmaMode mode = SigmaMode::per_sample;
    std::size_t analysis_samples = 0;  // 0 = whole analysis set
    std::uint64_t seed = 1;

    void validate() const;
};

// Per-unit inherent feature dispersion and its squared maximum R.
struct DeltaProfile {
    std::vector<double> delta;
    double max_delta_sq = 0.0;
};

// Optimized noise stds for one sample, with the per-iteration loss trace.
struct SigmaResult {
    std::vector<double> sigma;
    std::vector<double> loss_trace;
    std::size_t sample_index = 0;
};

struct RobustnessMask {
    std::vector<double> r;              // normalized scores, sum = 1
    std::vector<double> sigma_mean_sq;  // mean over samples of sigma_k^2
    std::vector<bool> robust_flags;     // sigma_mean_sq_k > R
    DeltaProfile delta_profile;
    std::size_t num_samples = 0;
    // provenance, carried into the mask file
    double beta = 0.0;
    KlSign kl_sign = KlSign::paper_literal;
    std::uint64_t seed = 0;

    std::size_t size() const { return r.size(); }
};

// delta_k = population std of encode(model, x)_k over the dataset, floored.
DeltaProfile estimate_delta(const TscModel& model, const Dataset& ds, double delta_floor);

// Closed-form summand of the bound's KL term: 1/2 (s^2/d^2 + ln(d^2/s^2) - 1).
double kl_gaussian_unit(double sigma, double delta);
double kl_gaussian_sum(std::span<const double> sigma, std::span<const double> delta);

struct IbLoss {
    double loss = 0.0;
    double task_term = 0.0;  // mean cross-entropy over the noise draws
    double kl_term = 0.0;    // the 1/2-sum, before the beta weighting
    std::vector<double> dloss_dsigma;
};

// Bound loss at fixed sigma: the task term is estimated over noise_draws
// eps draws from rng, the KL term is closed-form.
IbLoss ib_loss_and_grad(const TscModel& model, const FeatureBlock& z, int label,
                        std::span<const double> sigma, const DeltaProfile& delta, double beta,
                        KlSign kl_sign, int noise_draws, Rng& rng);

// Same loss with caller-supplied eps (noise_draws x m, row-major); keeps the
// draws frozen across evaluations for finite-difference checks.
IbLoss ib_loss_and_grad_fixed_eps(const TscModel& model, const FeatureBlock& z, int label,
                                  std::span<const double> sigma, const DeltaProfile& delta,
                                  double beta, KlSign kl_sign,
                                  std::span<const double> eps);

// Gradient descent on the pre-softplus parameter, sigma = softplus(rho),
// rho initialized to 0 and clamped to the configured bounds each step.
// Deterministic given (cfg.seed, sample_index); each sample owns the rng
// stream derived from that pair, so calls may run in parallel across samples
// against the shared frozen model.
SigmaResult optimize_sigma_for_sample(const TscModel& model, std::span<const double> x,
                                      int label, const DeltaProfile& delta,
                                      const IbConfig& cfg, std::size_t sample_index);

// Shared-sigma variant: one sigma, gradients averaged over all samples.
SigmaResult optimize_sigma_shared(const TscModel& model, const Dataset& ds,
                                  const DeltaProfile& delta, const IbConfig& cfg);

// r_k = sum_i sigma_k^i / sum_j sum_l sigma_l^j
RobustnessMask compute_mask(const std::vector<SigmaResult>& sigma_results,
                            const DeltaProfile& delta);

// Unit indices sorted by r descending, ties to the lower index.
std::vector<std::size_t> rank_units(const RobustnessMask& mask);

// Whole pipeline: delta estimation, per-sample (or shared) optimization over
// the analysis set, aggregation.
RobustnessMask generate_mask(const TscModel& model, const Dataset& ds, const IbConfig& cfg);

void write_mask_json(const RobustnessMask& mask, const std::string& path);
RobustnessMask read_mask_json(const std::string& path);

}  // namespace semcom
