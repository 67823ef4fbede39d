#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "semcom/errors.hpp"
#include "semcom/ib_mask.hpp"
#include "semcom/serialize.hpp"
#include "semcom/transceiver.hpp"

using namespace semcom;
using oracle::TempDir;

namespace {

// Identity encoder (d = m) plus a caller-supplied linear decoder.
TscModel probe_model(std::size_t m, const RealMatrix& decoder_w,
                     double signal_power = 1.0) {
    NetworkSpec es;
    es.layer_dims = {m, m};
    es.head = OutputHead::feature;
    Network enc;
    enc.spec = es;
    RealMatrix w(m, m);
    for (std::size_t i = 0; i < m; ++i) w(i, i) = 1.0;
    enc.weights.push_back(w);
    enc.biases.emplace_back(m, 0.0);

    NetworkSpec ds;
    ds.layer_dims = {m, decoder_w.rows};
    Network dec;
    dec.spec = ds;
    dec.weights.push_back(decoder_w);
    dec.biases.emplace_back(decoder_w.rows, 0.0);
    return TscModel::from_parts(std::move(enc), std::move(dec), signal_power);
}

// Two-class decoder that reads only unit 0.
TscModel planted_model(std::size_t m, double gain = 2.0) {
    RealMatrix w(2, m);
    w(0, 0) = gain;
    w(1, 0) = -gain;
    return probe_model(m, w);
}

Dataset planted_dataset(std::size_t m, std::size_t n, std::uint64_t seed) {
    Dataset ds;
    ds.num_classes = 2;
    ds.name = "planted";
    Rng rng(seed, 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> x(m);
        const int label = static_cast<int>(i % 2);
        x[0] = label == 0 ? 1.0 : -1.0;
        for (std::size_t k = 1; k < m; ++k) x[k] = rng.next_normal();
        ds.inputs.push_back(std::move(x));
        ds.labels.push_back(label);
    }
    return ds;
}

}  // namespace

TEST_CASE("estimate_delta: zero-variance features floor out") {
    const TscModel model = planted_model(3);
    Dataset ds;
    ds.num_classes = 2;
    ds.inputs = {{1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}};
    ds.labels = {0, 1};
    const DeltaProfile profile = estimate_delta(model, ds, 1e-6);
    for (double d : profile.delta) CHECK(d == 1e-6);
    CHECK(profile.max_delta_sq == doctest::Approx(1e-12).epsilon(1e-12));
}

TEST_CASE("estimate_delta: hand-computed population std") {
    const TscModel model = planted_model(2);
    Dataset ds;
    ds.num_classes = 2;
    ds.inputs = {{1.0, 3.0}, {3.0, 3.0}};
    ds.labels = {0, 1};
    const DeltaProfile profile = estimate_delta(model, ds, 1e-6);
    CHECK(profile.delta[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(profile.delta[1] == 1e-6);
    CHECK(profile.max_delta_sq == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("estimate_delta: scale equivariance through an identity encoder") {
    const TscModel model = planted_model(3);
    Dataset ds;
    ds.num_classes = 2;
    Rng rng(4, 0);
    for (int i = 0; i < 50; ++i) {
        ds.inputs.push_back(rng.normal_vector(3));
        ds.labels.push_back(i % 2);
    }
    const DeltaProfile base = estimate_delta(model, ds, 1e-9);
    const double c = 2.5;
    Dataset scaled = ds;
    for (auto& x : scaled.inputs)
        for (double& v : x) v *= c;
    const DeltaProfile after = estimate_delta(model, scaled, 1e-9);
    for (std::size_t k = 0; k < 3; ++k)
        CHECK(after.delta[k] == doctest::Approx(c * base.delta[k]).epsilon(1e-9));
    CHECK(after.max_delta_sq == doctest::Approx(c * c * base.max_delta_sq).epsilon(1e-9));
}

TEST_CASE("estimate_delta: empty dataset rejected") {
    const TscModel model = planted_model(2);
    Dataset ds;
    ds.num_classes = 2;
    CHECK_THROWS_AS(estimate_delta(model, ds, 1e-6), config_error);
}

TEST_CASE("kl summand: zero exactly at sigma = delta") {
    for (double d : {1e-4, 0.3, 1.0, 7.5}) CHECK(std::abs(kl_gaussian_unit(d, d)) < 1e-12);
}

TEST_CASE("kl summand: closed form at sigma = c * delta") {
    for (double c : {0.5, 2.0, 4.0}) {
        const double want = 0.5 * (c * c + std::log(1.0 / (c * c)) - 1.0);
        for (double d : {0.2, 1.0, 3.0})
            CHECK(kl_gaussian_unit(c * d, d) == doctest::Approx(want).epsilon(1e-12));
    }
    // single unit, sigma = 2 delta: 1/2 (4 + ln(1/4) - 1)
    CHECK(kl_gaussian_unit(2.0, 1.0) == doctest::Approx(0.806853).epsilon(1e-6));
}

TEST_CASE("kl summand: positive away from sigma = delta") {
    for (double ratio : {0.1, 0.5, 0.9, 1.1, 2.0, 10.0}) {
        if (ratio == 1.0) continue;
        CHECK(kl_gaussian_unit(ratio * 0.7, 0.7) > 0.0);
    }
    CHECK_THROWS_AS(kl_gaussian_unit(0.0, 1.0), std::domain_error);
    CHECK_THROWS_AS(kl_gaussian_unit(1.0, -1.0), std::domain_error);
}

TEST_CASE("ib loss: sigma = delta reduces to the mean cross-entropy") {
    const TscModel model = planted_model(3);
    DeltaProfile delta;
    delta.delta = {0.4, 0.7, 1.1};
    delta.max_delta_sq = 1.21;
    const FeatureBlock z = {0.5, -0.2, 0.1};
    Rng rng(3, 0);
    const IbLoss res = ib_loss_and_grad(model, z, 0, delta.delta, delta, 0.8,
                                        KlSign::paper_literal, 16, rng);
    CHECK(res.kl_term < 1e-12);
    CHECK(res.loss == doctest::Approx(res.task_term).epsilon(1e-12));
}

TEST_CASE("ib loss: gradient matches finite differences with frozen draws") {
    Rng wrng(21, 0);
    RealMatrix w(3, 4);
    for (double& v : w.data) v = wrng.next_normal();
    const TscModel model = probe_model(4, w);
    DeltaProfile delta;
    delta.delta = {0.5, 1.0, 0.8, 1.5};
    delta.max_delta_sq = 2.25;
    const FeatureBlock z = {0.3, -0.6, 0.2, 0.9};
    std::vector<double> sigma = {0.7, 0.4, 1.2, 0.9};
    Rng erng(5, 0);
    const std::vector<double> eps = erng.normal_vector(8 * 4);

    for (KlSign sign : {KlSign::paper_literal, KlSign::well_posed}) {
        const IbLoss res =
            ib_loss_and_grad_fixed_eps(model, z, 1, sigma, delta, 0.3, sign, eps);
        for (std::size_t k = 0; k < 4; ++k) {
            const double fd = oracle::central_diff(
                [&](double v) {
                    std::vector<double> probe = sigma;
                    probe[k] = v;
                    return ib_loss_and_grad_fixed_eps(model, z, 1, probe, delta, 0.3, sign,
                                                      eps)
                        .loss;
                },
                sigma[k]);
            CHECK(oracle::rel_err(res.dloss_dsigma[k], fd) < 1e-4);
        }
    }
}

TEST_CASE("ib loss: domain errors on non-positive sigma or delta") {
    const TscModel model = planted_model(2);
    DeltaProfile delta;
    delta.delta = {1.0, 1.0};
    delta.max_delta_sq = 1.0;
    Rng rng(1, 0);
    CHECK_THROWS_AS(ib_loss_and_grad(model, {0.1, 0.2}, 0, std::vector<double>{0.0, 1.0},
                                     delta, 0.3, KlSign::paper_literal, 4, rng),
                    std::domain_error);
    delta.delta = {1.0, 0.0};
    CHECK_THROWS_AS(ib_loss_and_grad(model, {0.1, 0.2}, 0, std::vector<double>{1.0, 1.0},
                                     delta, 0.3, KlSign::paper_literal, 4, rng),
                    std::domain_error);
}

TEST_CASE("optimize_sigma: zero iterations returns softplus(0)") {
    const TscModel model = planted_model(4);
    const Dataset ds = planted_dataset(4, 2, 1);
    const DeltaProfile delta = estimate_delta(model, ds, 1e-6);
    IbConfig cfg;
    cfg.iters = 0;
    const SigmaResult res =
        optimize_sigma_for_sample(model, ds.inputs[0], ds.labels[0], delta, cfg, 0);
    CHECK(res.loss_trace.empty());
    for (double s : res.sigma)
        CHECK(s == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("optimize_sigma: planted two-unit probe drives the label unit lower") {
    const TscModel model = planted_model(2);
    const Dataset ds = planted_dataset(2, 8, 3);
    const DeltaProfile delta = estimate_delta(model, ds, 1e-6);
    IbConfig cfg;  // defaults: paper_literal
    int wins = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const SigmaResult res =
            optimize_sigma_for_sample(model, ds.inputs[i], ds.labels[i], delta, cfg, i);
        if (res.sigma[0] < res.sigma[1]) ++wins;
    }
    CHECK(wins >= 7);
}

TEST_CASE("optimize_sigma: with beta 0 the expected task loss never grows") {
    Rng wrng(31, 0);
    RealMatrix w(3, 4);
    for (double& v : w.data) v = wrng.next_normal();
    const TscModel model = probe_model(4, w);
    Dataset ds;
    ds.num_classes = 3;
    Rng xrng(32, 0);
    for (int i = 0; i < 4; ++i) {
        ds.inputs.push_back(xrng.normal_vector(4));
        ds.labels.push_back(i % 3);
    }
    const DeltaProfile delta = estimate_delta(model, ds, 1e-6);

    auto expected_ce = [&](const FeatureBlock& z, int label,
                           const std::vector<double>& sigma, std::uint64_t seed) {
        Rng rng(seed, 9);
        const std::vector<double> eps = rng.normal_vector(200 * 4);
        return ib_loss_and_grad_fixed_eps(model, z, label, sigma, delta, 0.0,
                                          KlSign::paper_literal, eps)
            .task_term;
    };

    int violations = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        IbConfig cfg;
        cfg.beta = 0.0;
        cfg.seed = seed;
        const std::size_t i = seed % ds.size();
        const FeatureBlock z = encode(model, ds.inputs[i]);
        const std::vector<double> init(4, std::log(2.0));
        const SigmaResult res =
            optimize_sigma_for_sample(model, ds.inputs[i], ds.labels[i], delta, cfg, i);
        const double before = expected_ce(z, ds.labels[i], init, seed);
        const double after = expected_ce(z, ds.labels[i], res.sigma, seed);
        if (after > before + 0.05) ++violations;
    }
    CHECK(violations == 0);
}

TEST_CASE("optimize_sigma: deterministic in (seed, sample_index)") {
    const TscModel model = planted_model(3);
    const Dataset ds = planted_dataset(3, 2, 5);
    const DeltaProfile delta = estimate_delta(model, ds, 1e-6);
    IbConfig cfg;
    cfg.iters = 20;
    const SigmaResult a =
        optimize_sigma_for_sample(model, ds.inputs[0], ds.labels[0], delta, cfg, 0);
    const SigmaResult b =
        optimize_sigma_for_sample(model, ds.inputs[0], ds.labels[0], delta, cfg, 0);
    CHECK(a.sigma == b.sigma);
    CHECK(a.loss_trace == b.loss_trace);
    const SigmaResult c =
        optimize_sigma_for_sample(model, ds.inputs[0], ds.labels[0], delta, cfg, 1);
    CHECK(a.sigma != c.sigma);  // different stream
}

TEST_CASE("compute_mask: hand example") {
    DeltaProfile delta;
    delta.delta = {1.0, 1.0};
    delta.max_delta_sq = 1.0;
    SigmaResult s1, s2;
    s1.sigma = {1.0, 3.0};
    s2.sigma = {1.0, 1.0};
    const RobustnessMask mask = compute_mask({s1, s2}, delta);
    CHECK(mask.r[0] == 1.0 / 3.0);
    CHECK(mask.r[1] == 2.0 / 3.0);
    CHECK(mask.sigma_mean_sq[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(mask.sigma_mean_sq[1] == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(mask.num_samples == 2);
    CHECK(mask.robust_flags[1] == true);   // 5 > 1
    CHECK(mask.robust_flags[0] == false);  // 1 == R, not strictly greater
}

TEST_CASE("compute_mask: uniform sigmas give uniform scores") {
    DeltaProfile delta;
    delta.delta = {1.0, 1.0, 1.0, 1.0};
    delta.max_delta_sq = 1.0;
    SigmaResult s;
    s.sigma = {0.7, 0.7, 0.7, 0.7};
    const RobustnessMask mask = compute_mask({s}, delta);
    for (double r : mask.r) CHECK(r == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("compute_mask: normalization property on random inputs") {
    Rng rng(17, 0);
    for (int t = 0; t < 50; ++t) {
        const std::size_t m = 2 + t % 9;
        DeltaProfile delta;
        delta.delta.assign(m, 1.0);
        delta.max_delta_sq = 1.0;
        std::vector<SigmaResult> results(1 + t % 5);
        for (auto& res : results) {
            res.sigma.resize(m);
            for (double& v : res.sigma) v = 0.01 + std::abs(rng.next_normal());
        }
        const RobustnessMask mask = compute_mask(results, delta);
        double sum = 0.0;
        for (double r : mask.r) {
            CHECK(r >= 0.0);
            sum += r;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("rank_units: ordering and tie-breaks") {
    RobustnessMask mask;
    mask.r = {0.5, 0.2, 0.3};
    CHECK(rank_units(mask) == std::vector<std::size_t>{0, 2, 1});
    mask.r = {0.25, 0.25, 0.25, 0.25};
    CHECK(rank_units(mask) == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("rank_units: top half carries more total score for distinct values") {
    Rng rng(23, 0);
    for (int t = 0; t < 100; ++t) {
        const std::size_t m = 2 + t % 9;
        RobustnessMask mask;
        mask.r.resize(m);
        double total = 0.0;
        for (double& v : mask.r) {
            v = 0.01 + std::abs(rng.next_normal());
            total += v;
        }
        for (double& v : mask.r) v /= total;
        const auto order = rank_units(mask);
        const std::size_t half = (m + 1) / 2;
        double first = 0.0, second = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            (i < half ? first : second) += mask.r[order[i]];
        CHECK(first > second);
    }
}

TEST_CASE("permutation equivariance through the fixed-eps surface") {
    Rng wrng(41, 0);
    RealMatrix w(3, 4);
    for (double& v : w.data) v = wrng.next_normal();
    const TscModel model = probe_model(4, w);

    const std::vector<std::size_t> perm = {2, 0, 3, 1};  // new position of old unit
    RealMatrix wp(3, 4);
    for (std::size_t row = 0; row < 3; ++row)
        for (std::size_t k = 0; k < 4; ++k) wp(row, perm[k]) = w(row, k);
    const TscModel permuted = probe_model(4, wp);

    DeltaProfile delta, delta_p;
    delta.delta = {0.5, 1.0, 0.8, 1.5};
    delta_p.delta.resize(4);
    for (std::size_t k = 0; k < 4; ++k) delta_p.delta[perm[k]] = delta.delta[k];
    delta.max_delta_sq = delta_p.max_delta_sq = 2.25;

    const FeatureBlock z = {0.3, -0.6, 0.2, 0.9};
    FeatureBlock z_p(4);
    for (std::size_t k = 0; k < 4; ++k) z_p[perm[k]] = z[k];
    std::vector<double> sigma = {0.7, 0.4, 1.2, 0.9}, sigma_p(4);
    for (std::size_t k = 0; k < 4; ++k) sigma_p[perm[k]] = sigma[k];

    Rng erng(6, 0);
    std::vector<double> eps = erng.normal_vector(8 * 4), eps_p(8 * 4);
    for (std::size_t d = 0; d < 8; ++d)
        for (std::size_t k = 0; k < 4; ++k) eps_p[d * 4 + perm[k]] = eps[d * 4 + k];

    const IbLoss a = ib_loss_and_grad_fixed_eps(model, z, 1, sigma, delta, 0.3,
                                                KlSign::paper_literal, eps);
    const IbLoss b = ib_loss_and_grad_fixed_eps(permuted, z_p, 1, sigma_p, delta_p, 0.3,
                                                KlSign::paper_literal, eps_p);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
    for (std::size_t k = 0; k < 4; ++k)
        CHECK(a.dloss_dsigma[k] == doctest::Approx(b.dloss_dsigma[perm[k]]).epsilon(1e-10));

    // compute_mask and rank_units permute consistently as well.
    SigmaResult ra, rb;
    ra.sigma = sigma;
    rb.sigma = sigma_p;
    const RobustnessMask ma = compute_mask({ra}, delta);
    const RobustnessMask mb = compute_mask({rb}, delta_p);
    for (std::size_t k = 0; k < 4; ++k)
        CHECK(ma.r[k] == doctest::Approx(mb.r[perm[k]]).epsilon(1e-15));
}

TEST_CASE("generate_mask: deterministic and normalized") {
    const TscModel model = planted_model(4);
    const Dataset ds = planted_dataset(4, 10, 7);
    IbConfig cfg;
    cfg.iters = 10;
    const RobustnessMask a = generate_mask(model, ds, cfg);
    const RobustnessMask b = generate_mask(model, ds, cfg);
    CHECK(a.r == b.r);
    CHECK(a.sigma_mean_sq == b.sigma_mean_sq);
    double sum = std::accumulate(a.r.begin(), a.r.end(), 0.0);
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    CHECK(a.num_samples == 10);
}

TEST_CASE("generate_mask: shared-sigma mode") {
    const TscModel model = planted_model(3);
    const Dataset ds = planted_dataset(3, 6, 9);
    IbConfig cfg;
    cfg.iters = 10;
    cfg.mode = SigmaMode::shared;
    const RobustnessMask mask = generate_mask(model, ds, cfg);
    CHECK(mask.num_samples == 1);
    double sum = std::accumulate(mask.r.begin(), mask.r.end(), 0.0);
    CHECK(std::abs(sum - 1.0) <= 1e-9);
}

TEST_CASE("mask json: round trip and validation") {
    TempDir tmp;
    const TscModel model = planted_model(3);
    const Dataset ds = planted_dataset(3, 4, 2);
    IbConfig cfg;
    cfg.iters = 5;
    const RobustnessMask mask = generate_mask(model, ds, cfg);
    write_mask_json(mask, tmp.file("mask.json"));
    const RobustnessMask back = read_mask_json(tmp.file("mask.json"));
    CHECK(back.r == mask.r);
    CHECK(back.sigma_mean_sq == mask.sigma_mean_sq);
    CHECK(back.delta_profile.delta == mask.delta_profile.delta);
    CHECK(back.delta_profile.max_delta_sq == mask.delta_profile.max_delta_sq);
    CHECK(back.num_samples == mask.num_samples);
    CHECK(back.kl_sign == mask.kl_sign);

    // A mask whose scores do not sum to 1 is rejected on import.
    std::string text = read_file(tmp.file("mask.json"));
    const std::string needle = "\"r\": [";
    const auto pos = text.find(needle);
    REQUIRE(pos != std::string::npos);
    text.replace(pos + needle.size(), 0, "0.5, ");
    write_file(tmp.file("bad.json"), text);
    CHECK_THROWS_AS(read_mask_json(tmp.file("bad.json")), artifact_error);
}
