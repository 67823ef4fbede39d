#include "semcom/transceiver.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "semcom/channel.hpp"
#include "semcom/errors.hpp"
#include "semcom/serialize.hpp"

namespace semcom {

namespace {

constexpr char kModelMagic[4] = {'S', 'C', 'T', 'M'};
constexpr std::uint32_t kModelFormatVersion = 1;

constexpr std::uint64_t kEncoderInitStream = 0x656e63ull;
constexpr std::uint64_t kDecoderInitStream = 0x646563ull;
constexpr std::uint64_t kShuffleStream = 0x73687566ull;
constexpr std::uint64_t kTrainNoiseStream = 0x74726e6eull;

const char* activation_name(Activation a) {
    return a == Activation::relu ? "relu" : "identity";
}

Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw artifact_error("model: unknown activation '" + s + "'");
}

nlohmann::json spec_to_json(const NetworkSpec& spec) {
    nlohmann::json j;
    j["layer_dims"] = spec.layer_dims;
    std::vector<std::string> acts;
    for (Activation a : spec.hidden_activations) acts.push_back(activation_name(a));
    j["activations"] = acts;
    j["head"] = spec.head == OutputHead::feature ? "feature" : "linear_logits";
    return j;
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
    NetworkSpec spec;
    spec.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    for (const auto& s : j.at("activations"))
        spec.hidden_activations.push_back(activation_from_name(s.get<std::string>()));
    spec.head = j.at("head").get<std::string>() == "feature" ? OutputHead::feature
                                                             : OutputHead::linear_logits;
    spec.validate();
    return spec;
}

void append_network_params(std::vector<unsigned char>& out, const Network& net) {
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        for (double v : net.weights[l].data) append_f64_le(out, v);
        for (double v : net.biases[l]) append_f64_le(out, v);
    }
}

std::size_t consume_network_params(Network& net, const unsigned char* payload,
                                   std::size_t offset) {
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        for (double& v : net.weights[l].data) {
            v = read_f64_le(payload + offset);
            offset += 8;
        }
        for (double& v : net.biases[l]) {
            v = read_f64_le(payload + offset);
            offset += 8;
        }
    }
    return offset;
}

Network network_with_zero_params(const NetworkSpec& spec) {
    Network net;
    net.spec = spec;
    for (std::size_t l = 0; l + 1 < spec.layer_dims.size(); ++l) {
        net.weights.emplace_back(spec.layer_dims[l + 1], spec.layer_dims[l]);
        net.biases.emplace_back(spec.layer_dims[l + 1], 0.0);
    }
    return net;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 0) throw config_error("transceiver.epochs must be >= 0");
    if (batch_size < 1) throw config_error("transceiver.batch_size must be >= 1");
    if (!(lr > 0.0)) throw config_error("transceiver.lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw config_error("transceiver.momentum in [0,1)");
    if (m < 1) throw config_error("transceiver.m must be >= 1");
}

TscModel TscModel::from_parts(Network encoder, Network decoder, double signal_power,
                              double train_snr_db, std::uint64_t seed) {
    if (encoder.output_dim() != decoder.input_dim())
        throw config_error("model: encoder output dim must match decoder input dim");
    if (!(signal_power > 0.0)) throw config_error("model: signal_power must be > 0");
    TscModel model;
    model.m = encoder.output_dim();
    model.encoder = std::move(encoder);
    model.decoder = std::move(decoder);
    model.encoder.freeze();
    model.decoder.freeze();
    model.signal_power = signal_power;
    model.train_snr_db = train_snr_db;
    model.seed = seed;
    model.frozen = true;
    return model;
}

TscModel train(const Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    ds.validate();
    if (ds.size() == 0) throw config_error("train: dataset is empty");
    if (ds.num_classes < 2) throw config_error("train: need at least 2 classes");

    const NetworkSpec enc_spec =
        make_mlp_spec(ds.dim(), cfg.encoder_hidden, cfg.m, OutputHead::feature);
    const NetworkSpec dec_spec = make_mlp_spec(cfg.m, cfg.decoder_hidden,
                                               static_cast<std::size_t>(ds.num_classes),
                                               OutputHead::linear_logits);
    Rng enc_rng(cfg.seed, kEncoderInitStream);
    Rng dec_rng(cfg.seed, kDecoderInitStream);
    Network encoder = Network::init(enc_spec, enc_rng);
    Network decoder = Network::init(dec_spec, dec_rng);
    SgdState enc_state = SgdState::zeros_like(encoder);
    SgdState dec_state = SgdState::zeros_like(decoder);

    Rng shuffle_rng(cfg.seed, kShuffleStream);
    Rng noise_rng(cfg.seed, kTrainNoiseStream);
    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    // Running signal-power estimate: fast EMA so the noise calibration tracks
    // the current feature scale instead of lagging behind it.
    constexpr double kPowerEmaAlpha = 0.5;
    double power_est = 0.0;
    bool power_seeded = false;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, order.size());
            const std::size_t n = stop - start;

            std::vector<ForwardCache> enc_caches(n);
            std::vector<std::vector<double>> features(n);
            double batch_power = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                features[b] = forward(encoder, ds.inputs[order[start + b]], &enc_caches[b]);
                for (double v : features[b]) batch_power += v * v;
            }
            batch_power /= static_cast<double>(n * cfg.m);
            power_est = power_seeded ? (1.0 - kPowerEmaAlpha) * power_est +
                                           kPowerEmaAlpha * batch_power
                                     : batch_power;
            power_seeded = true;
            const double noise_std =
                snr_to_noise_std(cfg.train_snr_db, std::max(power_est, 1e-12));

            GradBundle enc_total = GradBundle::zeros_like(encoder);
            GradBundle dec_total = GradBundle::zeros_like(decoder);
            double batch_loss = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                std::vector<double> z_hat = features[b];
                for (double& v : z_hat) v += noise_std * noise_rng.next_normal();
                ForwardCache dec_cache;
                const std::vector<double> logits = forward(decoder, z_hat, &dec_cache);
                const auto ce = softmax_cross_entropy(
                    logits, static_cast<std::size_t>(ds.labels[order[start + b]]));
                batch_loss += ce.loss;
                GradBundle dec_grads = backward(decoder, dec_cache, ce.dlogits);
                // Additive noise: dL/dz equals dL/dz_hat.
                GradBundle enc_grads = backward(encoder, enc_caches[b], dec_grads.input_grad);
                dec_total.accumulate(dec_grads);
                enc_total.accumulate(enc_grads);
            }
            if (!std::isfinite(batch_loss)) {
                std::ostringstream msg;
                msg << "train: non-finite loss at epoch " << epoch;
                throw divergence_error(msg.str());
            }
            const double inv_n = 1.0 / static_cast<double>(n);
            enc_total.scale(inv_n);
            dec_total.scale(inv_n);
            sgd_step(encoder, enc_total, cfg.lr, cfg.momentum, enc_state);
            sgd_step(decoder, dec_total, cfg.lr, cfg.momentum, dec_state);
        }
    }

    double final_power = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const std::vector<double> z = forward(encoder, ds.inputs[i]);
        for (double v : z) final_power += v * v;
    }
    final_power /= static_cast<double>(ds.size() * cfg.m);
    if (!(final_power > 0.0))
        throw divergence_error("train: encoder collapsed to zero signal power");

    TscModel model = TscModel::from_parts(std::move(encoder), std::move(decoder), final_power,
                                          cfg.train_snr_db, cfg.seed);
    model.dataset_name = ds.name;
    return model;
}

FeatureBlock encode(const TscModel& model, std::span<const double> x) {
    if (!model.frozen) throw std::logic_error("encode: model must be frozen");
    return forward(model.encoder, x);
}

DecodeResult decode(const TscModel& model, std::span<const double> z_hat) {
    if (!model.frozen) throw std::logic_error("decode: model must be frozen");
    if (z_hat.size() != model.m)
        throw std::invalid_argument("decode: feature block length must equal m");
    DecodeResult res;
    res.logits = forward(model.decoder, z_hat);
    res.predicted = static_cast<int>(
        std::max_element(res.logits.begin(), res.logits.end()) - res.logits.begin());
    return res;
}

void save_model(const TscModel& model, const std::string& path) {
    if (!model.frozen) throw std::logic_error("save_model: model must be frozen");
    nlohmann::json header;
    header["format_version"] = kModelFormatVersion;
    header["m"] = model.m;
    header["train_snr_db"] = model.train_snr_db;
    header["signal_power"] = model.signal_power;
    header["seed"] = model.seed;
    header["dataset"] = model.dataset_name;
    header["encoder"] = spec_to_json(model.encoder.spec);
    header["decoder"] = spec_to_json(model.decoder.spec);
    const std::string header_text = header.dump();

    std::vector<unsigned char> payload;
    payload.reserve((model.encoder.param_count() + model.decoder.param_count()) * 8);
    append_network_params(payload, model.encoder);
    append_network_params(payload, model.decoder);

    std::vector<unsigned char> bytes;
    bytes.insert(bytes.end(), kModelMagic, kModelMagic + 4);
    append_u32_le(bytes, kModelFormatVersion);
    append_u32_le(bytes, static_cast<std::uint32_t>(header_text.size()));
    bytes.insert(bytes.end(), header_text.begin(), header_text.end());
    append_u64_le(bytes, payload.size() / 8);
    bytes.insert(bytes.end(), payload.begin(), payload.end());
    append_u64_le(bytes, fnv1a64(payload.data(), payload.size()));

    write_file(path, std::string(bytes.begin(), bytes.end()));
}

TscModel load_model(const std::string& path) {
    const std::string text = read_file(path);
    const auto* bytes = reinterpret_cast<const unsigned char*>(text.data());
    const std::size_t size = text.size();

    if (size < 12 || std::memcmp(bytes, kModelMagic, 4) != 0)
        throw artifact_error("model: bad magic in " + path);
    const std::uint32_t version = read_u32_le(bytes + 4);
    if (version != kModelFormatVersion)
        throw artifact_error("model: unsupported format version in " + path);
    const std::uint32_t header_len = read_u32_le(bytes + 8);
    if (size < 12 + std::size_t(header_len) + 8)
        throw artifact_error("model: truncated header in " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text.substr(12, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw artifact_error(std::string("model: corrupt header: ") + e.what());
    }

    std::size_t off = 12 + header_len;
    const std::uint64_t n_params = read_u64_le(bytes + off);
    off += 8;
    if (size != off + n_params * 8 + 8)
        throw artifact_error("model: truncated or oversized payload in " + path);
    const unsigned char* payload = bytes + off;
    const std::uint64_t stored_checksum = read_u64_le(bytes + off + n_params * 8);
    if (fnv1a64(payload, n_params * 8) != stored_checksum)
        throw artifact_error("model: payload checksum mismatch in " + path);

    TscModel model;
    try {
        model.m = header.at("m").get<std::size_t>();
        model.train_snr_db = header.at("train_snr_db").get<double>();
        model.signal_power = header.at("signal_power").get<double>();
        model.seed = header.at("seed").get<std::uint64_t>();
        model.dataset_name = header.at("dataset").get<std::string>();
        model.encoder = network_with_zero_params(spec_from_json(header.at("encoder")));
        model.decoder = network_with_zero_params(spec_from_json(header.at("decoder")));
    } catch (const nlohmann::json::exception& e) {
        throw artifact_error(std::string("model: corrupt header: ") + e.what());
    }
    if (model.encoder.param_count() + model.decoder.param_count() != n_params)
        throw artifact_error("model: parameter count does not match header in " + path);

    std::size_t consumed = consume_network_params(model.encoder, payload, 0);
    consumed = consume_network_params(model.decoder, payload, consumed);
    (void)consumed;
    model.encoder.freeze();
    model.decoder.freeze();
    model.frozen = true;
    model.encoder.check_consistent();
    model.decoder.check_consistent();
    if (model.encoder.output_dim() != model.m || model.decoder.input_dim() != model.m)
        throw artifact_error("model: m does not match network shapes in " + path);
    return model;
}

double evaluate_accuracy(const TscModel& model, const Dataset& ds,
                         std::span<const double> noise_std_per_unit, Rng& rng) {
    if (!model.frozen) throw std::logic_error("evaluate_accuracy: model must be frozen");
    if (noise_std_per_unit.size() != model.m)
        throw std::invalid_argument("evaluate_accuracy: noise vector length must equal m");
    if (ds.size() == 0) throw config_error("evaluate_accuracy: dataset is empty");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        FeatureBlock z = encode(model, ds.inputs[i]);
        for (std::size_t k = 0; k < z.size(); ++k)
            z[k] += noise_std_per_unit[k] * rng.next_normal();
        if (decode(model, z).predicted == ds.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

double evaluate_accuracy(const TscModel& model, const Dataset& ds, double noise_std, Rng& rng) {
    const std::vector<double> stds(model.m, noise_std);
    return evaluate_accuracy(model, ds, stds, rng);
}

}  // namespace semcom
