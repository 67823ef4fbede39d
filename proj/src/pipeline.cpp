#include "semcom/pipeline.hpp"

#include <filesystem>
#include <sstream>

#include "semcom/errors.hpp"
#include "semcom/serialize.hpp"

namespace semcom {

namespace fs = std::filesystem;

namespace {

// Stage seed tags, all derived from the one global seed.
enum SeedTag : std::uint64_t {
    kTagDataset = 1,
    kTagSplit = 2,
    kTagTrain = 3,
    kTagIb = 4,
    kTagCsi = 5,
    kTagSweep = 6,
    kTagHalf = 7,
};

std::string join(const std::string& dir, const char* name) {
    return (fs::path(dir) / name).string();
}

std::string hex_u64(std::uint64_t v) {
    std::ostringstream out;
    out << "0x" << std::hex << v;
    return out.str();
}

std::string kl_sign_name(KlSign s) {
    return s == KlSign::paper_literal ? "paper_literal" : "well_posed";
}

KlSign kl_sign_from_name(const std::string& s) {
    if (s == "paper_literal") return KlSign::paper_literal;
    if (s == "well_posed") return KlSign::well_posed;
    throw config_error("ib.kl_sign must be 'paper_literal' or 'well_posed'");
}

std::string sigma_mode_name(SigmaMode m) {
    return m == SigmaMode::per_sample ? "per_sample" : "shared";
}

SigmaMode sigma_mode_from_name(const std::string& s) {
    if (s == "per_sample") return SigmaMode::per_sample;
    if (s == "shared") return SigmaMode::shared;
    throw config_error("ib.mode must be 'per_sample' or 'shared'");
}

template <typename T>
void get_if_present(const nlohmann::json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

Dataset load_dataset_artifact(const RunConfig& cfg) {
    const std::string path = join(cfg.out_dir, artifacts::dataset_csv);
    require_artifact(path);
    return read_dataset_csv(path);
}

std::pair<Dataset, Dataset> split_per_config(const Dataset& ds, const RunConfig& cfg) {
    return split(ds, SplitSpec{cfg.dataset.train_fraction, derive_seed(cfg.seed, kTagSplit)});
}

TscModel load_model_artifact(const RunConfig& cfg) {
    const std::string path = join(cfg.out_dir, artifacts::model_bin);
    require_artifact(path);
    return load_model(path);
}

RobustnessMask load_mask_artifact(const RunConfig& cfg) {
    const std::string path = join(cfg.out_dir, artifacts::mask_json);
    require_artifact(path);
    return read_mask_json(path);
}

nlohmann::json base_meta(const RunConfig& cfg, const char* stage,
                         const std::string& artifact_path) {
    nlohmann::json meta;
    meta["stage"] = stage;
    meta["seed"] = cfg.seed;
    meta["config"] = run_config_to_json(cfg);
    meta["artifact"] = fs::path(artifact_path).filename().string();
    meta["artifact_checksum"] = hex_u64(fnv1a64_file(artifact_path));
    return meta;
}

void add_input(nlohmann::json& meta, const RunConfig& cfg, const char* name) {
    meta["inputs"][name] = hex_u64(fnv1a64_file(join(cfg.out_dir, name)));
}

}  // namespace

void DatasetConfig::validate() const {
    if (type != "gaussian_mixture" && type != "idx")
        throw config_error("dataset.type must be 'gaussian_mixture' or 'idx'");
    if (type == "gaussian_mixture") {
        if (num_classes < 2) throw config_error("dataset.num_classes must be >= 2");
        if (dim < 2) throw config_error("dataset.dim must be >= 2");
        if (per_class < 1) throw config_error("dataset.per_class must be >= 1");
        if (!(spread > 0.0)) throw config_error("dataset.spread must be > 0");
    } else {
        if (idx_images.empty() || idx_labels.empty())
            throw config_error("dataset.idx_images and dataset.idx_labels are required");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw config_error("dataset.train_fraction must be in (0,1)");
}

void ChannelConfig::validate() const {
    if (subchannels < 1) throw config_error("channel.subchannels must be >= 1");
    if (capacity < 1) throw config_error("channel.capacity must be >= 1");
    if (variance_db < 0.0) throw config_error("channel.variance_db must be >= 0");
}

void RunConfig::apply_paper_scale() {
    transceiver.m = 512;
    channel.subchannels = 256;
    channel.capacity = 2;
    ib.beta = 0.3;
}

void RunConfig::validate() const {
    dataset.validate();
    transceiver.validate();
    ib.validate();
    channel.validate();
    sweep.validate();
    if (channel.subchannels * channel.capacity < transceiver.m)
        throw config_error("channel geometry cannot carry transceiver.m feature units");
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    get_if_present(j, "seed", cfg.seed);
    get_if_present(j, "out_dir", cfg.out_dir);
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        get_if_present(d, "type", cfg.dataset.type);
        get_if_present(d, "num_classes", cfg.dataset.num_classes);
        get_if_present(d, "dim", cfg.dataset.dim);
        get_if_present(d, "per_class", cfg.dataset.per_class);
        get_if_present(d, "spread", cfg.dataset.spread);
        get_if_present(d, "train_fraction", cfg.dataset.train_fraction);
        get_if_present(d, "idx_images", cfg.dataset.idx_images);
        get_if_present(d, "idx_labels", cfg.dataset.idx_labels);
    }
    if (j.contains("transceiver")) {
        const auto& t = j.at("transceiver");
        get_if_present(t, "epochs", cfg.transceiver.epochs);
        get_if_present(t, "batch_size", cfg.transceiver.batch_size);
        get_if_present(t, "lr", cfg.transceiver.lr);
        get_if_present(t, "momentum", cfg.transceiver.momentum);
        get_if_present(t, "train_snr_db", cfg.transceiver.train_snr_db);
        get_if_present(t, "m", cfg.transceiver.m);
        get_if_present(t, "encoder_hidden", cfg.transceiver.encoder_hidden);
        get_if_present(t, "decoder_hidden", cfg.transceiver.decoder_hidden);
    }
    if (j.contains("ib")) {
        const auto& b = j.at("ib");
        get_if_present(b, "beta", cfg.ib.beta);
        get_if_present(b, "lr", cfg.ib.lr);
        get_if_present(b, "iters", cfg.ib.iters);
        get_if_present(b, "noise_draws", cfg.ib.noise_draws);
        get_if_present(b, "delta_floor", cfg.ib.delta_floor);
        get_if_present(b, "analysis_samples", cfg.ib.analysis_samples);
        if (b.contains("sigma_pre_clamp")) {
            const auto clamp = b.at("sigma_pre_clamp").get<std::vector<double>>();
            if (clamp.size() != 2) throw config_error("ib.sigma_pre_clamp must be [lo, hi]");
            cfg.ib.sigma_pre_clamp_lo = clamp[0];
            cfg.ib.sigma_pre_clamp_hi = clamp[1];
        }
        if (b.contains("kl_sign"))
            cfg.ib.kl_sign = kl_sign_from_name(b.at("kl_sign").get<std::string>());
        if (b.contains("mode"))
            cfg.ib.mode = sigma_mode_from_name(b.at("mode").get<std::string>());
    }
    if (j.contains("channel")) {
        const auto& c = j.at("channel");
        get_if_present(c, "subchannels", cfg.channel.subchannels);
        get_if_present(c, "capacity", cfg.channel.capacity);
        get_if_present(c, "mean_snr_db", cfg.channel.mean_snr_db);
        get_if_present(c, "variance_db", cfg.channel.variance_db);
        get_if_present(c, "dispersion_is_std", cfg.channel.dispersion_is_std);
        get_if_present(c, "pilots", cfg.channel.pilots);
    }
    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        get_if_present(s, "snr_points_db", cfg.sweep.snr_points_db);
        get_if_present(s, "variance_list_db", cfg.sweep.variance_list_db);
        get_if_present(s, "realizations_per_point", cfg.sweep.realizations_per_point);
        get_if_present(s, "samples_per_realization", cfg.sweep.samples_per_realization);
        if (s.contains("strategies")) {
            cfg.sweep.strategies.clear();
            for (const auto& name : s.at("strategies"))
                cfg.sweep.strategies.push_back(strategy_from_name(name.get<std::string>()));
        }
    }
    if (j.contains("halfsplit"))
        get_if_present(j.at("halfsplit"), "noisy_snr_db", cfg.halfsplit_noisy_snr_db);
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("config: parse failure: ") + e.what());
    }
    try {
        return run_config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("config: ") + e.what());
    }
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["dataset"] = {{"type", cfg.dataset.type},
                    {"num_classes", cfg.dataset.num_classes},
                    {"dim", cfg.dataset.dim},
                    {"per_class", cfg.dataset.per_class},
                    {"spread", cfg.dataset.spread},
                    {"train_fraction", cfg.dataset.train_fraction}};
    if (cfg.dataset.type == "idx") {
        j["dataset"]["idx_images"] = cfg.dataset.idx_images;
        j["dataset"]["idx_labels"] = cfg.dataset.idx_labels;
    }
    j["transceiver"] = {{"epochs", cfg.transceiver.epochs},
                        {"batch_size", cfg.transceiver.batch_size},
                        {"lr", cfg.transceiver.lr},
                        {"momentum", cfg.transceiver.momentum},
                        {"train_snr_db", cfg.transceiver.train_snr_db},
                        {"m", cfg.transceiver.m},
                        {"encoder_hidden", cfg.transceiver.encoder_hidden},
                        {"decoder_hidden", cfg.transceiver.decoder_hidden}};
    j["ib"] = {{"beta", cfg.ib.beta},
               {"lr", cfg.ib.lr},
               {"iters", cfg.ib.iters},
               {"noise_draws", cfg.ib.noise_draws},
               {"sigma_pre_clamp",
                std::vector<double>{cfg.ib.sigma_pre_clamp_lo, cfg.ib.sigma_pre_clamp_hi}},
               {"kl_sign", kl_sign_name(cfg.ib.kl_sign)},
               {"delta_floor", cfg.ib.delta_floor},
               {"mode", sigma_mode_name(cfg.ib.mode)},
               {"analysis_samples", cfg.ib.analysis_samples}};
    j["channel"] = {{"subchannels", cfg.channel.subchannels},
                    {"capacity", cfg.channel.capacity},
                    {"mean_snr_db", cfg.channel.mean_snr_db},
                    {"variance_db", cfg.channel.variance_db},
                    {"dispersion_is_std", cfg.channel.dispersion_is_std},
                    {"pilots", cfg.channel.pilots}};
    std::vector<std::string> strategy_names;
    for (Strategy s : cfg.sweep.strategies) strategy_names.emplace_back(strategy_name(s));
    j["sweep"] = {{"snr_points_db", cfg.sweep.snr_points_db},
                  {"variance_list_db", cfg.sweep.variance_list_db},
                  {"strategies", strategy_names},
                  {"realizations_per_point", cfg.sweep.realizations_per_point},
                  {"samples_per_realization", cfg.sweep.samples_per_realization}};
    j["halfsplit"] = {{"noisy_snr_db", cfg.halfsplit_noisy_snr_db}};
    return j;
}

void write_sidecar(const std::string& artifact_path, const nlohmann::json& meta) {
    write_file(artifact_path + ".meta.json", meta.dump(2) + "\n");
}

void require_artifact(const std::string& artifact_path) {
    if (!fs::exists(artifact_path))
        throw artifact_error("missing artifact: " + artifact_path);
    const std::string sidecar_path = artifact_path + ".meta.json";
    if (!fs::exists(sidecar_path))
        throw artifact_error("missing sidecar: " + sidecar_path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_file(sidecar_path));
    } catch (const nlohmann::json::exception& e) {
        throw artifact_error(std::string("corrupt sidecar: ") + e.what());
    }
    if (!meta.contains("artifact_checksum"))
        throw artifact_error("sidecar missing artifact_checksum: " + sidecar_path);
    const std::string recorded = meta.at("artifact_checksum").get<std::string>();
    if (recorded != hex_u64(fnv1a64_file(artifact_path)))
        throw artifact_error("artifact checksum mismatch (corrupt or stale): " +
                             artifact_path);
}

std::string cmd_gen_data(const RunConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    Dataset ds;
    if (cfg.dataset.type == "idx") {
        ds = load_idx(cfg.dataset.idx_images, cfg.dataset.idx_labels);
    } else {
        ds = gen_gaussian_mixture(cfg.dataset.num_classes, cfg.dataset.dim,
                                  cfg.dataset.per_class, cfg.dataset.spread,
                                  derive_seed(cfg.seed, kTagDataset));
    }
    const std::string path = join(cfg.out_dir, artifacts::dataset_csv);
    write_dataset_csv(ds, path);
    nlohmann::json meta = base_meta(cfg, "gen-data", path);
    meta["num_samples"] = ds.size();
    meta["num_classes"] = ds.num_classes;
    write_sidecar(path, meta);
    return path;
}

std::string cmd_train(const RunConfig& cfg) {
    cfg.validate();
    const Dataset ds = load_dataset_artifact(cfg);
    const auto [train_ds, test_ds] = split_per_config(ds, cfg);

    TrainConfig tcfg = cfg.transceiver;
    tcfg.seed = derive_seed(cfg.seed, kTagTrain);
    const TscModel model = train(train_ds, tcfg);

    const std::string path = join(cfg.out_dir, artifacts::model_bin);
    save_model(model, path);

    Rng eval_rng(0, 0);
    const double clean_acc =
        test_ds.size() > 0 ? evaluate_accuracy(model, test_ds, 0.0, eval_rng) : 0.0;

    nlohmann::json meta = base_meta(cfg, "train", path);
    meta["model_checksum"] = meta["artifact_checksum"];
    meta["clean_test_accuracy"] = clean_acc;
    meta["signal_power"] = model.signal_power;
    add_input(meta, cfg, artifacts::dataset_csv);
    write_sidecar(path, meta);
    return path;
}

std::string cmd_mask(const RunConfig& cfg) {
    cfg.validate();
    const Dataset ds = load_dataset_artifact(cfg);
    const TscModel model = load_model_artifact(cfg);
    const auto [train_ds, test_ds] = split_per_config(ds, cfg);

    IbConfig icfg = cfg.ib;
    icfg.seed = derive_seed(cfg.seed, kTagIb);
    const RobustnessMask mask = generate_mask(model, train_ds, icfg);

    const std::string path = join(cfg.out_dir, artifacts::mask_json);
    write_mask_json(mask, path);

    nlohmann::json meta = base_meta(cfg, "mask", path);
    meta["mask_checksum"] = meta["artifact_checksum"];
    meta["model_checksum"] = hex_u64(fnv1a64_file(join(cfg.out_dir, artifacts::model_bin)));
    add_input(meta, cfg, artifacts::dataset_csv);
    add_input(meta, cfg, artifacts::model_bin);
    write_sidecar(path, meta);
    return path;
}

std::string cmd_allocate(const RunConfig& cfg,
                         const std::optional<std::string>& external_csi) {
    cfg.validate();
    const TscModel model = load_model_artifact(cfg);
    const RobustnessMask mask = load_mask_artifact(cfg);
    if (mask.size() != model.m)
        throw artifact_error("allocate: mask length does not match model m");

    SubchannelSet subs;
    std::string csi_source;
    if (external_csi) {
        subs = read_csi_csv(*external_csi, cfg.channel.capacity);
        csi_source = *external_csi;
    } else {
        subs = sample_subchannels(cfg.channel.subchannels, cfg.channel.capacity,
                                  cfg.channel.mean_snr_db,
                                  cfg.channel.effective_variance(cfg.channel.variance_db),
                                  derive_seed(cfg.seed, kTagCsi));
        const std::string csi_path = join(cfg.out_dir, artifacts::csi_csv);
        write_csi_csv(subs, csi_path);
        write_sidecar(csi_path, base_meta(cfg, "allocate", csi_path));
        csi_source = csi_path;
    }
    if (subs.total_capacity() < mask.size())
        throw config_error("allocate: CSI does not provide capacity for all units");

    const AllocationPlan plan = greedy_allocate(mask, subs);
    const std::string path = join(cfg.out_dir, artifacts::plan_csv);
    write_plan_csv(plan, mask, subs, path);

    nlohmann::json meta = base_meta(cfg, "allocate", path);
    meta["model_checksum"] = hex_u64(fnv1a64_file(join(cfg.out_dir, artifacts::model_bin)));
    meta["mask_checksum"] = hex_u64(fnv1a64_file(join(cfg.out_dir, artifacts::mask_json)));
    meta["csi_source"] = fs::path(csi_source).filename().string();
    meta["inputs"][fs::path(csi_source).filename().string()] =
        hex_u64(fnv1a64_file(csi_source));
    add_input(meta, cfg, artifacts::mask_json);
    write_sidecar(path, meta);
    return path;
}

std::string cmd_sweep(const RunConfig& cfg) {
    cfg.validate();
    const Dataset ds = load_dataset_artifact(cfg);
    const TscModel model = load_model_artifact(cfg);
    const RobustnessMask mask = load_mask_artifact(cfg);
    const auto [train_ds, test_ds] = split_per_config(ds, cfg);
    if (test_ds.size() == 0) throw config_error("sweep: empty test split");

    SweepConfig scfg = cfg.sweep;
    scfg.seed = derive_seed(cfg.seed, kTagSweep);
    for (double& v : scfg.variance_list_db) v = cfg.channel.effective_variance(v);

    const SweepReport report = run_snr_sweep(
        model, mask, ChannelGeometry{cfg.channel.subchannels, cfg.channel.capacity}, scfg,
        test_ds);
    const std::string path = join(cfg.out_dir, artifacts::sweep_csv);
    write_sweep_csv(report, path);

    nlohmann::json meta = base_meta(cfg, "sweep", path);
    meta["model_checksum"] = hex_u64(fnv1a64_file(join(cfg.out_dir, artifacts::model_bin)));
    meta["mask_checksum"] = hex_u64(fnv1a64_file(join(cfg.out_dir, artifacts::mask_json)));
    add_input(meta, cfg, artifacts::dataset_csv);
    add_input(meta, cfg, artifacts::model_bin);
    add_input(meta, cfg, artifacts::mask_json);
    write_sidecar(path, meta);
    return path;
}

std::string cmd_halfsplit(const RunConfig& cfg) {
    cfg.validate();
    const Dataset ds = load_dataset_artifact(cfg);
    const TscModel model = load_model_artifact(cfg);
    const RobustnessMask mask = load_mask_artifact(cfg);
    const auto [train_ds, test_ds] = split_per_config(ds, cfg);
    if (test_ds.size() == 0) throw config_error("halfsplit: empty test split");

    // Impute missing units with the training-split feature means.
    std::vector<double> means(model.m, 0.0);
    for (std::size_t i = 0; i < train_ds.size(); ++i) {
        const FeatureBlock z = encode(model, train_ds.inputs[i]);
        for (std::size_t k = 0; k < model.m; ++k) means[k] += z[k];
    }
    for (double& v : means) v /= static_cast<double>(train_ds.size());

    const HalfSplitReport report =
        half_split_analysis(model, mask, test_ds, cfg.halfsplit_noisy_snr_db,
                            derive_seed(cfg.seed, kTagHalf), &means);

    const std::string path = join(cfg.out_dir, artifacts::halfsplit_json);
    write_halfsplit_json(report, path);
    const std::string coords_path = join(cfg.out_dir, artifacts::halfsplit_coords_csv);
    write_halfsplit_coords_csv(report, coords_path);

    for (const std::string& p : {path, coords_path}) {
        nlohmann::json meta = base_meta(cfg, "halfsplit", p);
        meta["model_checksum"] =
            hex_u64(fnv1a64_file(join(cfg.out_dir, artifacts::model_bin)));
        meta["mask_checksum"] = hex_u64(fnv1a64_file(join(cfg.out_dir, artifacts::mask_json)));
        add_input(meta, cfg, artifacts::dataset_csv);
        add_input(meta, cfg, artifacts::model_bin);
        add_input(meta, cfg, artifacts::mask_json);
        write_sidecar(p, meta);
    }
    return path;
}

}  // namespace semcom
