#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgl/core.hpp"
#include "fgl/dataset.hpp"
#include "fgl/fed.hpp"
#include "fgl/idx.hpp"
#include "fgl/netsim.hpp"
#include "fgl/network.hpp"
#include "fgl/partition.hpp"
#include "fgl/synth.hpp"

namespace fgl {

// JSON run configuration. Parsing is strict: unknown keys are errors (so a
// typo cannot silently fall back to a default), and type errors name the full
// key path.

struct DatasetConfig {
    std::string kind = "gmm"; // gmm | gmm-hetero | idx | csv

    // gmm and gmm-hetero
    std::size_t classes = 10;
    std::size_t dim = 2;
    double radius = 5.0;
    double sigma2 = 0.25;
    std::size_t train_samples = 5000;
    std::size_t test_samples = 1000;

    // gmm-hetero only
    std::size_t samples_per_client = 200;
    double shift_sigma = 1.0;

    // idx only
    std::string train_images, train_labels, test_images, test_labels;
    bool flatten = false;

    // csv only
    std::string train_path, test_path;
};

struct ModelConfig {
    std::string kind = "mlp"; // mlp | cnn
    std::vector<std::size_t> hidden = {32};

    // cnn only
    std::size_t conv1 = 8;
    std::size_t conv2 = 16;
    std::size_t kernel = 5;
    std::size_t stride = 2;
};

struct LandscapeConfig {
    double radius = 1.0;
    std::size_t grid = 7;
};

struct SimConfig {
    std::uint64_t seed = 1;
    std::string preset; // empty, or one of the named setups
    DatasetConfig dataset;
    PartitionSpec partition; // seed filled from the top-level seed
    ModelConfig model;
    FLConfig fl;
    PromptMode prompt_mode = PromptMode::ClassLevel;
    std::size_t clusters_per_class = 3;
    SynthMethod method = SynthMethod::Diffusion;
    DiffusionConfig diffusion;
    GanConfig gan;
    MessageSizeModel netsim;
    CostModel cost;
    LandscapeConfig landscape;
};

namespace detail {

inline std::string join_path(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

inline void check_keys(const nlohmann::json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (item.key() == a) {
                known = true;
                break;
            }
        if (!known)
            fail_config("config: unknown key '%s'", join_path(path, item.key()).c_str());
    }
}

inline const nlohmann::json& need_object(const nlohmann::json& j, const std::string& path) {
    if (!j.is_object()) fail_config("config: '%s' must be an object", path.c_str());
    return j;
}

inline double get_num(const nlohmann::json& j, const std::string& path, const char* key,
                      double dflt) {
    if (!j.contains(key)) return dflt;
    const auto& v = j.at(key);
    if (!v.is_number()) fail_config("config: '%s' must be a number", join_path(path, key).c_str());
    return v.get<double>();
}

// Text parsing yields unsigned for nonnegative literals, but in-memory
// construction hands us signed ints; accept both as long as the value fits.
inline bool is_uint_like(const nlohmann::json& v) {
    return v.is_number_unsigned() ||
           (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

inline std::uint64_t get_uint(const nlohmann::json& j, const std::string& path, const char* key,
                              std::uint64_t dflt) {
    if (!j.contains(key)) return dflt;
    const auto& v = j.at(key);
    if (!is_uint_like(v))
        fail_config("config: '%s' must be an unsigned integer", join_path(path, key).c_str());
    return v.get<std::uint64_t>();
}

inline std::string get_str(const nlohmann::json& j, const std::string& path, const char* key,
                           const std::string& dflt) {
    if (!j.contains(key)) return dflt;
    const auto& v = j.at(key);
    if (!v.is_string()) fail_config("config: '%s' must be a string", join_path(path, key).c_str());
    return v.get<std::string>();
}

inline bool get_bool(const nlohmann::json& j, const std::string& path, const char* key,
                     bool dflt) {
    if (!j.contains(key)) return dflt;
    const auto& v = j.at(key);
    if (!v.is_boolean()) fail_config("config: '%s' must be a boolean", join_path(path, key).c_str());
    return v.get<bool>();
}

inline DatasetConfig parse_dataset(const nlohmann::json& j, const std::string& path) {
    DatasetConfig cfg;
    if (j.is_string()) {
        const std::string shorthand = j.get<std::string>();
        if (shorthand != "gmm-default")
            fail_config("config: '%s' string form must be \"gmm-default\"", path.c_str());
        return cfg;
    }
    need_object(j, path);
    check_keys(j, path,
               {"kind", "classes", "dim", "radius", "sigma2", "train_samples", "test_samples",
                "samples_per_client", "shift_sigma", "train_images", "train_labels",
                "test_images", "test_labels", "flatten", "train_path", "test_path"});
    cfg.kind = get_str(j, path, "kind", cfg.kind);
    if (cfg.kind != "gmm" && cfg.kind != "gmm-hetero" && cfg.kind != "idx" && cfg.kind != "csv")
        fail_config("config: '%s.kind' must be gmm, gmm-hetero, idx, or csv (got '%s')",
                    path.c_str(), cfg.kind.c_str());
    cfg.classes = get_uint(j, path, "classes", cfg.classes);
    cfg.dim = get_uint(j, path, "dim", cfg.dim);
    cfg.radius = get_num(j, path, "radius", cfg.radius);
    cfg.sigma2 = get_num(j, path, "sigma2", cfg.sigma2);
    cfg.train_samples = get_uint(j, path, "train_samples", cfg.train_samples);
    cfg.test_samples = get_uint(j, path, "test_samples", cfg.test_samples);
    cfg.samples_per_client = get_uint(j, path, "samples_per_client", cfg.samples_per_client);
    cfg.shift_sigma = get_num(j, path, "shift_sigma", cfg.shift_sigma);
    cfg.train_images = get_str(j, path, "train_images", "");
    cfg.train_labels = get_str(j, path, "train_labels", "");
    cfg.test_images = get_str(j, path, "test_images", "");
    cfg.test_labels = get_str(j, path, "test_labels", "");
    cfg.flatten = get_bool(j, path, "flatten", cfg.flatten);
    cfg.train_path = get_str(j, path, "train_path", "");
    cfg.test_path = get_str(j, path, "test_path", "");
    if (cfg.kind == "idx" && (cfg.train_images.empty() || cfg.train_labels.empty() ||
                              cfg.test_images.empty() || cfg.test_labels.empty()))
        fail_config("config: '%s' kind idx needs train_images, train_labels, test_images, "
                    "test_labels",
                    path.c_str());
    if (cfg.kind == "csv" && (cfg.train_path.empty() || cfg.test_path.empty()))
        fail_config("config: '%s' kind csv needs train_path and test_path", path.c_str());
    std::vector<const std::string*> referenced;
    if (cfg.kind == "idx")
        referenced = {&cfg.train_images, &cfg.train_labels, &cfg.test_images, &cfg.test_labels};
    else if (cfg.kind == "csv")
        referenced = {&cfg.train_path, &cfg.test_path};
    for (const std::string* p : referenced)
        if (!std::filesystem::exists(*p))
            fail_config("config: '%s' references missing file %s", path.c_str(), p->c_str());
    return cfg;
}

inline ModelConfig parse_model(const nlohmann::json& j, const std::string& path) {
    ModelConfig cfg;
    need_object(j, path);
    check_keys(j, path, {"kind", "hidden", "conv1", "conv2", "kernel", "stride"});
    cfg.kind = get_str(j, path, "kind", cfg.kind);
    if (cfg.kind != "mlp" && cfg.kind != "cnn")
        fail_config("config: '%s.kind' must be mlp or cnn (got '%s')", path.c_str(),
                    cfg.kind.c_str());
    if (j.contains("hidden")) {
        const auto& h = j.at("hidden");
        if (!h.is_array())
            fail_config("config: '%s.hidden' must be an array of layer widths", path.c_str());
        cfg.hidden.clear();
        for (const auto& v : h) {
            if (!is_uint_like(v) || v.get<std::uint64_t>() == 0)
                fail_config("config: '%s.hidden' entries must be positive integers",
                            path.c_str());
            cfg.hidden.push_back(v.get<std::size_t>());
        }
    }
    cfg.conv1 = get_uint(j, path, "conv1", cfg.conv1);
    cfg.conv2 = get_uint(j, path, "conv2", cfg.conv2);
    cfg.kernel = get_uint(j, path, "kernel", cfg.kernel);
    cfg.stride = get_uint(j, path, "stride", cfg.stride);
    return cfg;
}

inline PartitionSpec parse_partition(const nlohmann::json& j, const std::string& path) {
    PartitionSpec spec;
    need_object(j, path);
    check_keys(j, path, {"mode", "alpha", "min_samples"});
    const std::string mode = get_str(j, path, "mode", "iid");
    if (mode == "iid")
        spec.mode = PartitionMode::IID;
    else if (mode == "dirichlet")
        spec.mode = PartitionMode::Dirichlet;
    else
        fail_config("config: '%s.mode' must be iid or dirichlet (got '%s')", path.c_str(),
                    mode.c_str());
    spec.alpha = get_num(j, path, "alpha", spec.alpha);
    spec.min_samples = get_uint(j, path, "min_samples", spec.min_samples);
    return spec;
}

inline FLConfig parse_fl(const nlohmann::json& j, const std::string& path, FLConfig cfg) {
    need_object(j, path);
    check_keys(j, path,
               {"clients", "participation", "rounds", "local_epochs", "lr", "momentum", "batch",
                "eval_every", "synth_samples", "server_epochs"});
    cfg.clients = get_uint(j, path, "clients", cfg.clients);
    cfg.participation = get_num(j, path, "participation", cfg.participation);
    cfg.rounds = get_uint(j, path, "rounds", cfg.rounds);
    cfg.local_epochs = get_uint(j, path, "local_epochs", cfg.local_epochs);
    cfg.lr = get_num(j, path, "lr", cfg.lr);
    cfg.momentum = get_num(j, path, "momentum", cfg.momentum);
    cfg.batch = get_uint(j, path, "batch", cfg.batch);
    cfg.eval_every = get_uint(j, path, "eval_every", cfg.eval_every);
    cfg.synth_samples = get_uint(j, path, "synth_samples", cfg.synth_samples);
    cfg.server_epochs = get_uint(j, path, "server_epochs", cfg.server_epochs);
    return cfg;
}

} // namespace detail

inline SimConfig parse_config(const nlohmann::json& j) {
    detail::need_object(j, "config");
    detail::check_keys(j, "",
                       {"seed", "preset", "dataset", "partition", "model", "fl", "prompts",
                        "synth", "netsim", "landscape"});
    SimConfig cfg;
    cfg.seed = detail::get_uint(j, "", "seed", cfg.seed);
    cfg.preset = detail::get_str(j, "", "preset", "");
    if (!cfg.preset.empty()) cfg.fl = fl_preset(cfg.preset);

    if (j.contains("dataset")) cfg.dataset = detail::parse_dataset(j.at("dataset"), "dataset");
    if (j.contains("partition"))
        cfg.partition = detail::parse_partition(j.at("partition"), "partition");
    if (j.contains("model")) cfg.model = detail::parse_model(j.at("model"), "model");
    if (j.contains("fl")) cfg.fl = detail::parse_fl(j.at("fl"), "fl", cfg.fl);

    if (j.contains("prompts")) {
        const auto& p = detail::need_object(j.at("prompts"), "prompts");
        detail::check_keys(p, "prompts", {"mode", "clusters_per_class"});
        const std::string mode = detail::get_str(p, "prompts", "mode", "class");
        if (mode == "class")
            cfg.prompt_mode = PromptMode::ClassLevel;
        else if (mode == "entity")
            cfg.prompt_mode = PromptMode::EntityLevel;
        else
            fail_config("config: 'prompts.mode' must be class or entity (got '%s')", mode.c_str());
        cfg.clusters_per_class = detail::get_uint(p, "prompts", "clusters_per_class",
                                                  cfg.clusters_per_class);
    }

    if (j.contains("synth")) {
        const auto& s = detail::need_object(j.at("synth"), "synth");
        detail::check_keys(s, "synth", {"method", "diffusion", "gan"});
        cfg.method = synth_method_from_name(detail::get_str(s, "synth", "method", "diffusion"));
        if (s.contains("diffusion")) {
            const auto& d = detail::need_object(s.at("diffusion"), "synth.diffusion");
            detail::check_keys(d, "synth.diffusion",
                               {"steps", "beta_start", "beta_end", "noise_scale"});
            cfg.diffusion.steps = detail::get_uint(d, "synth.diffusion", "steps",
                                                   cfg.diffusion.steps);
            cfg.diffusion.beta_start =
                detail::get_num(d, "synth.diffusion", "beta_start", cfg.diffusion.beta_start);
            cfg.diffusion.beta_end =
                detail::get_num(d, "synth.diffusion", "beta_end", cfg.diffusion.beta_end);
            cfg.diffusion.noise_scale =
                detail::get_num(d, "synth.diffusion", "noise_scale", cfg.diffusion.noise_scale);
        }
        if (s.contains("gan")) {
            const auto& g = detail::need_object(s.at("gan"), "synth.gan");
            detail::check_keys(g, "synth.gan",
                               {"latent_dim", "hidden", "steps", "batch", "lr", "disc_weight",
                                "seed"});
            cfg.gan.latent_dim = detail::get_uint(g, "synth.gan", "latent_dim",
                                                  cfg.gan.latent_dim);
            cfg.gan.hidden = detail::get_uint(g, "synth.gan", "hidden", cfg.gan.hidden);
            cfg.gan.steps = detail::get_uint(g, "synth.gan", "steps", cfg.gan.steps);
            cfg.gan.batch = detail::get_uint(g, "synth.gan", "batch", cfg.gan.batch);
            cfg.gan.lr = detail::get_num(g, "synth.gan", "lr", cfg.gan.lr);
            cfg.gan.disc_weight = detail::get_num(g, "synth.gan", "disc_weight",
                                                  cfg.gan.disc_weight);
            cfg.gan.seed = detail::get_uint(g, "synth.gan", "seed", cfg.gan.seed);
        }
    }

    if (j.contains("netsim")) {
        const auto& n = detail::need_object(j.at("netsim"), "netsim");
        detail::check_keys(n, "netsim",
                           {"bytes_per_param", "header_bytes", "seconds_per_megabyte",
                            "round_latency_seconds"});
        cfg.netsim.bytes_per_param = detail::get_uint(n, "netsim", "bytes_per_param",
                                                      cfg.netsim.bytes_per_param);
        cfg.netsim.header_bytes = detail::get_uint(n, "netsim", "header_bytes",
                                                   cfg.netsim.header_bytes);
        cfg.cost.seconds_per_megabyte = detail::get_num(n, "netsim", "seconds_per_megabyte",
                                                        cfg.cost.seconds_per_megabyte);
        cfg.cost.round_latency_seconds = detail::get_num(n, "netsim", "round_latency_seconds",
                                                         cfg.cost.round_latency_seconds);
        if (!(cfg.cost.seconds_per_megabyte > 0.0))
            fail_config("netsim: seconds_per_megabyte must be positive");
        if (!(cfg.cost.round_latency_seconds >= 0.0))
            fail_config("netsim: round_latency_seconds must be nonnegative");
    }

    if (j.contains("landscape")) {
        const auto& l = detail::need_object(j.at("landscape"), "landscape");
        detail::check_keys(l, "landscape", {"radius", "grid"});
        cfg.landscape.radius = detail::get_num(l, "landscape", "radius", cfg.landscape.radius);
        cfg.landscape.grid = detail::get_uint(l, "landscape", "grid", cfg.landscape.grid);
    }

    cfg.partition.seed = cfg.seed;
    cfg.fl.validate();
    cfg.diffusion.validate();
    cfg.gan.validate();
    cfg.cost.validate();
    return cfg;
}

inline SimConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_config("cannot read config file %s", path.c_str());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail_config("config: %s is not valid JSON (%s)", path.c_str(), e.what());
    }
    return parse_config(j);
}

// Fully resolved config, defaults and all. What the run manifest echoes.
inline nlohmann::json config_to_json(const SimConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    if (!cfg.preset.empty()) j["preset"] = cfg.preset;

    nlohmann::json d;
    d["kind"] = cfg.dataset.kind;
    if (cfg.dataset.kind == "gmm" || cfg.dataset.kind == "gmm-hetero") {
        d["classes"] = cfg.dataset.classes;
        d["dim"] = cfg.dataset.dim;
        d["radius"] = cfg.dataset.radius;
        d["sigma2"] = cfg.dataset.sigma2;
        d["test_samples"] = cfg.dataset.test_samples;
        if (cfg.dataset.kind == "gmm") {
            d["train_samples"] = cfg.dataset.train_samples;
        } else {
            d["samples_per_client"] = cfg.dataset.samples_per_client;
            d["shift_sigma"] = cfg.dataset.shift_sigma;
        }
    } else if (cfg.dataset.kind == "idx") {
        d["train_images"] = cfg.dataset.train_images;
        d["train_labels"] = cfg.dataset.train_labels;
        d["test_images"] = cfg.dataset.test_images;
        d["test_labels"] = cfg.dataset.test_labels;
        d["flatten"] = cfg.dataset.flatten;
    } else {
        d["train_path"] = cfg.dataset.train_path;
        d["test_path"] = cfg.dataset.test_path;
    }
    j["dataset"] = std::move(d);

    j["partition"] = {
        {"mode", cfg.partition.mode == PartitionMode::IID ? "iid" : "dirichlet"},
        {"alpha", cfg.partition.alpha},
        {"min_samples", cfg.partition.min_samples},
    };
    nlohmann::json m;
    m["kind"] = cfg.model.kind;
    if (cfg.model.kind == "mlp") {
        m["hidden"] = cfg.model.hidden;
    } else {
        m["conv1"] = cfg.model.conv1;
        m["conv2"] = cfg.model.conv2;
        m["kernel"] = cfg.model.kernel;
        m["stride"] = cfg.model.stride;
    }
    j["model"] = std::move(m);
    j["fl"] = {
        {"clients", cfg.fl.clients},
        {"participation", cfg.fl.participation},
        {"rounds", cfg.fl.rounds},
        {"local_epochs", cfg.fl.local_epochs},
        {"lr", cfg.fl.lr},
        {"momentum", cfg.fl.momentum},
        {"batch", cfg.fl.batch},
        {"eval_every", cfg.fl.eval_every},
        {"synth_samples", cfg.fl.synth_samples},
        {"server_epochs", cfg.fl.server_epochs},
    };
    j["prompts"] = {
        {"mode", cfg.prompt_mode == PromptMode::ClassLevel ? "class" : "entity"},
        {"clusters_per_class", cfg.clusters_per_class},
    };
    j["synth"] = {
        {"method", synth_method_name(cfg.method)},
        {"diffusion",
         {{"steps", cfg.diffusion.steps},
          {"beta_start", cfg.diffusion.beta_start},
          {"beta_end", cfg.diffusion.beta_end},
          {"noise_scale", cfg.diffusion.noise_scale}}},
        {"gan",
         {{"latent_dim", cfg.gan.latent_dim},
          {"hidden", cfg.gan.hidden},
          {"steps", cfg.gan.steps},
          {"batch", cfg.gan.batch},
          {"lr", cfg.gan.lr},
          {"disc_weight", cfg.gan.disc_weight},
          {"seed", cfg.gan.seed}}},
    };
    j["netsim"] = {
        {"bytes_per_param", cfg.netsim.bytes_per_param},
        {"header_bytes", cfg.netsim.header_bytes},
        {"seconds_per_megabyte", cfg.cost.seconds_per_megabyte},
        {"round_latency_seconds", cfg.cost.round_latency_seconds},
    };
    j["landscape"] = {{"radius", cfg.landscape.radius}, {"grid", cfg.landscape.grid}};
    return j;
}

// ---------------------------------------------------------------------------
// Materialization: config to data, shards, prior, and network
// ---------------------------------------------------------------------------

struct MaterializedData {
    LabeledDataset train;
    LabeledDataset test;
    std::vector<ClientShard> shards;
    std::optional<GmmSpec> gmm; // population spec, when the data is synthetic
    std::optional<FoundationPrior> prior;
};

inline MaterializedData materialize_dataset(const SimConfig& cfg) {
    MaterializedData out;
    const auto& d = cfg.dataset;
    if (d.kind == "gmm") {
        GmmSpec spec = default_gmm_spec(d.classes, d.dim, d.radius, d.sigma2);
        out.train = gen_gmm(spec, d.train_samples,
                            derive_seed(cfg.seed, seed_salt::kDataTrain));
        out.test = gen_gmm(spec, d.test_samples, derive_seed(cfg.seed, seed_salt::kDataTest));
        out.shards = partition(out.train, cfg.partition, cfg.fl.clients);
        out.prior = prior_from_gmm(spec);
        out.gmm = std::move(spec);
    } else if (d.kind == "gmm-hetero") {
        GmmSpec spec = default_gmm_spec(d.classes, d.dim, d.radius, d.sigma2);
        FederatedGmmData fed = gen_gmm_hetero(spec, cfg.fl.clients, d.samples_per_client,
                                              d.test_samples, d.shift_sigma, cfg.seed);
        out.train = std::move(fed.train);
        out.test = std::move(fed.test);
        out.shards = std::move(fed.shards);
        out.prior = prior_from_gmm(spec);
        out.gmm = std::move(spec);
    } else if (d.kind == "idx") {
        out.train = load_idx(d.train_images, d.train_labels);
        out.test = load_idx(d.test_images, d.test_labels);
        if (d.flatten) {
            const std::size_t n_train = out.train.features.dim(0);
            const std::size_t n_test = out.test.features.dim(0);
            out.train.features.shape = {n_train, out.train.features.size() / n_train};
            out.test.features.shape = {n_test, out.test.features.size() / n_test};
        }
        out.shards = partition(out.train, cfg.partition, cfg.fl.clients);
    } else if (d.kind == "csv") {
        out.train = load_csv(d.train_path);
        out.test = load_csv(d.test_path);
        if (out.test.num_classes < out.train.num_classes)
            out.test.num_classes = out.train.num_classes;
        else
            out.train.num_classes = out.test.num_classes;
        out.shards = partition(out.train, cfg.partition, cfg.fl.clients);
    } else {
        fail_config("unknown dataset kind '%s'", d.kind.c_str());
    }
    return out;
}

inline NetworkSpec build_network(const ModelConfig& model, const LabeledDataset& data) {
    if (model.kind == "mlp") {
        if (data.features.rank() != 2)
            fail_config("model mlp needs flat features; dataset has rank %zu (set "
                        "dataset.flatten for images)",
                        data.features.rank());
        return NetworkSpec::mlp(data.features.dim(1), model.hidden, data.num_classes);
    }
    if (data.features.rank() != 4)
        fail_config("model cnn needs image features [n, h, w, c]; dataset has rank %zu",
                    data.features.rank());
    return NetworkSpec::small_cnn(data.features.dim(1), data.features.dim(2),
                                  data.features.dim(3), data.num_classes, model.conv1,
                                  model.conv2, model.kernel, model.stride);
}

inline FglOptions make_fgl_options(const SimConfig& cfg, const MaterializedData& data) {
    FglOptions opts;
    opts.mode = cfg.prompt_mode;
    opts.clusters_per_class = cfg.clusters_per_class;
    opts.method = cfg.method;
    opts.diffusion = cfg.diffusion;
    opts.gan = cfg.gan;
    opts.prior = data.prior ? &*data.prior : nullptr;
    return opts;
}

} // namespace fgl
