#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <string>

#include "fgl/config.hpp"

using namespace fgl;
using nlohmann::json;

namespace {

struct TempFile {
    std::string path;
    TempFile(const std::string& name, const std::string& body)
        : path("/tmp/fgl_test_" + name) {
        std::ofstream out(path, std::ios::binary);
        out << body;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("the minimal config resolves to the published main setup") {
    const auto cfg = parse_config(json{{"preset", "main"}, {"dataset", "gmm-default"}});
    REQUIRE(cfg.preset == "main");
    REQUIRE(cfg.fl.clients == 100);
    REQUIRE(cfg.fl.participation == 0.1);
    REQUIRE(cfg.fl.rounds == 250);
    REQUIRE(cfg.fl.local_epochs == 5);
    REQUIRE(cfg.fl.lr == 0.001);
    REQUIRE(cfg.fl.batch == 32);
    REQUIRE(cfg.fl.synth_samples == 10000);

    REQUIRE(cfg.dataset.kind == "gmm");
    REQUIRE(cfg.dataset.classes == 10);
    REQUIRE(cfg.dataset.dim == 2);
    REQUIRE(cfg.dataset.radius == 5.0);
    REQUIRE(cfg.dataset.sigma2 == 0.25);

    REQUIRE(cfg.diffusion.steps == 250);
    REQUIRE(cfg.diffusion.noise_scale == 0.95);
    REQUIRE(cfg.method == SynthMethod::Diffusion);
    REQUIRE(cfg.prompt_mode == PromptMode::ClassLevel);
    REQUIRE(cfg.partition.mode == PartitionMode::IID);
    REQUIRE(cfg.partition.seed == cfg.seed);
}

TEST_CASE("an empty config object parses to pure defaults") {
    const auto cfg = parse_config(json::object());
    REQUIRE(cfg.seed == 1);
    REQUIRE(cfg.preset.empty());
    REQUIRE(cfg.fl.clients == 100);
    REQUIRE(cfg.model.kind == "mlp");
    REQUIRE(cfg.model.hidden == std::vector<std::size_t>{32});
    REQUIRE(cfg.landscape.grid == 7);
    REQUIRE(cfg.netsim.bytes_per_param == 4);
    REQUIRE(cfg.netsim.header_bytes == 64);
    REQUIRE(cfg.cost.seconds_per_megabyte == 0.08);
}

TEST_CASE("unknown keys are named in full") {
    REQUIRE_THROWS_WITH(parse_config(json{{"foo", 1}}),
                        Catch::Matchers::ContainsSubstring("'foo'"));
    REQUIRE_THROWS_WITH(parse_config(json{{"fl", {{"foo", 1}}}}),
                        Catch::Matchers::ContainsSubstring("'fl.foo'"));
    REQUIRE_THROWS_WITH(parse_config(json{{"synth", {{"diffusion", {{"depth", 3}}}}}}),
                        Catch::Matchers::ContainsSubstring("'synth.diffusion.depth'"));
}

TEST_CASE("field validation fires at parse time") {
    REQUIRE_THROWS_AS(parse_config(json{{"fl", {{"participation", 0.0}}}}), ConfigError);
    REQUIRE_THROWS_AS(parse_config(json{{"fl", {{"rounds", 0}}}}), ConfigError);
    REQUIRE_THROWS_AS(parse_config(json{{"synth", {{"diffusion", {{"noise_scale", 1.0}}}}}}),
                      ConfigError);
    REQUIRE_THROWS_AS(parse_config(json{{"netsim", {{"seconds_per_megabyte", 0.0}}}}),
                      ConfigError);
    REQUIRE_THROWS_AS(parse_config(json{{"fl", {{"lr", "fast"}}}}), ConfigError);
    REQUIRE_THROWS_AS(parse_config(json{{"seed", -1}}), ConfigError);
}

TEST_CASE("dataset shorthand accepts only the default tag") {
    REQUIRE_THROWS_WITH(parse_config(json{{"dataset", "cifar"}}),
                        Catch::Matchers::ContainsSubstring("gmm-default"));
    const auto cfg = parse_config(json{{"dataset", "gmm-default"}});
    REQUIRE(cfg.dataset.kind == "gmm");
}

TEST_CASE("file-backed datasets must exist when the config is parsed") {
    REQUIRE_THROWS_WITH(
        parse_config(json{{"dataset",
                           {{"kind", "csv"},
                            {"train_path", "/tmp/fgl_no_such_train.csv"},
                            {"test_path", "/tmp/fgl_no_such_test.csv"}}}}),
        Catch::Matchers::ContainsSubstring("missing file"));

    TempFile train("cfg_train.csv", "f0,label\n0.0,0\n");
    TempFile test("cfg_test.csv", "f0,label\n0.0,0\n");
    const auto cfg = parse_config(json{
        {"dataset",
         {{"kind", "csv"}, {"train_path", train.path}, {"test_path", test.path}}}});
    REQUIRE(cfg.dataset.kind == "csv");
    REQUIRE(cfg.dataset.train_path == train.path);

    // idx without all four paths is malformed regardless of file presence.
    REQUIRE_THROWS_WITH(
        parse_config(json{{"dataset", {{"kind", "idx"}, {"train_images", "/tmp/x"}}}}),
        Catch::Matchers::ContainsSubstring("needs"));
}

TEST_CASE("preset fields can be overridden by the fl block") {
    const auto cfg = parse_config(
        json{{"preset", "baseline"}, {"fl", {{"lr", 0.5}, {"rounds", 7}}}});
    REQUIRE(cfg.fl.lr == 0.5);
    REQUIRE(cfg.fl.rounds == 7);
    REQUIRE(cfg.fl.clients == 5);        // inherited from the preset
    REQUIRE(cfg.fl.participation == 1.0);

    REQUIRE_THROWS_WITH(parse_config(json{{"preset", "huge"}}),
                        Catch::Matchers::ContainsSubstring("preset"));
}

TEST_CASE("the top-level seed drives the partition seed") {
    const auto cfg = parse_config(json{{"seed", 42}});
    REQUIRE(cfg.seed == 42);
    REQUIRE(cfg.partition.seed == 42);
}

TEST_CASE("sampler and netsim blocks parse field by field") {
    const auto cfg = parse_config(json{
        {"synth",
         {{"method", "gan"},
          {"diffusion", {{"steps", 50}, {"noise_scale", 0.5}}},
          {"gan", {{"hidden", 16}, {"steps", 100}, {"seed", 9}}}}},
        {"netsim",
         {{"bytes_per_param", 2},
          {"header_bytes", 32},
          {"seconds_per_megabyte", 1.5},
          {"round_latency_seconds", 0.2}}},
        {"prompts", {{"mode", "entity"}, {"clusters_per_class", 5}}},
        {"landscape", {{"radius", 2.0}, {"grid", 9}}},
    });
    REQUIRE(cfg.method == SynthMethod::Gan);
    REQUIRE(cfg.diffusion.steps == 50);
    REQUIRE(cfg.diffusion.noise_scale == 0.5);
    REQUIRE(cfg.gan.hidden == 16);
    REQUIRE(cfg.gan.steps == 100);
    REQUIRE(cfg.gan.seed == 9);
    REQUIRE(cfg.netsim.bytes_per_param == 2);
    REQUIRE(cfg.netsim.header_bytes == 32);
    REQUIRE(cfg.cost.seconds_per_megabyte == 1.5);
    REQUIRE(cfg.cost.round_latency_seconds == 0.2);
    REQUIRE(cfg.prompt_mode == PromptMode::EntityLevel);
    REQUIRE(cfg.clusters_per_class == 5);
    REQUIRE(cfg.landscape.radius == 2.0);
    REQUIRE(cfg.landscape.grid == 9);

    REQUIRE_THROWS_WITH(parse_config(json{{"prompts", {{"mode", "word"}}}}),
                        Catch::Matchers::ContainsSubstring("class or entity"));
    REQUIRE_THROWS_WITH(parse_config(json{{"synth", {{"method", "vae"}}}}),
                        Catch::Matchers::ContainsSubstring("vae"));
}

TEST_CASE("model block validates its shape") {
    auto cfg = parse_config(json{{"model", {{"kind", "mlp"}, {"hidden", {64, 32}}}}});
    REQUIRE(cfg.model.hidden == std::vector<std::size_t>({64, 32}));
    cfg = parse_config(json{{"model", {{"kind", "mlp"}, {"hidden", json::array()}}}});
    REQUIRE(cfg.model.hidden.empty()); // linear model

    REQUIRE_THROWS_WITH(parse_config(json{{"model", {{"kind", "rnn"}}}}),
                        Catch::Matchers::ContainsSubstring("mlp or cnn"));
    REQUIRE_THROWS_AS(parse_config(json{{"model", {{"hidden", {0}}}}}), ConfigError);
    REQUIRE_THROWS_AS(parse_config(json{{"model", {{"hidden", 32}}}}), ConfigError);
}

TEST_CASE("partition block parses both modes") {
    auto cfg = parse_config(
        json{{"partition", {{"mode", "dirichlet"}, {"alpha", 0.1}, {"min_samples", 2}}}});
    REQUIRE(cfg.partition.mode == PartitionMode::Dirichlet);
    REQUIRE(cfg.partition.alpha == 0.1);
    REQUIRE(cfg.partition.min_samples == 2);
    REQUIRE_THROWS_WITH(parse_config(json{{"partition", {{"mode", "random"}}}}),
                        Catch::Matchers::ContainsSubstring("iid or dirichlet"));
}

TEST_CASE("the json echo is a fixed point of parsing") {
    const auto cfg = parse_config(json{
        {"seed", 7},
        {"preset", "baseline"},
        {"fl", {{"rounds", 9}}},
        {"prompts", {{"mode", "entity"}}},
        {"synth", {{"method", "direct"}}},
    });
    const json echo = config_to_json(cfg);
    const auto cfg2 = parse_config(echo);
    REQUIRE(config_to_json(cfg2) == echo);
    REQUIRE(cfg2.fl.rounds == 9);
    REQUIRE(cfg2.method == SynthMethod::Direct);
    REQUIRE(cfg2.prompt_mode == PromptMode::EntityLevel);
}

TEST_CASE("config files load with real error messages") {
    REQUIRE_THROWS_WITH(load_config("/tmp/fgl_no_such_config.json"),
                        Catch::Matchers::ContainsSubstring("cannot read"));
    TempFile broken("cfg_broken.json", "{not json");
    REQUIRE_THROWS_WITH(load_config(broken.path),
                        Catch::Matchers::ContainsSubstring("not valid JSON"));
    TempFile fine("cfg_fine.json", R"({"seed": 3, "dataset": "gmm-default"})");
    const auto cfg = load_config(fine.path);
    REQUIRE(cfg.seed == 3);
}

TEST_CASE("materialization produces a consistent federation") {
    auto cfg = parse_config(json{
        {"seed", 5},
        {"dataset",
         {{"kind", "gmm"}, {"classes", 4}, {"train_samples", 200}, {"test_samples", 50}}},
        {"fl", {{"clients", 4}, {"rounds", 1}}},
    });
    const auto data = materialize_dataset(cfg);
    REQUIRE(data.train.size() == 200);
    REQUIRE(data.test.size() == 50);
    REQUIRE(data.shards.size() == 4);
    REQUIRE(data.prior.has_value());
    REQUIRE(data.gmm.has_value());
    REQUIRE(data.prior->classes.size() == 4);

    const auto net = build_network(cfg.model, data.train);
    net.validate();
    REQUIRE(net.classes() == 4);

    const auto opts = make_fgl_options(cfg, data);
    REQUIRE(opts.prior == &*data.prior);
    REQUIRE(opts.method == cfg.method);

    ModelConfig cnn;
    cnn.kind = "cnn";
    REQUIRE_THROWS_WITH(build_network(cnn, data.train),
                        Catch::Matchers::ContainsSubstring("image"));
}

TEST_CASE("heterogeneous datasets materialize per client") {
    auto cfg = parse_config(json{
        {"seed", 11},
        {"dataset",
         {{"kind", "gmm-hetero"},
          {"classes", 3},
          {"samples_per_client", 50},
          {"test_samples", 60},
          {"shift_sigma", 0.8}}},
        {"fl", {{"clients", 3}, {"rounds", 1}}},
    });
    const auto data = materialize_dataset(cfg);
    REQUIRE(data.train.size() == 150);
    REQUIRE(data.test.size() == 60);
    REQUIRE(data.shards.size() == 3);
    for (const auto& s : data.shards) REQUIRE(s.n() == 50);
    REQUIRE(data.prior.has_value()); // built from the unshifted base spec
}
