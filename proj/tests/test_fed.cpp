#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "fgl/fed.hpp"

using namespace fgl;

namespace {

struct Scenario {
    LabeledDataset train;
    LabeledDataset test;
    std::vector<ClientShard> shards;
    FoundationPrior prior;
};

Scenario desk_scenario(std::size_t clients, std::size_t n_train, std::uint64_t seed) {
    Scenario s;
    const GmmSpec spec = default_gmm_spec();
    s.train = gen_gmm(spec, n_train, derive_seed(seed, seed_salt::kDataTrain));
    s.test = gen_gmm(spec, n_train / 4, derive_seed(seed, seed_salt::kDataTest));
    PartitionSpec part;
    part.seed = seed;
    s.shards = partition(s.train, part, clients);
    s.prior = prior_from_gmm(spec);
    return s;
}

FLConfig quick_config(std::size_t clients, std::size_t rounds) {
    FLConfig cfg;
    cfg.clients = clients;
    cfg.participation = 1.0;
    cfg.rounds = rounds;
    cfg.local_epochs = 1;
    cfg.lr = 0.05;
    cfg.momentum = 0.9;
    cfg.batch = 32;
    cfg.synth_samples = 400;
    cfg.server_epochs = 3;
    return cfg;
}

} // namespace

TEST_CASE("full participation selects everyone") {
    for (std::uint64_t seed : {1ull, 99ull}) {
        const auto sel = select_clients(7, 1.0, seed, 3);
        REQUIRE(sel.size() == 7);
        for (std::uint32_t k = 0; k < 7; ++k) REQUIRE(sel[k] == k);
    }
}

TEST_CASE("a tenth of a hundred clients is exactly ten distinct ids") {
    const auto sel = select_clients(100, 0.1, 42, 1);
    REQUIRE(sel.size() == 10);
    std::set<std::uint32_t> uniq(sel.begin(), sel.end());
    REQUIRE(uniq.size() == 10);
    for (std::uint32_t id : sel) REQUIRE(id < 100);
    REQUIRE(std::is_sorted(sel.begin(), sel.end()));
}

TEST_CASE("selection count is the ceiling of the proportion") {
    REQUIRE(select_clients(10, 0.05, 0, 1).size() == 1);  // ceil(0.5)
    REQUIRE(select_clients(3, 0.34, 0, 1).size() == 2);   // ceil(1.02)
    REQUIRE(select_clients(100, 0.001, 0, 1).size() == 1);
}

TEST_CASE("selection is deterministic per seed and round") {
    const auto a = select_clients(50, 0.2, 7, 12);
    const auto b = select_clients(50, 0.2, 7, 12);
    REQUIRE(a == b);

    // Different rounds decorrelate: over 20 rounds at least one subset moves.
    bool moved = false;
    for (std::size_t round = 1; round <= 20 && !moved; ++round)
        moved = select_clients(50, 0.2, 7, round) != a;
    REQUIRE(moved);

    REQUIRE_THROWS_AS(select_clients(0, 0.5, 0, 1), Error);
    REQUIRE_THROWS_AS(select_clients(10, 0.0, 0, 1), Error);
    REQUIRE_THROWS_AS(select_clients(10, 1.5, 0, 1), Error);
}

TEST_CASE("local training takes epochs times ceil(n over batch) steps") {
    const auto data = gen_gmm(default_gmm_spec(3, 2), 10, 1);
    const auto net = NetworkSpec::mlp(2, {4}, 3);
    const auto params = init_params(net, 1);
    std::vector<std::size_t> indices(10);
    std::iota(indices.begin(), indices.end(), 0);

    Rng rng(5);
    auto result = local_train(net, params, data, indices, 2, 0.01, 0.0, 3, rng);
    REQUIRE(result.steps == 2 * 4); // ceil(10/3) = 4 per epoch

    Rng rng2(5);
    result = local_train(net, params, data, indices, 5, 0.01, 0.0, 32, rng2);
    REQUIRE(result.steps == 5); // one (partial) batch per epoch

    Rng rng3(5);
    REQUIRE_THROWS_AS(local_train(net, params, data, {}, 1, 0.01, 0.0, 8, rng3), Error);
}

TEST_CASE("zero learning rate leaves the model untouched") {
    const auto data = gen_gmm(default_gmm_spec(3, 2), 24, 2);
    const auto net = NetworkSpec::mlp(2, {4}, 3);
    const auto params = init_params(net, 9);
    std::vector<std::size_t> indices(24);
    std::iota(indices.begin(), indices.end(), 0);

    Rng rng(1);
    const auto result = local_train(net, params, data, indices, 3, 0.0, 0.9, 8, rng);
    REQUIRE(result.params.values == params.values);
}

TEST_CASE("one local step equals a direct optimizer step") {
    const auto data = gen_gmm(default_gmm_spec(3, 2), 12, 3);
    const auto net = NetworkSpec::mlp(2, {5}, 3);
    const auto params = init_params(net, 4);
    std::vector<std::size_t> indices(12);
    std::iota(indices.begin(), indices.end(), 0);

    Rng rng(77);
    const auto got = local_train(net, params, data, indices, 1, 0.1, 0.9, 32, rng);
    REQUIRE(got.steps == 1);

    // Replay: the same stream shuffles the same batch order, then one
    // hand-rolled SGD step must match bitwise.
    Rng replay(77);
    std::vector<std::size_t> order(indices);
    replay.shuffle(order);
    const Tensor xb = data.features.gather_rows(order);
    std::vector<int> yb(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) yb[i] = data.labels[order[i]];
    ParamVector manual = params;
    OptimizerState opt(0.1, 0.9, manual.size());
    const auto lg = loss_and_grad(net, manual, xb, yb);
    sgd_step(manual, lg.grad, opt);

    REQUIRE(got.params.values == manual.values);
    REQUIRE(got.final_loss == lg.loss);
}

TEST_CASE("aggregation of one model is the identity") {
    const auto net = NetworkSpec::mlp(3, {7}, 2);
    const auto params = init_params(net, 5);
    const auto out = aggregate({params}, {42.0});
    REQUIRE(out.values == params.values);
}

TEST_CASE("equal weights average coordinate-wise") {
    const auto net = NetworkSpec::mlp(2, {}, 2);
    ParamVector a = init_params(net, 1), b = a;
    std::fill(a.values.begin(), a.values.end(), 0.0);
    std::fill(b.values.begin(), b.values.end(), 2.0);
    const auto mean = aggregate({a, b}, {5.0, 5.0});
    for (double v : mean.values) REQUIRE(v == 1.0);
}

TEST_CASE("weights follow sample counts") {
    const auto net = NetworkSpec::mlp(1, {}, 2);
    ParamVector a = init_params(net, 1), b = a;
    std::fill(a.values.begin(), a.values.end(), 0.0);
    std::fill(b.values.begin(), b.values.end(), 4.0);
    // n = (1, 3): (1*0 + 3*4) / 4 = 3.
    const auto out = aggregate({a, b}, {1.0, 3.0});
    for (double v : out.values) REQUIRE(v == Catch::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("aggregation matches an independent weighted mean") {
    const auto net = NetworkSpec::mlp(4, {6}, 3);
    Rng rng(31337);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 1 + static_cast<std::size_t>(rng.below(6));
        std::vector<ParamVector> models;
        std::vector<double> weights;
        for (std::size_t i = 0; i < k; ++i) {
            ParamVector p = init_params(net, rng.next_u64());
            for (auto& v : p.values) v = rng.gaussian() * 3.0;
            models.push_back(std::move(p));
            weights.push_back(1.0 + 99.0 * rng.uniform());
        }
        const auto out = aggregate(models, weights);

        long double wsum = 0.0L;
        for (double w : weights) wsum += w;
        for (std::size_t j = 0; j < out.values.size(); ++j) {
            long double acc = 0.0L;
            long double lo = models[0].values[j], hi = lo;
            for (std::size_t i = 0; i < k; ++i) {
                acc += static_cast<long double>(weights[i]) * models[i].values[j];
                lo = std::min<long double>(lo, models[i].values[j]);
                hi = std::max<long double>(hi, models[i].values[j]);
            }
            const double want = static_cast<double>(acc / wsum);
            REQUIRE(out.values[j] == Catch::Approx(want).margin(1e-12));
            // Convexity: the blend stays inside the coordinate-wise hull.
            REQUIRE(out.values[j] >= static_cast<double>(lo) - 1e-12);
            REQUIRE(out.values[j] <= static_cast<double>(hi) + 1e-12);
        }
    }
}

TEST_CASE("aggregation is affine-equivariant") {
    const auto net = NetworkSpec::mlp(2, {4}, 2);
    std::vector<ParamVector> models;
    for (int i = 0; i < 3; ++i) models.push_back(init_params(net, 100 + i));
    const std::vector<double> weights = {2.0, 5.0, 3.0};
    const double a = 2.5, b = -1.25;

    auto scaled = models;
    for (auto& m : scaled)
        for (auto& v : m.values) v = a * v + b;
    const auto direct = aggregate(scaled, weights);
    auto via = aggregate(models, weights);
    for (auto& v : via.values) v = a * v + b;
    for (std::size_t j = 0; j < via.values.size(); ++j)
        REQUIRE(direct.values[j] == Catch::Approx(via.values[j]).margin(1e-12));
}

TEST_CASE("aggregation rejects malformed input") {
    const auto net = NetworkSpec::mlp(2, {}, 2);
    const auto p = init_params(net, 1);
    REQUIRE_THROWS_AS(aggregate({}, {}), Error);
    REQUIRE_THROWS_AS(aggregate({p, p}, {1.0}), Error);
    REQUIRE_THROWS_AS(aggregate({p, p}, {1.0, 0.0}), Error);
    REQUIRE_THROWS_AS(aggregate({p, p}, {1.0, -2.0}), Error);

    const auto other = init_params(NetworkSpec::mlp(2, {3}, 2), 1);
    REQUIRE_THROWS_WITH(aggregate({p, other}, {1.0, 1.0}),
                        Catch::Matchers::ContainsSubstring("layout"));
}

TEST_CASE("single-client federation replays centralized training bitwise") {
    auto s = desk_scenario(1, 400, 6);
    ClientShard everything;
    everything.client_id = 0;
    everything.indices.resize(s.train.size());
    std::iota(everything.indices.begin(), everything.indices.end(), 0);

    FLConfig cfg = quick_config(1, 12);
    cfg.eval_every = 1;

    const auto net = NetworkSpec::mlp(2, {32}, 10);
    const auto fed = run_fedavg(net, s.train, {everything}, s.test, cfg, 2024);
    const auto cen = run_centralized(net, s.train, s.test, cfg, 2024);

    REQUIRE(fed.model.params.values == cen.model.params.values);
    REQUIRE(fed.reports.size() == cen.reports.size());
    for (std::size_t r = 0; r < fed.reports.size(); ++r) {
        REQUIRE(fed.reports[r].mean_local_loss == cen.reports[r].mean_local_loss);
        REQUIRE(fed.reports[r].test_eval.has_value());
        REQUIRE(cen.reports[r].test_eval.has_value());
        REQUIRE(fed.reports[r].test_eval->accuracy == cen.reports[r].test_eval->accuracy);
        REQUIRE(fed.reports[r].test_eval->mean_loss == cen.reports[r].test_eval->mean_loss);
    }
    // The trajectories coincide; only the ledgers differ.
    REQUIRE(cen.ledger.entries.empty());
    REQUIRE(fed.ledger.entries.size() == 2 * cfg.rounds);
}

TEST_CASE("federated rounds record selection and bytes as they grow") {
    auto s = desk_scenario(5, 300, 8);
    FLConfig cfg = quick_config(5, 4);
    cfg.participation = 0.5; // ceil(2.5) = 3 clients per round
    const auto net = NetworkSpec::mlp(2, {8}, 10);
    const auto run = run_fedavg(net, s.train, s.shards, s.test, cfg, 99);

    REQUIRE(run.reports.size() == 4);
    std::uint64_t prev = 0;
    for (const auto& rep : run.reports) {
        REQUIRE(rep.selected.size() == 3);
        REQUIRE(rep.cumulative_bytes > prev);
        prev = rep.cumulative_bytes;
        REQUIRE(rep.train_eval.has_value()); // default cadence: every round
    }
    REQUIRE(run.reports.back().cumulative_bytes == run.ledger.total_bytes());
    REQUIRE(run.ledger.total_bytes() ==
            fedavg_total_bytes(run.model.params.values.size(), 4, 3));
}

TEST_CASE("federated runs are reproducible") {
    auto s = desk_scenario(4, 200, 12);
    FLConfig cfg = quick_config(4, 3);
    const auto net = NetworkSpec::mlp(2, {6}, 10);
    const auto a = run_fedavg(net, s.train, s.shards, s.test, cfg, 55);
    const auto b = run_fedavg(net, s.train, s.shards, s.test, cfg, 55);
    REQUIRE(a.model.params.values == b.model.params.values);
    REQUIRE(a.total_steps == b.total_steps);
    for (std::size_t r = 0; r < a.reports.size(); ++r)
        REQUIRE(a.reports[r].mean_local_loss == b.reports[r].mean_local_loss);

    const auto c = run_fedavg(net, s.train, s.shards, s.test, cfg, 56);
    REQUIRE(a.model.params.values != c.model.params.values);
}

TEST_CASE("config and partition must agree on the client count") {
    auto s = desk_scenario(3, 150, 1);
    FLConfig cfg = quick_config(5, 2); // five expected, three shards given
    const auto net = NetworkSpec::mlp(2, {4}, 10);
    REQUIRE_THROWS_WITH(run_fedavg(net, s.train, s.shards, s.test, cfg, 1),
                        Catch::Matchers::ContainsSubstring("shards"));
}

TEST_CASE("full-batch centralized descent is monotone on separable blobs") {
    GmmSpec spec;
    spec.classes.resize(2);
    spec.classes[0].components.push_back({1.0, {-3.0, 0.0}, {0.05, 0.05}});
    spec.classes[1].components.push_back({1.0, {+3.0, 0.0}, {0.05, 0.05}});
    const auto train = gen_gmm(spec, 120, 3);
    const auto test = gen_gmm(spec, 40, 4);

    FLConfig cfg;
    cfg.clients = 1;
    cfg.participation = 1.0;
    cfg.rounds = 15;
    cfg.local_epochs = 1;
    cfg.lr = 0.05;
    cfg.momentum = 0.0;
    cfg.batch = 120; // full batch: plain gradient descent
    cfg.eval_every = 1;

    const auto net = NetworkSpec::mlp(2, {}, 2);
    const auto run = run_centralized(net, train, test, cfg, 10);
    for (std::size_t r = 1; r < run.reports.size(); ++r)
        REQUIRE(run.reports[r].train_eval->mean_loss <=
                run.reports[r - 1].train_eval->mean_loss + 1e-9);
}

TEST_CASE("one-shot runs upload each client once and never broadcast") {
    auto s = desk_scenario(5, 400, 20);
    FLConfig cfg = quick_config(5, 1);

    FglOptions opts;
    opts.mode = PromptMode::ClassLevel;
    opts.method = SynthMethod::Direct;
    opts.prior = &s.prior;

    const auto net = NetworkSpec::mlp(2, {16}, 10);
    const auto run = run_fgl(net, s.train, s.shards, s.test, cfg, opts, 77);

    REQUIRE(run.ledger.count_kind("prompt") == 5);
    REQUIRE(run.ledger.count_kind("model") == 0);
    std::set<std::uint32_t> seen;
    for (const auto& e : run.ledger.entries) {
        REQUIRE(e.kind == "prompt");
        REQUIRE(e.direction == Direction::Uplink);
        REQUIRE(seen.insert(e.client).second); // one upload per client
    }

    REQUIRE(run.reports.size() == 1);
    REQUIRE(run.reports[0].selected.size() == 5);
    REQUIRE(run.reports[0].cumulative_bytes == run.ledger.total_bytes());
    REQUIRE(run.reports[0].test_eval.has_value());
    REQUIRE(run.synthetic.has_value());
    REQUIRE(run.synthetic->data.size() == cfg.synth_samples);
}

TEST_CASE("one-shot training needs a full first batch") {
    auto s = desk_scenario(2, 100, 21);
    FLConfig cfg = quick_config(2, 1);
    cfg.synth_samples = 10;
    cfg.batch = 32;
    FglOptions opts;
    opts.method = SynthMethod::Direct;
    opts.prior = &s.prior;
    const auto net = NetworkSpec::mlp(2, {4}, 10);
    REQUIRE_THROWS_AS(run_fgl(net, s.train, s.shards, s.test, cfg, opts, 1), ConfigError);
}

TEST_CASE("one-shot runs are reproducible across backends") {
    auto s = desk_scenario(3, 240, 30);
    FLConfig cfg = quick_config(3, 1);
    cfg.synth_samples = 120;
    const auto net = NetworkSpec::mlp(2, {8}, 10);

    FglOptions opts;
    opts.prior = &s.prior;
    for (SynthMethod method :
         {SynthMethod::Direct, SynthMethod::Diffusion, SynthMethod::Gan}) {
        opts.method = method;
        opts.diffusion.steps = 10;
        opts.gan.steps = 40;
        const auto a = run_fgl(net, s.train, s.shards, s.test, cfg, opts, 5);
        const auto b = run_fgl(net, s.train, s.shards, s.test, cfg, opts, 5);
        REQUIRE(a.model.params.values == b.model.params.values);
        REQUIRE(a.final_test.accuracy == b.final_test.accuracy);
        REQUIRE(a.synthetic->method == synth_method_name(method));
    }
}

TEST_CASE("config presets carry the published hyperparameters") {
    const auto main_cfg = fl_preset("main");
    REQUIRE(main_cfg.clients == 100);
    REQUIRE(main_cfg.participation == 0.1);
    REQUIRE(main_cfg.rounds == 250);
    REQUIRE(main_cfg.local_epochs == 5);
    REQUIRE(main_cfg.lr == 0.001);
    REQUIRE(main_cfg.batch == 32);
    REQUIRE(main_cfg.synth_samples == 10000);

    const auto base_cfg = fl_preset("baseline");
    REQUIRE(base_cfg.clients == 5);
    REQUIRE(base_cfg.participation == 1.0);
    REQUIRE(base_cfg.rounds == 200);
    REQUIRE(base_cfg.lr == 0.01);
    REQUIRE(base_cfg.momentum == 0.9);

    REQUIRE_THROWS_AS(fl_preset("huge"), ConfigError);
}

TEST_CASE("config validation rejects out-of-range fields") {
    FLConfig cfg;
    cfg.clients = 0;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.participation = 0.0;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.participation = 1.5;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.rounds = 0;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.local_epochs = 0;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.lr = 0.0;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.momentum = 1.0;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.batch = 0;
    REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.validate();
}
