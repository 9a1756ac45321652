#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fgl/core.hpp"
#include "fgl/dataset.hpp"
#include "fgl/metrics.hpp"
#include "fgl/netsim.hpp"
#include "fgl/network.hpp"
#include "fgl/optimizer.hpp"
#include "fgl/partition.hpp"
#include "fgl/prompts.hpp"
#include "fgl/synth.hpp"

namespace fgl {

// The three training protocols under comparison: iterative FedAvg, one-shot
// prompt-and-synthesize, and centralized training as the upper baseline.

struct FLConfig {
    std::size_t clients = 100;    // federation size
    double participation = 0.1;   // fraction selected per round
    std::size_t rounds = 250;
    std::size_t local_epochs = 5;
    double lr = 0.001;
    double momentum = 0.9;
    std::size_t batch = 32;
    // Rounds between evaluations. 0 picks the protocol default: every round
    // for FedAvg, only after training for centralized and one-shot runs.
    std::size_t eval_every = 0;

    // One-shot extras: how much surrogate data the server makes and how long
    // it trains on it.
    std::size_t synth_samples = 10000;
    std::size_t server_epochs = 30;

    void validate() const {
        if (clients == 0) fail_config("fl: clients must be >= 1");
        if (!(participation > 0.0) || participation > 1.0)
            fail_config("fl: participation must be in (0, 1]");
        if (rounds == 0) fail_config("fl: rounds must be >= 1");
        if (local_epochs == 0) fail_config("fl: local_epochs must be >= 1");
        if (!(lr > 0.0)) fail_config("fl: lr must be > 0");
        if (momentum < 0.0 || momentum >= 1.0) fail_config("fl: momentum must be in [0, 1)");
        if (batch == 0) fail_config("fl: batch must be >= 1");
        if (synth_samples == 0) fail_config("fl: synth_samples must be >= 1");
        if (server_epochs == 0) fail_config("fl: server_epochs must be >= 1");
    }
};

// "main" is the large-federation setup, "baseline" the small cross-silo one.
inline FLConfig fl_preset(const std::string& name) {
    FLConfig cfg;
    if (name == "main") {
        cfg.clients = 100;
        cfg.participation = 0.1;
        cfg.rounds = 250;
        cfg.local_epochs = 5;
        cfg.lr = 0.001;
        cfg.momentum = 0.9;
        cfg.batch = 32;
        cfg.synth_samples = 10000;
    } else if (name == "baseline") {
        cfg.clients = 5;
        cfg.participation = 1.0;
        cfg.rounds = 200;
        cfg.local_epochs = 5;
        cfg.lr = 0.01;
        cfg.momentum = 0.9;
        cfg.batch = 32;
        cfg.synth_samples = 10000;
    } else {
        fail_config("unknown preset '%s' (want main or baseline)", name.c_str());
    }
    return cfg;
}

struct GlobalModel {
    NetworkSpec net;
    ParamVector params;
};

struct RoundReport {
    std::size_t round = 0;
    std::vector<std::uint32_t> selected;
    double mean_local_loss = 0.0;
    std::optional<Evaluation> train_eval; // post-aggregation, per eval cadence
    std::optional<Evaluation> test_eval;
    std::uint64_t cumulative_bytes = 0; // ledger total after this round
};

struct TrainRunResult {
    GlobalModel model;
    std::vector<RoundReport> reports;
    CommLedger ledger;
    std::size_t total_steps = 0;
    std::map<std::string, double> phase_seconds;
    Evaluation final_train; // on whatever data the method trained on
    Evaluation final_test;
    std::optional<SyntheticDataset> synthetic; // one-shot runs keep theirs
};

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

// Distinct clients for one round, sorted. A partial shuffle driven by the
// round seed keeps selections independent across rounds.
inline std::vector<std::uint32_t> select_clients(std::size_t clients, double participation,
                                                 std::uint64_t seed, std::size_t round) {
    if (clients == 0) fail("select_clients: no clients");
    if (!(participation > 0.0) || participation > 1.0)
        fail("select_clients: participation must be in (0, 1]");
    std::size_t count = static_cast<std::size_t>(
        std::ceil(participation * static_cast<double>(clients)));
    count = std::min(std::max<std::size_t>(count, 1), clients);

    std::vector<std::uint32_t> pool(clients);
    for (std::size_t i = 0; i < clients; ++i) pool[i] = static_cast<std::uint32_t>(i);
    Rng rng(derive_seed(seed, seed_salt::kSelect, round));
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(clients - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return pool;
}

struct LocalResult {
    ParamVector params;
    std::size_t steps = 0;
    double final_loss = 0.0;
};

// Minibatch SGD over one index set: the client update in the federated runs
// and the whole optimizer everywhere else. Momentum starts cold each call.
inline LocalResult local_train(const NetworkSpec& net, ParamVector params,
                               const LabeledDataset& data,
                               const std::vector<std::size_t>& indices, std::size_t epochs,
                               double lr, double momentum, std::size_t batch, Rng& rng) {
    if (indices.empty()) fail("local_train: empty index set");
    if (batch == 0) fail("local_train: batch must be >= 1");
    OptimizerState opt(lr, momentum, params.size());
    std::vector<std::size_t> order(indices);
    LocalResult result;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t stop = std::min(start + batch, order.size());
            const std::vector<std::size_t> take(order.begin() + start, order.begin() + stop);
            const Tensor xb = data.features.gather_rows(take);
            std::vector<int> yb(take.size());
            for (std::size_t i = 0; i < take.size(); ++i) yb[i] = data.labels[take[i]];
            const LossGrad lg = loss_and_grad(net, params, xb, yb);
            sgd_step(params, lg.grad, opt);
            result.steps++;
            result.final_loss = lg.loss;
        }
    }
    result.params = std::move(params);
    return result;
}

// Weighted parameter average, weights proportional to local sample counts.
inline ParamVector aggregate(const std::vector<ParamVector>& models,
                             const std::vector<double>& weights) {
    if (models.empty()) fail("aggregate: no models");
    if (models.size() != weights.size())
        fail("aggregate: %zu models but %zu weights", models.size(), weights.size());
    double total = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) fail("aggregate: weights must be positive");
        total += w;
    }

    ParamVector out = models.front();
    std::fill(out.values.begin(), out.values.end(), 0.0);
    for (std::size_t k = 0; k < models.size(); ++k) {
        if (models[k].layout != out.layout || models[k].values.size() != out.values.size())
            fail("aggregate: model %zu has a different parameter layout", k);
        const double p = weights[k] / total;
        for (std::size_t i = 0; i < out.values.size(); ++i)
            out.values[i] += p * models[k].values[i];
    }
    return out;
}

namespace detail {

struct PhaseTimer {
    std::map<std::string, double>& sink;
    std::string name;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    ~PhaseTimer() {
        const auto stop = std::chrono::steady_clock::now();
        sink[name] += std::chrono::duration<double>(stop - start).count();
    }
};

inline std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Protocols
// ---------------------------------------------------------------------------

// Iterative FedAvg: every round ships the model down to each selected client
// and the update back up, then averages by sample count.
inline TrainRunResult run_fedavg(const NetworkSpec& net, const LabeledDataset& train,
                                 const std::vector<ClientShard>& shards,
                                 const LabeledDataset& test, const FLConfig& cfg,
                                 std::uint64_t seed, const MessageSizeModel& sizes = {}) {
    cfg.validate();
    net.validate();
    if (shards.size() != cfg.clients)
        fail("run_fedavg: config says %zu clients but partition has %zu shards", cfg.clients,
             shards.size());

    TrainRunResult result;
    result.ledger.model = sizes;
    result.model.net = net;
    result.model.params = init_params(net, derive_seed(seed, seed_salt::kInit));
    const std::uint64_t param_count = result.model.params.values.size();

    {
        detail::PhaseTimer timer{result.phase_seconds, "train"};
        for (std::size_t round = 1; round <= cfg.rounds; ++round) {
            const auto selected =
                select_clients(cfg.clients, cfg.participation, seed, round);
            std::vector<ParamVector> locals;
            std::vector<double> weights;
            double loss_sum = 0.0;
            for (std::uint32_t k : selected) {
                result.ledger.record_model_exchange(static_cast<std::uint32_t>(round), k,
                                                    Direction::Downlink, param_count);
                Rng rng(derive_seed(seed, seed_salt::kClient, round, k));
                LocalResult local =
                    local_train(net, result.model.params, train, shards[k].indices,
                                cfg.local_epochs, cfg.lr, cfg.momentum, cfg.batch, rng);
                result.ledger.record_model_exchange(static_cast<std::uint32_t>(round), k,
                                                    Direction::Uplink, param_count);
                result.total_steps += local.steps;
                loss_sum += local.final_loss;
                weights.push_back(static_cast<double>(shards[k].indices.size()));
                locals.push_back(std::move(local.params));
            }
            result.model.params = aggregate(locals, weights);

            RoundReport report;
            report.round = round;
            report.selected = selected;
            report.mean_local_loss = loss_sum / static_cast<double>(selected.size());
            report.cumulative_bytes = result.ledger.total_bytes();
            const std::size_t cadence = cfg.eval_every == 0 ? 1 : cfg.eval_every;
            if (round % cadence == 0 || round == cfg.rounds) {
                report.train_eval = evaluate(net, result.model.params, train);
                report.test_eval = evaluate(net, result.model.params, test);
            }
            result.reports.push_back(std::move(report));
        }
    }
    {
        detail::PhaseTimer timer{result.phase_seconds, "evaluate"};
        result.final_train = evaluate(net, result.model.params, train);
        result.final_test = evaluate(net, result.model.params, test);
    }
    return result;
}

// Centralized training: the same round structure run by one worker that owns
// all the data. No bytes move. FedAvg with a single always-selected client
// reproduces this run exactly.
inline TrainRunResult run_centralized(const NetworkSpec& net, const LabeledDataset& train,
                                      const LabeledDataset& test, const FLConfig& cfg,
                                      std::uint64_t seed) {
    cfg.validate();
    net.validate();

    TrainRunResult result;
    result.model.net = net;
    result.model.params = init_params(net, derive_seed(seed, seed_salt::kInit));
    const auto indices = detail::all_indices(train.labels.size());

    {
        detail::PhaseTimer timer{result.phase_seconds, "train"};
        for (std::size_t round = 1; round <= cfg.rounds; ++round) {
            Rng rng(derive_seed(seed, seed_salt::kClient, round, std::uint32_t{0}));
            LocalResult local = local_train(net, result.model.params, train, indices,
                                            cfg.local_epochs, cfg.lr, cfg.momentum, cfg.batch,
                                            rng);
            result.model.params = std::move(local.params);
            result.total_steps += local.steps;

            RoundReport report;
            report.round = round;
            report.selected = {0};
            report.mean_local_loss = local.final_loss;
            if (cfg.eval_every > 0 && (round % cfg.eval_every == 0 || round == cfg.rounds)) {
                report.train_eval = evaluate(net, result.model.params, train);
                report.test_eval = evaluate(net, result.model.params, test);
            }
            result.reports.push_back(std::move(report));
        }
    }
    {
        detail::PhaseTimer timer{result.phase_seconds, "evaluate"};
        result.final_train = evaluate(net, result.model.params, train);
        result.final_test = evaluate(net, result.model.params, test);
    }
    return result;
}

enum class SynthMethod { Direct, Diffusion, Gan };

inline const char* synth_method_name(SynthMethod m) {
    switch (m) {
        case SynthMethod::Direct: return "direct";
        case SynthMethod::Diffusion: return "diffusion";
        case SynthMethod::Gan: return "gan";
    }
    fail("bad synth method");
}

inline SynthMethod synth_method_from_name(const std::string& name) {
    if (name == "direct") return SynthMethod::Direct;
    if (name == "diffusion") return SynthMethod::Diffusion;
    if (name == "gan") return SynthMethod::Gan;
    fail_config("unknown synth method '%s' (want direct, diffusion, or gan)", name.c_str());
}

struct FglOptions {
    PromptMode mode = PromptMode::ClassLevel;
    std::size_t clusters_per_class = 3; // entity mode only
    SynthMethod method = SynthMethod::Diffusion;
    DiffusionConfig diffusion;
    GanConfig gan;
    // World knowledge for class-level prompts; entity mode stands alone.
    const FoundationPrior* prior = nullptr;
};

// One-shot run: clients upload prompts once, the server synthesizes surrogate
// data and trains on it. The ledger ends up with one prompt entry per client
// and no model traffic at all.
inline TrainRunResult run_fgl(const NetworkSpec& net, const LabeledDataset& train,
                              const std::vector<ClientShard>& shards,
                              const LabeledDataset& test, const FLConfig& cfg,
                              const FglOptions& opts, std::uint64_t seed,
                              const MessageSizeModel& sizes = {}) {
    cfg.validate();
    net.validate();
    if (shards.size() != cfg.clients)
        fail("run_fgl: config says %zu clients but partition has %zu shards", cfg.clients,
             shards.size());
    if (cfg.synth_samples < cfg.batch)
        fail_config("fl: synth_samples (%zu) must be >= batch (%zu) for one-shot training",
                    cfg.synth_samples, cfg.batch);

    TrainRunResult result;
    result.ledger.model = sizes;
    result.model.net = net;

    std::vector<PromptSet> sets;
    {
        detail::PhaseTimer timer{result.phase_seconds, "prompts"};
        for (const auto& shard : shards) {
            PromptSet set =
                opts.mode == PromptMode::ClassLevel
                    ? gen_class_prompts(shard, train)
                    : gen_entity_prompts(shard, train, opts.clusters_per_class,
                                         derive_seed(seed, seed_salt::kPrompt, shard.client_id));
            result.ledger.record_prompt_upload(shard.client_id, set.byte_length);
            sets.push_back(std::move(set));
        }
    }
    const PromptSet merged = aggregate_prompts(sets);

    {
        detail::PhaseTimer timer{result.phase_seconds, "synthesis"};
        switch (opts.method) {
            case SynthMethod::Direct:
                result.synthetic = synth_direct(merged, opts.prior, cfg.synth_samples, seed);
                break;
            case SynthMethod::Diffusion:
                result.synthetic =
                    synth_diffusion(merged, opts.prior, cfg.synth_samples, opts.diffusion, seed);
                break;
            case SynthMethod::Gan:
                result.synthetic = synth_gan(merged, opts.prior, cfg.synth_samples, opts.gan, seed);
                break;
        }
    }

    {
        detail::PhaseTimer timer{result.phase_seconds, "server_train"};
        ParamVector params = init_params(net, derive_seed(seed, seed_salt::kInit));
        Rng rng(derive_seed(seed, seed_salt::kServerTrain));
        const auto indices = detail::all_indices(result.synthetic->data.labels.size());
        LocalResult server = local_train(net, std::move(params), result.synthetic->data, indices,
                                         cfg.server_epochs, cfg.lr, cfg.momentum, cfg.batch, rng);
        result.model.params = std::move(server.params);
        result.total_steps = server.steps;

        RoundReport report;
        report.round = 1;
        for (const auto& shard : shards) report.selected.push_back(shard.client_id);
        report.mean_local_loss = server.final_loss;
        report.cumulative_bytes = result.ledger.total_bytes();
        result.reports.push_back(std::move(report));
    }
    {
        detail::PhaseTimer timer{result.phase_seconds, "evaluate"};
        result.final_train = evaluate(net, result.model.params, result.synthetic->data);
        result.final_test = evaluate(net, result.model.params, test);
        result.reports.back().train_eval = result.final_train;
        result.reports.back().test_eval = result.final_test;
    }
    return result;
}

} // namespace fgl
