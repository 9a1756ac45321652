#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "fgl/core.hpp"
#include "fgl/dataset.hpp"

namespace fgl {

enum class PartitionMode { IID, Dirichlet };

struct PartitionSpec {
    PartitionMode mode = PartitionMode::IID;
    double alpha = 0.5;                // Dirichlet concentration
    std::size_t min_samples = 1;       // per client
    std::uint64_t seed = 0;

    void validate() const {
        if (mode == PartitionMode::Dirichlet && !(alpha > 0.0))
            fail("partition: alpha must be positive, got %g", alpha);
    }
};

struct ClientShard {
    std::uint32_t client_id = 0;
    std::vector<std::size_t> indices; // sorted, unique, in range

    std::size_t n() const { return indices.size(); }
};

namespace detail {

// Largest-remainder rounding of proportions to integer counts summing to n.
// Ties go to the lowest index.
inline std::vector<std::size_t> largest_remainder(const std::vector<double>& props,
                                                  std::size_t n) {
    const std::size_t k = props.size();
    std::vector<std::size_t> counts(k, 0);
    std::vector<std::pair<double, std::size_t>> remainders(k);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double exact = props[i] * static_cast<double>(n);
        counts[i] = static_cast<std::size_t>(exact);
        remainders[i] = {exact - static_cast<double>(counts[i]), i};
        assigned += counts[i];
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned)
        counts[remainders[i % k].second]++;
    return counts;
}

} // namespace detail

// Splits a dataset into K disjoint shards covering every index.
//
// IID: a seeded shuffle dealt into near-equal blocks (sizes differ by at most
// one). Dirichlet: for each class, per-client proportions ~ Dir(alpha * 1_K)
// rounded by largest remainder; redrawn (fresh sub-seed) up to 100 times until
// every shard has at least min_samples. Shard index lists come back sorted.
inline std::vector<ClientShard> partition(const LabeledDataset& data, const PartitionSpec& spec,
                                          std::size_t k) {
    spec.validate();
    data.validate();
    const std::size_t n = data.size();
    if (k < 1) fail("partition: need at least one client");
    if (k > n) fail("partition: %zu clients but only %zu samples", k, n);
    if (spec.min_samples * k > n)
        fail("partition: min_samples=%zu unsatisfiable with %zu clients and %zu samples",
             spec.min_samples, k, n);

    std::vector<ClientShard> shards(k);
    for (std::size_t i = 0; i < k; ++i) shards[i].client_id = static_cast<std::uint32_t>(i);

    if (spec.mode == PartitionMode::IID) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(spec.seed, seed_salt::kPartition));
        rng.shuffle(order);
        const std::size_t base = n / k, extra = n % k;
        std::size_t pos = 0;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t take = base + (i < extra ? 1 : 0);
            shards[i].indices.assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                     order.begin() + static_cast<std::ptrdiff_t>(pos + take));
            std::sort(shards[i].indices.begin(), shards[i].indices.end());
            pos += take;
        }
        return shards;
    }

    // Per-class index pools, shuffled once per attempt.
    std::vector<std::vector<std::size_t>> by_class(data.num_classes);
    for (std::size_t i = 0; i < n; ++i)
        by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);

    constexpr std::size_t kMaxAttempts = 100;
    for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Rng rng(derive_seed(spec.seed, seed_salt::kPartition, attempt));
        for (auto& shard : shards) shard.indices.clear();
        for (std::size_t c = 0; c < data.num_classes; ++c) {
            auto pool = by_class[c];
            if (pool.empty()) continue;
            rng.shuffle(pool);
            const auto props = rng.dirichlet(spec.alpha, k);
            const auto counts = detail::largest_remainder(props, pool.size());
            std::size_t pos = 0;
            for (std::size_t i = 0; i < k; ++i) {
                shards[i].indices.insert(shards[i].indices.end(), pool.begin() + static_cast<std::ptrdiff_t>(pos),
                                         pool.begin() + static_cast<std::ptrdiff_t>(pos + counts[i]));
                pos += counts[i];
            }
        }
        const bool ok = std::all_of(shards.begin(), shards.end(), [&](const ClientShard& s) {
            return s.indices.size() >= spec.min_samples && !s.indices.empty();
        });
        if (ok) {
            for (auto& shard : shards) std::sort(shard.indices.begin(), shard.indices.end());
            return shards;
        }
    }
    fail("partition: could not satisfy min_samples=%zu after %zu Dirichlet redraws",
         spec.min_samples, kMaxAttempts);
}

// ---------------------------------------------------------------------------
// Heterogeneous federated scenario
// ---------------------------------------------------------------------------

// Per-(client, class) shifted mixtures: every client sees each class through a
// private mean offset drawn from N(0, shift_sigma^2 I). The test set is drawn
// from the population mixture (client picked uniformly, then its shifted
// class-conditional). Shards are the per-client blocks of the train set.
struct FederatedGmmData {
    LabeledDataset train;
    LabeledDataset test;
    std::vector<ClientShard> shards;
    GmmSpec base; // the unshifted spec; what a foundation prior would know
};

inline FederatedGmmData gen_gmm_hetero(const GmmSpec& base, std::size_t clients,
                                       std::size_t n_per_client, std::size_t test_n,
                                       double shift_sigma, std::uint64_t seed) {
    base.validate();
    if (clients == 0 || n_per_client == 0 || test_n == 0)
        fail("gen_gmm_hetero: counts must be positive");
    const std::size_t d = base.dim();

    // One shifted spec per client.
    std::vector<GmmSpec> shifted(clients, base);
    Rng shift_rng(derive_seed(seed, seed_salt::kDataTrain, 0x5F));
    for (std::size_t k = 0; k < clients; ++k)
        for (auto& cls : shifted[k].classes)
            for (auto& comp : cls.components)
                for (std::size_t i = 0; i < d; ++i)
                    comp.mean[i] += shift_sigma * shift_rng.gaussian();

    FederatedGmmData out;
    out.base = base;
    out.shards.resize(clients);

    const std::size_t total = clients * n_per_client;
    out.train.features = Tensor::zeros({total, d});
    out.train.labels.resize(total);
    out.train.num_classes = base.classes.size();
    out.train.class_names = default_class_names(base.classes.size());
    for (std::size_t k = 0; k < clients; ++k) {
        LabeledDataset block =
            gen_gmm(shifted[k], n_per_client, derive_seed(seed, seed_salt::kDataTrain, k));
        out.shards[k].client_id = static_cast<std::uint32_t>(k);
        for (std::size_t i = 0; i < n_per_client; ++i) {
            const std::size_t row = k * n_per_client + i;
            out.shards[k].indices.push_back(row);
            out.train.labels[row] = block.labels[i];
            std::copy(block.features.row(i), block.features.row(i) + d,
                      out.train.features.row(row));
        }
    }

    out.test.features = Tensor::zeros({test_n, d});
    out.test.labels.resize(test_n);
    out.test.num_classes = base.classes.size();
    out.test.class_names = default_class_names(base.classes.size());
    Rng test_rng(derive_seed(seed, seed_salt::kDataTest));
    for (std::size_t i = 0; i < test_n; ++i) {
        const std::size_t k = static_cast<std::size_t>(test_rng.below(clients));
        const std::size_t c = static_cast<std::size_t>(test_rng.below(base.classes.size()));
        const auto& comps = shifted[k].classes[c].components;
        const std::size_t j = detail::pick_weighted(test_rng, comps);
        detail::sample_component(test_rng, comps[j], out.test.features.row(i));
        out.test.labels[i] = static_cast<int>(c);
    }
    return out;
}

} // namespace fgl
