#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fgl/core.hpp"
#include "fgl/dataset.hpp"
#include "fgl/partition.hpp"

namespace fgl {

// Prompts are the only payload a client ever uploads. Class-level prompts
// summarize the label histogram; entity-level prompts add per-class cluster
// sufficient statistics so the server can reproduce local structure.

enum class PromptMode : std::uint8_t { ClassLevel = 0, EntityLevel = 1 };

struct ClusterStat {
    std::uint32_t count = 0;
    std::vector<double> mean;
    std::vector<double> var; // per-dimension, >= 0
};

struct ClassLevelPrompt {
    std::uint16_t class_id = 0;
    std::string descriptor;
    std::uint32_t count = 0;
};

struct EntityLevelPrompt {
    std::uint16_t class_id = 0;
    std::string descriptor;
    std::vector<ClusterStat> clusters;

    std::uint32_t count() const {
        std::uint32_t total = 0;
        for (const auto& c : clusters) total += c.count;
        return total;
    }
};

struct PromptSet {
    std::optional<std::uint32_t> client_id; // absent after aggregation
    PromptMode mode = PromptMode::ClassLevel;
    std::vector<ClassLevelPrompt> class_prompts;
    std::vector<EntityLevelPrompt> entity_prompts;
    std::size_t byte_length = 0; // length of serialize_prompts(*this)

    std::size_t prompt_count() const {
        return mode == PromptMode::ClassLevel ? class_prompts.size() : entity_prompts.size();
    }

    // Per-class sample counts across all prompts in the set.
    std::map<std::uint16_t, std::uint64_t> class_counts() const {
        std::map<std::uint16_t, std::uint64_t> counts;
        if (mode == PromptMode::ClassLevel)
            for (const auto& p : class_prompts) counts[p.class_id] += p.count;
        else
            for (const auto& p : entity_prompts) counts[p.class_id] += p.count();
        return counts;
    }
};

// ---------------------------------------------------------------------------
// Wire format (little-endian, bit-exact)
//
//   header: magic "FGLP" | version u16 | mode u8 | prompt count u32
//   class record:  class id u16 | count u32 | descriptor (u16 length + UTF-8)
//   entity record: class record fields | cluster count u16 |
//                  per cluster: count u32 | dim u16 | mean f32 x dim | var f32 x dim
//
// Means and variances travel as f32 for payload realism; this is lossy
// against the in-memory f64 statistics.
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kPromptWireVersion = 1;
inline constexpr std::size_t kPromptHeaderBytes = 11;

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& out, double v) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

inline void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
    if (s.size() > 0xFFFF) fail("prompt descriptor longer than 65535 bytes");
    put_u16(out, static_cast<std::uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

struct Reader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t pos = 0;

    void need(std::size_t n) {
        if (pos + n > size)
            fail("prompt payload truncated at byte %zu (need %zu more)", pos, n);
    }
    std::uint16_t u16() {
        need(2);
        const std::uint16_t v = static_cast<std::uint16_t>(data[pos]) |
                                static_cast<std::uint16_t>(data[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    double f32() {
        const std::uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return static_cast<double>(f);
    }
    std::string str() {
        const std::uint16_t len = u16();
        need(len);
        std::string s(reinterpret_cast<const char*>(data + pos), len);
        pos += len;
        return s;
    }
};

} // namespace detail

inline std::vector<std::uint8_t> serialize_prompts(const PromptSet& set) {
    std::vector<std::uint8_t> out;
    out.push_back('F');
    out.push_back('G');
    out.push_back('L');
    out.push_back('P');
    detail::put_u16(out, kPromptWireVersion);
    out.push_back(static_cast<std::uint8_t>(set.mode));
    detail::put_u32(out, static_cast<std::uint32_t>(set.prompt_count()));
    if (set.mode == PromptMode::ClassLevel) {
        for (const auto& p : set.class_prompts) {
            detail::put_u16(out, p.class_id);
            detail::put_u32(out, p.count);
            detail::put_string(out, p.descriptor);
        }
    } else {
        for (const auto& p : set.entity_prompts) {
            detail::put_u16(out, p.class_id);
            detail::put_u32(out, p.count());
            detail::put_string(out, p.descriptor);
            detail::put_u16(out, static_cast<std::uint16_t>(p.clusters.size()));
            for (const auto& c : p.clusters) {
                detail::put_u32(out, c.count);
                detail::put_u16(out, static_cast<std::uint16_t>(c.mean.size()));
                for (double v : c.mean) detail::put_f32(out, v);
                for (double v : c.var) detail::put_f32(out, v);
            }
        }
    }
    return out;
}

inline PromptSet deserialize_prompts(const std::vector<std::uint8_t>& bytes) {
    detail::Reader r{bytes.data(), bytes.size()};
    r.need(4);
    if (std::memcmp(bytes.data(), "FGLP", 4) != 0) fail("prompt payload: bad magic");
    r.pos = 4;
    const std::uint16_t version = r.u16();
    if (version != kPromptWireVersion)
        fail("prompt payload: unsupported version %u", version);
    r.need(1);
    const std::uint8_t mode = r.data[r.pos++];
    if (mode > 1) fail("prompt payload: unknown mode %u", mode);
    const std::uint32_t count = r.u32();

    PromptSet set;
    set.mode = static_cast<PromptMode>(mode);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (set.mode == PromptMode::ClassLevel) {
            ClassLevelPrompt p;
            p.class_id = r.u16();
            p.count = r.u32();
            p.descriptor = r.str();
            set.class_prompts.push_back(std::move(p));
        } else {
            EntityLevelPrompt p;
            p.class_id = r.u16();
            const std::uint32_t declared = r.u32();
            p.descriptor = r.str();
            const std::uint16_t clusters = r.u16();
            for (std::uint16_t j = 0; j < clusters; ++j) {
                ClusterStat c;
                c.count = r.u32();
                const std::uint16_t dim = r.u16();
                c.mean.resize(dim);
                c.var.resize(dim);
                for (auto& v : c.mean) v = r.f32();
                for (auto& v : c.var) v = r.f32();
                p.clusters.push_back(std::move(c));
            }
            if (p.count() != declared)
                fail("prompt payload: class %u cluster counts sum to %u, header says %u",
                     p.class_id, p.count(), declared);
            set.entity_prompts.push_back(std::move(p));
        }
    }
    if (r.pos != r.size) fail("prompt payload: %zu trailing bytes", r.size - r.pos);
    set.byte_length = bytes.size();
    return set;
}

// ---------------------------------------------------------------------------
// Client-side generation
// ---------------------------------------------------------------------------

// One prompt per class present on the shard; counts are the shard's label
// histogram. Classes the client has never seen emit nothing.
inline PromptSet gen_class_prompts(const ClientShard& shard, const LabeledDataset& data) {
    if (shard.indices.empty()) fail("gen_class_prompts: shard %u is empty", shard.client_id);
    std::map<std::uint16_t, std::uint32_t> counts;
    for (std::size_t i : shard.indices)
        counts[static_cast<std::uint16_t>(data.labels[i])]++;
    PromptSet set;
    set.client_id = shard.client_id;
    set.mode = PromptMode::ClassLevel;
    for (const auto& [cls, count] : counts)
        set.class_prompts.push_back({cls, data.class_names[cls], count});
    set.byte_length = serialize_prompts(set).size();
    return set;
}

namespace detail {

// Lloyd's k-means with k-means++ style seeding and a fixed iteration budget.
// Returns per-cluster (count, mean, population variance); empty clusters are
// dropped.
inline std::vector<ClusterStat> kmeans_stats(const std::vector<const double*>& points,
                                             std::size_t dim, std::size_t k, Rng& rng,
                                             std::size_t iterations = 25) {
    const std::size_t n = points.size();
    k = std::min(k, n);

    // Seeding: first centroid uniform, then D^2-weighted picks.
    std::vector<std::vector<double>> centroids;
    centroids.reserve(k);
    std::vector<double> d2(n, 0.0);
    {
        const std::size_t first = static_cast<std::size_t>(rng.below(n));
        centroids.emplace_back(points[first], points[first] + dim);
        while (centroids.size() < k) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double best = 1e300;
                for (const auto& c : centroids) {
                    double dist = 0.0;
                    for (std::size_t j = 0; j < dim; ++j) {
                        const double diff = points[i][j] - c[j];
                        dist += diff * diff;
                    }
                    best = std::min(best, dist);
                }
                d2[i] = best;
                total += best;
            }
            if (total <= 0.0) break; // all remaining points coincide with a centroid
            double pick = rng.uniform() * total;
            std::size_t chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                pick -= d2[i];
                if (pick <= 0.0) {
                    chosen = i;
                    break;
                }
            }
            centroids.emplace_back(points[chosen], points[chosen] + dim);
        }
    }
    const std::size_t kk = centroids.size();

    std::vector<std::size_t> assign(n, 0);
    for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = 1e300;
            std::size_t arg = 0;
            for (std::size_t c = 0; c < kk; ++c) {
                double dist = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                    const double diff = points[i][j] - centroids[c][j];
                    dist += diff * diff;
                }
                if (dist < best) {
                    best = dist;
                    arg = c;
                }
            }
            assign[i] = arg;
        }
        std::vector<std::vector<double>> sums(kk, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(kk, 0);
        for (std::size_t i = 0; i < n; ++i) {
            counts[assign[i]]++;
            for (std::size_t j = 0; j < dim; ++j) sums[assign[i]][j] += points[i][j];
        }
        for (std::size_t c = 0; c < kk; ++c)
            if (counts[c] > 0)
                for (std::size_t j = 0; j < dim; ++j)
                    centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }

    std::vector<ClusterStat> stats;
    for (std::size_t c = 0; c < kk; ++c) {
        ClusterStat s;
        s.mean.assign(dim, 0.0);
        s.var.assign(dim, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (assign[i] != c) continue;
            s.count++;
            for (std::size_t j = 0; j < dim; ++j) s.mean[j] += points[i][j];
        }
        if (s.count == 0) continue;
        for (std::size_t j = 0; j < dim; ++j) s.mean[j] /= static_cast<double>(s.count);
        for (std::size_t i = 0; i < n; ++i) {
            if (assign[i] != c) continue;
            for (std::size_t j = 0; j < dim; ++j) {
                const double diff = points[i][j] - s.mean[j];
                s.var[j] += diff * diff;
            }
        }
        for (std::size_t j = 0; j < dim; ++j) s.var[j] /= static_cast<double>(s.count);
        stats.push_back(std::move(s));
    }
    return stats;
}

} // namespace detail

// Per class present on the shard, cluster statistics from a seeded k-means
// over the client's samples of that class. Flat feature tensors only.
inline PromptSet gen_entity_prompts(const ClientShard& shard, const LabeledDataset& data,
                                    std::size_t clusters_per_class, std::uint64_t seed) {
    if (shard.indices.empty()) fail("gen_entity_prompts: shard %u is empty", shard.client_id);
    if (clusters_per_class == 0) fail("gen_entity_prompts: clusters_per_class must be >= 1");
    if (data.features.rank() != 2)
        fail("gen_entity_prompts: needs flat features, got rank %zu", data.features.rank());
    const std::size_t dim = data.features.dim(1);

    std::map<std::uint16_t, std::vector<const double*>> by_class;
    for (std::size_t i : shard.indices)
        by_class[static_cast<std::uint16_t>(data.labels[i])].push_back(data.features.row(i));

    PromptSet set;
    set.client_id = shard.client_id;
    set.mode = PromptMode::EntityLevel;
    for (auto& [cls, points] : by_class) {
        EntityLevelPrompt p;
        p.class_id = cls;
        p.descriptor = data.class_names[cls];
        Rng rng(derive_seed(seed, seed_salt::kPrompt, cls));
        p.clusters = detail::kmeans_stats(points, dim, clusters_per_class, rng);
        set.entity_prompts.push_back(std::move(p));
    }
    set.byte_length = serialize_prompts(set).size();
    return set;
}

// ---------------------------------------------------------------------------
// Server-side aggregation
// ---------------------------------------------------------------------------

// Class-level: merge by class id, summing counts. Entity-level: concatenate
// all cluster statistics, grouped by class id. Client ids never survive.
inline PromptSet aggregate_prompts(const std::vector<PromptSet>& sets) {
    if (sets.empty()) fail("aggregate_prompts: no prompt sets");
    const PromptMode mode = sets.front().mode;
    for (const auto& s : sets)
        if (s.mode != mode) fail("aggregate_prompts: mixed prompt modes");

    PromptSet out;
    out.mode = mode;
    if (mode == PromptMode::ClassLevel) {
        std::map<std::uint16_t, ClassLevelPrompt> merged;
        for (const auto& s : sets)
            for (const auto& p : s.class_prompts) {
                auto [it, fresh] = merged.try_emplace(p.class_id, p);
                if (!fresh) it->second.count += p.count;
            }
        for (auto& [cls, p] : merged) out.class_prompts.push_back(std::move(p));
    } else {
        std::map<std::uint16_t, EntityLevelPrompt> merged;
        for (const auto& s : sets)
            for (const auto& p : s.entity_prompts) {
                auto [it, fresh] = merged.try_emplace(p.class_id, p);
                if (!fresh)
                    it->second.clusters.insert(it->second.clusters.end(), p.clusters.begin(),
                                               p.clusters.end());
            }
        for (auto& [cls, p] : merged) out.entity_prompts.push_back(std::move(p));
    }
    out.byte_length = serialize_prompts(out).size();
    return out;
}

} // namespace fgl
