#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgl/core.hpp"

namespace fgl {

// Byte accounting for the client-server traffic each protocol generates.
// Nothing here moves real bytes; the ledger is the simulator's network.

struct MessageSizeModel {
    std::uint64_t bytes_per_param = 4; // f32 on the wire
    std::uint64_t header_bytes = 64;   // framing, routing, auth

    std::uint64_t model_message_bytes(std::uint64_t param_count) const {
        return header_bytes + bytes_per_param * param_count;
    }
};

enum class Direction { Uplink, Downlink };

inline const char* direction_name(Direction d) {
    return d == Direction::Uplink ? "uplink" : "downlink";
}

struct CommEntry {
    std::uint32_t round = 0;
    std::uint32_t client = 0;
    Direction direction = Direction::Uplink;
    std::string kind; // "model" | "prompt"
    std::uint64_t bytes = 0;
};

struct CommLedger {
    MessageSizeModel model;
    std::vector<CommEntry> entries;

    void record_model_exchange(std::uint32_t round, std::uint32_t client, Direction dir,
                               std::uint64_t param_count) {
        if (param_count == 0) fail("ledger: model exchange with zero parameters");
        entries.push_back({round, client, dir, "model", model.model_message_bytes(param_count)});
    }

    // A prompt entry is the serialized payload itself; the wire format already
    // carries its own header, so nothing is added on top.
    void record_prompt_upload(std::uint32_t client, std::uint64_t payload_bytes) {
        entries.push_back({0, client, Direction::Uplink, "prompt", payload_bytes});
    }

    std::uint64_t total_bytes() const {
        std::uint64_t total = 0;
        for (const auto& e : entries) total += e.bytes;
        return total;
    }

    std::uint64_t total_bytes(Direction dir) const {
        std::uint64_t total = 0;
        for (const auto& e : entries)
            if (e.direction == dir) total += e.bytes;
        return total;
    }

    std::uint64_t total_bytes_kind(const std::string& kind) const {
        std::uint64_t total = 0;
        for (const auto& e : entries)
            if (e.kind == kind) total += e.bytes;
        return total;
    }

    std::size_t count_kind(const std::string& kind) const {
        std::size_t n = 0;
        for (const auto& e : entries)
            if (e.kind == kind) n++;
        return n;
    }
};

inline void save_ledger_csv(const CommLedger& ledger, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot write %s", path.c_str());
    out << "round,client,direction,kind,bytes\n";
    for (const auto& e : ledger.entries)
        out << e.round << "," << e.client << "," << direction_name(e.direction) << "," << e.kind
            << "," << e.bytes << "\n";
    if (!out) fail("write failed for %s", path.c_str());
}

// ---------------------------------------------------------------------------
// Closed forms
//
// FedAvg moves the full model down and back up for every selected client in
// every round. The one-shot protocol moves one prompt payload up per client,
// ever. A recorded ledger must reproduce these totals exactly.
// ---------------------------------------------------------------------------

inline std::uint64_t fedavg_total_bytes(std::uint64_t param_count, std::uint64_t rounds,
                                        std::uint64_t clients_per_round,
                                        const MessageSizeModel& model = {}) {
    return 2 * rounds * clients_per_round * model.model_message_bytes(param_count);
}

inline std::uint64_t fgl_total_bytes(const std::vector<std::uint64_t>& prompt_payload_bytes) {
    std::uint64_t total = 0;
    for (std::uint64_t payload : prompt_payload_bytes) total += payload;
    return total;
}

// ---------------------------------------------------------------------------
// Protocol comparison over recorded ledgers
// ---------------------------------------------------------------------------

struct ProtocolComparison {
    std::uint64_t fgl_total = 0;
    std::uint64_t fedavg_total = 0;
    std::uint64_t fgl_uplink = 0;
    std::uint64_t fedavg_uplink = 0;
    double ratio = 0.0;                             // fgl_total / fedavg_total
    std::vector<std::uint64_t> fedavg_cumulative;   // total bytes after each round
};

inline ProtocolComparison compare_protocols(const CommLedger& fgl, const CommLedger& fedavg) {
    if (fedavg.entries.empty()) fail("compare_protocols: FedAvg ledger is empty");
    ProtocolComparison cmp;
    cmp.fgl_total = fgl.total_bytes();
    cmp.fedavg_total = fedavg.total_bytes();
    cmp.fgl_uplink = fgl.total_bytes(Direction::Uplink);
    cmp.fedavg_uplink = fedavg.total_bytes(Direction::Uplink);
    cmp.ratio = static_cast<double>(cmp.fgl_total) / static_cast<double>(cmp.fedavg_total);

    std::uint32_t last_round = 0;
    for (const auto& e : fedavg.entries) last_round = std::max(last_round, e.round);
    cmp.fedavg_cumulative.assign(last_round + 1, 0);
    for (const auto& e : fedavg.entries) cmp.fedavg_cumulative[e.round] += e.bytes;
    std::uint64_t acc = 0;
    for (auto& b : cmp.fedavg_cumulative) {
        acc += b;
        b = acc;
    }
    return cmp;
}

inline void save_comparison_json(const ProtocolComparison& cmp, const std::string& path) {
    nlohmann::json j;
    j["fgl_total_bytes"] = cmp.fgl_total;
    j["fedavg_total_bytes"] = cmp.fedavg_total;
    j["fgl_uplink_bytes"] = cmp.fgl_uplink;
    j["fedavg_uplink_bytes"] = cmp.fedavg_uplink;
    j["bytes_ratio"] = cmp.ratio;
    j["fedavg_cumulative_bytes"] = cmp.fedavg_cumulative;
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot write %s", path.c_str());
    out << j.dump(2) << "\n";
    if (!out) fail("write failed for %s", path.c_str());
}

// ---------------------------------------------------------------------------
// Wall-clock cost model
//
// Transfer time is modeled from ledger bytes; compute time is whatever the
// caller measured. Round latency charges one RTT per protocol round.
// ---------------------------------------------------------------------------

struct CostModel {
    double seconds_per_megabyte = 0.08; // ~100 Mbit/s effective
    double round_latency_seconds = 0.05;

    void validate() const {
        if (!(seconds_per_megabyte > 0.0))
            fail("cost model: seconds_per_megabyte must be positive");
        if (!(round_latency_seconds >= 0.0))
            fail("cost model: round_latency_seconds must be nonnegative");
    }
};

struct CostEstimate {
    double transfer_seconds = 0.0;
    double latency_seconds = 0.0;
    double compute_seconds = 0.0;
    double total_seconds = 0.0;
};

inline CostEstimate estimate_costs(const CommLedger& ledger, const CostModel& cost,
                                   double measured_compute_seconds) {
    cost.validate();
    if (!(measured_compute_seconds >= 0.0))
        fail("estimate_costs: measured compute seconds must be nonnegative");
    CostEstimate est;
    est.transfer_seconds =
        static_cast<double>(ledger.total_bytes()) / (1024.0 * 1024.0) * cost.seconds_per_megabyte;
    std::set<std::uint32_t> rounds;
    for (const auto& e : ledger.entries) rounds.insert(e.round);
    est.latency_seconds = cost.round_latency_seconds * static_cast<double>(rounds.size());
    est.compute_seconds = measured_compute_seconds;
    est.total_seconds = est.transfer_seconds + est.latency_seconds + est.compute_seconds;
    return est;
}

} // namespace fgl
