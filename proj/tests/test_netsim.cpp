#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fgl/netsim.hpp"

using namespace fgl;

namespace {

CommLedger fedavg_ledger(std::uint32_t rounds, std::uint32_t clients, std::uint64_t params) {
    CommLedger ledger;
    for (std::uint32_t t = 1; t <= rounds; ++t)
        for (std::uint32_t k = 0; k < clients; ++k) {
            ledger.record_model_exchange(t, k, Direction::Downlink, params);
            ledger.record_model_exchange(t, k, Direction::Uplink, params);
        }
    return ledger;
}

} // namespace

TEST_CASE("model messages are params times four plus header") {
    MessageSizeModel model;
    REQUIRE(model.model_message_bytes(1) == 68);
    REQUIRE(model.model_message_bytes(999) == 999 * 4 + 64);
    MessageSizeModel fat{8, 128};
    REQUIRE(fat.model_message_bytes(10) == 208);
}

TEST_CASE("zero-parameter exchanges are rejected") {
    CommLedger ledger;
    REQUIRE_THROWS_AS(ledger.record_model_exchange(1, 0, Direction::Uplink, 0), Error);
}

TEST_CASE("a fedavg round writes two entries per selected client") {
    const auto ledger = fedavg_ledger(1, 10, 100);
    REQUIRE(ledger.entries.size() == 20);
    REQUIRE(ledger.count_kind("model") == 20);
    REQUIRE(ledger.count_kind("prompt") == 0);
    REQUIRE(ledger.total_bytes(Direction::Uplink) == ledger.total_bytes(Direction::Downlink));
}

TEST_CASE("recorded ledgers reproduce the closed form exactly") {
    const std::uint64_t params = 1234;
    for (std::uint32_t rounds : {1u, 7u, 50u})
        for (std::uint32_t clients : {1u, 3u, 10u}) {
            const auto ledger = fedavg_ledger(rounds, clients, params);
            REQUIRE(ledger.total_bytes() == fedavg_total_bytes(params, rounds, clients));
        }
}

TEST_CASE("prompt entries carry the payload byte count verbatim") {
    CommLedger ledger;
    ledger.record_prompt_upload(3, 161);
    ledger.record_prompt_upload(4, 1024);
    REQUIRE(ledger.entries.size() == 2);
    REQUIRE(ledger.entries[0].bytes == 161);
    REQUIRE(ledger.entries[0].direction == Direction::Uplink);
    REQUIRE(ledger.entries[0].kind == "prompt");
    REQUIRE(ledger.total_bytes() == 161 + 1024);
    REQUIRE(ledger.total_bytes() == fgl_total_bytes({161, 1024}));
}

TEST_CASE("totals ignore entry order") {
    auto ledger = fedavg_ledger(3, 4, 77);
    ledger.record_prompt_upload(0, 500);
    const auto before = ledger.total_bytes();
    const auto before_up = ledger.total_bytes(Direction::Uplink);

    std::mt19937 gen(42);
    std::shuffle(ledger.entries.begin(), ledger.entries.end(), gen);
    REQUIRE(ledger.total_bytes() == before);
    REQUIRE(ledger.total_bytes(Direction::Uplink) == before_up);
    REQUIRE(ledger.total_bytes_kind("prompt") == 500);
}

TEST_CASE("ledger csv lists one line per entry") {
    CommLedger ledger;
    ledger.record_model_exchange(2, 5, Direction::Downlink, 10);
    ledger.record_prompt_upload(1, 99);
    const std::string path = "/tmp/fgl_test_ledger.csv";
    save_ledger_csv(ledger, path);

    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "round,client,direction,kind,bytes");
    std::getline(in, line);
    REQUIRE(line == "2,5,downlink,model,104");
    std::getline(in, line);
    REQUIRE(line == "0,1,uplink,prompt,99");
    REQUIRE(!std::getline(in, line));
    std::remove(path.c_str());
}

TEST_CASE("protocol comparison of a ledger against itself is unity") {
    const auto ledger = fedavg_ledger(5, 2, 50);
    const auto cmp = compare_protocols(ledger, ledger);
    REQUIRE(cmp.ratio == 1.0);
    REQUIRE(cmp.fgl_total == cmp.fedavg_total);
    REQUIRE(cmp.fgl_uplink == cmp.fedavg_uplink);
}

TEST_CASE("comparison builds the cumulative byte series per round") {
    CommLedger fgl;
    fgl.record_prompt_upload(0, 100);
    fgl.record_prompt_upload(1, 60);

    const auto fedavg = fedavg_ledger(3, 2, 10); // 104 bytes per message
    const auto cmp = compare_protocols(fgl, fedavg);

    REQUIRE(cmp.fgl_total == 160);
    const std::uint64_t per_round = 4 * 104;
    REQUIRE(cmp.fedavg_total == 3 * per_round);
    REQUIRE(cmp.ratio == Catch::Approx(160.0 / double(3 * per_round)));

    // Rounds are 1-based; index 0 holds whatever happened before round 1.
    REQUIRE(cmp.fedavg_cumulative.size() == 4);
    REQUIRE(cmp.fedavg_cumulative[0] == 0);
    REQUIRE(cmp.fedavg_cumulative[1] == per_round);
    REQUIRE(cmp.fedavg_cumulative[2] == 2 * per_round);
    REQUIRE(cmp.fedavg_cumulative[3] == 3 * per_round);

    CommLedger empty;
    REQUIRE_THROWS_WITH(compare_protocols(fgl, empty),
                        Catch::Matchers::ContainsSubstring("empty"));
}

TEST_CASE("comparison json carries every headline number") {
    const auto fedavg = fedavg_ledger(2, 1, 10);
    CommLedger fgl;
    fgl.record_prompt_upload(0, 50);
    const auto cmp = compare_protocols(fgl, fedavg);

    const std::string path = "/tmp/fgl_test_comparison.json";
    save_comparison_json(cmp, path);
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    REQUIRE(j.at("fgl_total_bytes") == 50);
    REQUIRE(j.at("fedavg_total_bytes") == cmp.fedavg_total);
    REQUIRE(j.at("fgl_uplink_bytes") == 50);
    REQUIRE(j.at("fedavg_uplink_bytes") == cmp.fedavg_uplink);
    REQUIRE(j.at("bytes_ratio").get<double>() == Catch::Approx(cmp.ratio));
    REQUIRE(j.at("fedavg_cumulative_bytes").size() == cmp.fedavg_cumulative.size());
    std::remove(path.c_str());
}

TEST_CASE("transfer time scales with megabytes moved") {
    // 10 MiB at 1 second per MiB is exactly 10 seconds of transfer.
    CommLedger ledger;
    MessageSizeModel raw{1, 0};
    ledger.model = raw;
    ledger.record_model_exchange(1, 0, Direction::Uplink, 10 * 1024 * 1024);

    CostModel cost;
    cost.seconds_per_megabyte = 1.0;
    cost.round_latency_seconds = 0.0;
    const auto est = estimate_costs(ledger, cost, 0.0);
    REQUIRE(est.transfer_seconds == Catch::Approx(10.0).epsilon(1e-12));
    REQUIRE(est.total_seconds == Catch::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("latency counts distinct protocol rounds") {
    auto ledger = fedavg_ledger(5, 3, 10);
    CostModel cost;
    cost.seconds_per_megabyte = 0.5;
    cost.round_latency_seconds = 0.1;
    const auto est = estimate_costs(ledger, cost, 2.0);
    REQUIRE(est.latency_seconds == Catch::Approx(0.5)); // 5 distinct rounds
    REQUIRE(est.compute_seconds == 2.0);
    REQUIRE(est.total_seconds ==
            Catch::Approx(est.transfer_seconds + est.latency_seconds + est.compute_seconds));

    // One-shot uploads all land in round zero: one latency charge.
    CommLedger oneshot;
    for (std::uint32_t k = 0; k < 7; ++k) oneshot.record_prompt_upload(k, 100);
    const auto est2 = estimate_costs(oneshot, cost, 0.0);
    REQUIRE(est2.latency_seconds == Catch::Approx(0.1));
}

TEST_CASE("cost model validation") {
    CostModel bad;
    bad.seconds_per_megabyte = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), Error);
    bad = {};
    bad.round_latency_seconds = -1.0;
    REQUIRE_THROWS_AS(bad.validate(), Error);
    bad = {};
    bad.validate();

    CommLedger ledger;
    ledger.record_prompt_upload(0, 10);
    REQUIRE_THROWS_AS(estimate_costs(ledger, CostModel{}, -1.0), Error);
}
