#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "v2g/simulator.hpp"

using namespace v2g;

namespace {

ScenarioConfig small_scenario(std::size_t n, std::uint64_t seed, std::uint32_t horizon = 24) {
    ScenarioConfig c;
    c.fleet = generate_fleet(n, seed);
    c.horizon = horizon;
    c.seed = seed;
    c.threads = 1;
    return c;
}

std::string csv_of(const RunReport& r) {
    std::ostringstream out;
    write_report_csv(out, r);
    return out.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("v2g_sim_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("zero-EV horizon only pays the auxiliary shortfall") {
    ScenarioConfig c;
    c.horizon = 12;
    c.threads = 1;
    const auto report = run_horizon(c);
    REQUIRE(report.slots.size() == 12);
    double expected = 0.0;
    for (std::uint32_t k = 0; k < 12; ++k) {
        const auto& s = report.slots[k];
        const double price = price_at(c.start_slot + k).first;
        const double shortfall = c.aux.e_limit[k] * 2.0 * price;
        CHECK(s.breakdown.total == doctest::Approx(-shortfall).epsilon(1e-12));
        CHECK(s.charge_kw == 0.0);
        CHECK(s.discharge_kw == 0.0);
        expected -= shortfall;
    }
    CHECK(report.summary.eva_profit == doctest::Approx(expected).epsilon(1e-12));
    CHECK(report.summary.mean_charging_cost == 0.0);
    REQUIRE(report.ledger);
    CHECK(report.ledger->length() == 13);
}

TEST_CASE("runs are deterministic and independent of thread count") {
    auto c = small_scenario(40, 3);
    const auto a = run_horizon(c);
    c.threads = 4;
    const auto b = run_horizon(c);
    CHECK(csv_of(a) == csv_of(b));
    CHECK(summary_json(a) == summary_json(b));
    CHECK(a.ledger->tip().header.digest() == b.ledger->tip().header.digest());
    CHECK(a.provenance == b.provenance);
}

TEST_CASE("summary is consistent with the per-slot and per-EV records") {
    const auto c = small_scenario(60, 8, 96);
    const auto r = run_horizon(c);
    const auto again = summarize(r.slots);
    CHECK(again.eva_profit == r.summary.eva_profit);
    CHECK(again.charged_kwh == r.summary.charged_kwh);

    double charged = 0.0, discharged = 0.0, profit = 0.0;
    for (const auto& s : r.slots) {
        charged += s.charge_kw * 0.25;
        discharged += s.discharge_kw * 0.25;
        profit += s.breakdown.total;
    }
    CHECK(r.summary.charged_kwh == doctest::Approx(charged).epsilon(1e-12));
    CHECK(r.summary.discharged_kwh == doctest::Approx(discharged).epsilon(1e-12));
    CHECK(r.summary.eva_profit == doctest::Approx(profit).epsilon(1e-12));
    REQUIRE(r.summary.charged_kwh > 0.0);
    CHECK(r.summary.valley_share + r.summary.normal_share + r.summary.peak_share == doctest::Approx(1.0));
    CHECK(r.summary.mean_charging_cost ==
          doctest::Approx(r.summary.charging_cost / r.summary.charged_kwh).epsilon(1e-12));

    REQUIRE(r.ev_totals.size() == c.fleet.size());
    double per_ev_charged = 0.0, per_ev_net = 0.0;
    for (const auto& t : r.ev_totals) {
        per_ev_charged += t.charged_kwh;
        per_ev_net += t.net_cost;
    }
    CHECK(per_ev_charged == doctest::Approx(r.summary.charged_kwh).epsilon(1e-12));
    CHECK(per_ev_net == doctest::Approx(r.eva_from_evs).epsilon(1e-12));
}

TEST_CASE("plug-and-charge baseline") {
    const auto c = small_scenario(30, 4, 96);
    const auto b = baseline_uncoordinated(c);
    CHECK_FALSE(b.ledger);
    CHECK(b.kind == RunKind::Baseline);
    CHECK(b.summary.discharged_kwh == 0.0);
    for (const auto& s : b.slots) {
        CHECK(s.discharge_kw == 0.0);
        for (const auto& d : s.dispatches) {
            CHECK(d.x >= 0.0);
            CHECK(d.x <= 1.0);
            CHECK(d.soc_after <= 1.0 + 1e-12);
            // Charges at full rate unless the battery would overflow.
            if (d.x < 1.0 && d.x > 0.0) CHECK(d.soc_after == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    CHECK(b.summary.charged_kwh > 0.0);
}

TEST_CASE("comparison") {
    const auto c = small_scenario(20, 6);
    const auto s = run_horizon(c);
    const auto b = baseline_uncoordinated(c);
    const auto cmp = compare_reports(s, b);
    CHECK(cmp.delta_mean_charging_cost == cmp.scheme_mean_charging_cost - cmp.baseline_mean_charging_cost);
    CHECK(cmp.scheme_eva_profit == s.summary.eva_profit);

    const auto same = compare_reports(s, s);
    CHECK(same.delta_mean_charging_cost == 0.0);
    CHECK(same.delta_valley_share == 0.0);
    CHECK(same.delta_eva_profit == 0.0);

    const auto other = baseline_uncoordinated(small_scenario(20, 7));
    CHECK_THROWS_AS(compare_reports(s, other), ConfigMismatch);
}

TEST_CASE("fingerprint covers inputs but not thread count") {
    auto c = small_scenario(10, 1);
    const auto base = fingerprint(c);
    c.threads = 7;
    CHECK(fingerprint(c) == base);
    c.seed = 2;
    CHECK(fingerprint(c) != base);
    c.seed = 1;
    c.constants.beta = 0.2;
    CHECK(fingerprint(c) != base);
    c.constants.beta = 0.16;
    c.horizon = 25;
    CHECK(fingerprint(c) != base);
}

TEST_CASE("scenario validation and failures") {
    CHECK(peak_occupancy(sample_fleet(), kDefaultStartSlot, kDefaultStartSlot + kSlotsPerDay) == 4);  // evening overlap
    CHECK(peak_occupancy(sample_fleet(), 0, 40) == 2);
    CHECK(peak_occupancy({}, 0, 10) == 0);

    auto c = small_scenario(5, 1);
    c.aux.e_limit.resize(10);
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = small_scenario(5, 1);
    c.scp_count = 3;
    c.scp_capacities = {1.0, 2.0};
    CHECK_THROWS_AS(validate(c), ConfigError);
    c.scp_count = 0;
    c.scp_capacities.clear();
    CHECK_THROWS_AS(validate(c), ConfigError);

    c = small_scenario(5, 1);
    c.scp_count = 2;
    c.scp_capacities = {0.0, 0.0};
    try {
        run_horizon(c);
        FAIL("ran without functional nodes");
    } catch (const SimulationError& e) {
        CHECK(e.slot() == c.start_slot);
    }

    // A single SCP serves a queue.
    c.scp_capacities.clear();
    c.scp_count = 1;
    const auto r = run_horizon(c);
    CHECK(r.scp_count == 1);
    for (const auto& s : r.slots) CHECK(s.dispatches.size() <= 1);
}

TEST_CASE("config documents") {
    const auto defaults = parse_config("{}", ".");
    CHECK(defaults.start_slot == kDefaultStartSlot);
    CHECK(defaults.horizon == kSlotsPerDay);
    CHECK(defaults.fleet == sample_fleet());
    CHECK(defaults.scheme == "hmac-sha256");
    CHECK_FALSE(defaults.min_departure_soc);
    CHECK(defaults.constants.e0 == 3.75);

    const auto custom = parse_config(R"({"start_time": "0:00", "horizon_slots": 8, "seed": 4,
        "signature_scheme": "ed25519", "min_departure_soc": 0.5,
        "market": {"beta": 0.2, "w_grid": 0.9}, "scp": {"count": 2, "capacities": [1, 3]},
        "fleet": {"synthetic": {"n": 12}}})",
                                     ".");
    CHECK(custom.start_slot == 0);
    CHECK(custom.horizon == 8);
    CHECK(custom.scheme == "ed25519");
    CHECK(custom.min_departure_soc == 0.5);
    CHECK(custom.constants.beta == 0.2);
    CHECK(custom.constants.w_grid == 0.9);
    CHECK(custom.scp_count == std::size_t{2});
    CHECK(custom.scp_capacities == std::vector<double>{1, 3});
    CHECK(custom.fleet == generate_fleet(12, 4));

    CHECK_THROWS_AS(parse_config(R"({"horizon": 8})", "."), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"market": {"gamma": 1}})", "."), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"signature_scheme": "rsa"})", "."), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"min_departure_soc": 1.5})", "."), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"horizon_slots": "ten"})", "."), ConfigError);
    CHECK_THROWS_AS(parse_config("{not json", "."), ConfigError);

    const auto dir = scratch_dir("config");
    std::filesystem::create_directories(dir / "data");
    std::ofstream(dir / "data" / "fleet.csv") << serialize_fleet_csv(generate_fleet(3, 9));
    std::ofstream(dir / "scenario.json") << R"({"fleet": {"file": "data/fleet.csv"}, "horizon_slots": 4})";
    const auto loaded = load_config((dir / "scenario.json").string());
    CHECK(loaded.fleet == generate_fleet(3, 9));
    CHECK_THROWS_AS(load_config((dir / "missing.json").string()), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("report export") {
    const auto c = small_scenario(8, 2, 6);
    const auto r = run_horizon(c);
    const auto csv = csv_of(r);
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);
    CHECK(line == kReportCsvHeader);
    std::size_t rows = 0;
    while (std::getline(lines, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 9);
    }
    CHECK(rows == 6);

    const auto b = baseline_uncoordinated(c);
    std::istringstream blines(csv_of(b));
    std::getline(blines, line);
    std::getline(blines, line);
    CHECK(line.find(",,") != std::string::npos);  // no discharging price in the baseline

    std::ostringstream totals;
    write_ev_totals_csv(totals, r);
    CHECK(totals.str().rfind("ev_id,charged_kWh,discharged_kWh,charging_cost,net_cost\n", 0) == 0);
    CHECK(summary_json(r).find("\"ledger\"") != std::string::npos);
    CHECK(summary_json(b).find("\"ledger\"") == std::string::npos);
}
