#include <algorithm>
#include <set>

#include "doctest.h"
#include "v2g/fleet.hpp"

using namespace v2g;

namespace {

// The published driving-pattern samples, verbatim.
const char* const kTableTwo =
    "id,battery_kwh,initial_kwh,arrival,departure\n"
    "1,160,57.2,16:00,next day 06:30\n"
    "71,64,19.9,17:45,next day 16:30\n"
    "74,65,17.7,14:30,next day 04:30\n"
    "215,40,26.2,5:45,10:15\n"
    "217,65,37.1,0:00,12:00\n"
    "486,32,20.2,21:30,next day 12:00\n";

// Published tariff bands: [start hour, end hour) -> price, tier.
struct Band {
    int from, to;
    double price;
    Tier tier;
};
const Band kTableThree[] = {{0, 8, 0.26, Tier::Valley}, {8, 10, 0.66, Tier::Normal}, {10, 12, 1.12, Tier::Peak},
                            {12, 14, 0.66, Tier::Normal}, {14, 19, 1.12, Tier::Peak}, {19, 24, 0.66, Tier::Normal}};

void check_invariants(const EvRecord& r) {
    CHECK(r.battery_volume > 0);
    CHECK(r.initial_battery >= 0);
    CHECK(r.initial_battery <= r.battery_volume);
    CHECK(r.arrival_slot < kSlotsPerDay);
    CHECK(r.departure_slot > r.arrival_slot);
    CHECK(r.departure_slot < 2 * kSlotsPerDay);
}

}  // namespace

TEST_CASE("slot times") {
    CHECK(parse_slot_time("17:45") == 71);
    CHECK(parse_slot_time("next day 16:30") == 162);
    CHECK(parse_slot_time("5:45") == 23);
    CHECK(parse_slot_time("10:15") == 41);
    CHECK(parse_slot_time("next day 06:30") == 122);
    CHECK(parse_slot_time("0:00") == 0);
    CHECK_THROWS(parse_slot_time("10:20"));
    CHECK_THROWS(parse_slot_time("25:00"));
    CHECK_THROWS(parse_slot_time("noon"));
    CHECK(format_slot_time(23) == "5:45");
    CHECK(format_slot_time(122) == "next day 06:30");
    CHECK(format_slot_time(162) == "next day 16:30");
}

TEST_CASE("published rows parse to slot indices") {
    const auto fleet = parse_fleet_csv(kTableTwo);
    REQUIRE(fleet.size() == 6);
    CHECK(fleet[1].ev_id == EvId{71});
    CHECK(fleet[1].battery_volume == 64);
    CHECK(fleet[1].initial_battery == 19.9);
    CHECK(fleet[1].arrival_slot == 71);
    CHECK(fleet[1].departure_slot == 162);
    CHECK(fleet[3].arrival_slot == 23);
    CHECK(fleet[3].departure_slot == 41);
    CHECK(fleet == sample_fleet());
}

TEST_CASE("fleet CSV round trip") {
    CHECK(serialize_fleet_csv(parse_fleet_csv(kTableTwo)) == kTableTwo);
    const auto generated = generate_fleet(300, 17);
    CHECK(parse_fleet_csv(serialize_fleet_csv(generated)) == generated);
}

TEST_CASE("fleet CSV errors carry the line") {
    try {
        parse_fleet_csv("id,battery_kwh,initial_kwh,arrival,departure\n215,40,50,5:45,10:15\n");
        FAIL("accepted initial > capacity");
    } catch (const RangeError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse_fleet_csv("id,cap\n1,2\n"), ParseError);
    CHECK_THROWS_AS(parse_fleet_csv("id,battery_kwh,initial_kwh,arrival,departure\n1,40,20,5:45\n"), ParseError);
    CHECK_THROWS_AS(parse_fleet_csv("id,battery_kwh,initial_kwh,arrival,departure\n1,40,20,10:00,9:00\n"), ParseError);
    CHECK_THROWS_AS(parse_fleet_csv("id,battery_kwh,initial_kwh,arrival,departure\n1,40,x,5:45,9:00\n"), ParseError);
    CHECK_THROWS_AS(parse_fleet_csv("id,battery_kwh,initial_kwh,arrival,departure\n"
                                    "1,40,20,5:45,9:00\n1,40,20,5:45,9:00\n"),
                    ParseError);
}

TEST_CASE("fleet synthesis") {
    FleetSynthConfig exact;
    exact.jitter = 0.0;
    CHECK(generate_fleet(6, 0, exact) == sample_fleet());
    CHECK(generate_fleet(6, 12345, exact) == sample_fleet());

    CHECK(generate_fleet(50, 9) == generate_fleet(50, 9));
    CHECK(generate_fleet(50, 9) != generate_fleet(50, 10));

    const auto big = generate_fleet(2000, 1);
    REQUIRE(big.size() == 2000);
    std::set<EvId> ids;
    for (const auto& r : big) {
        check_invariants(r);
        ids.insert(r.ev_id);
    }
    CHECK(ids.size() == 2000);

    CHECK_THROWS_AS(generate_fleet(0, 1), ConfigError);
    FleetSynthConfig empty;
    empty.mixture.clear();
    CHECK_THROWS_AS(generate_fleet(5, 1, empty), ConfigError);
}

TEST_CASE("tariff matches the published bands on every slot") {
    for (std::uint32_t s = 0; s < kSlotsPerDay; ++s) {
        const int hour = static_cast<int>(s / 4);
        const auto band = *std::find_if(std::begin(kTableThree), std::end(kTableThree),
                                        [&](const Band& b) { return hour >= b.from && hour < b.to; });
        const auto [price, tier] = price_at(s);
        CHECK(price == band.price);
        CHECK(tier == band.tier);
        CHECK(price_at(s + kSlotsPerDay) == price_at(s));
    }
    CHECK(price_at(0) == std::pair{0.26, Tier::Valley});
    CHECK(price_at(40) == std::pair{1.12, Tier::Peak});
    CHECK(price_at(76) == std::pair{0.66, Tier::Normal});
    CHECK(price_at(31).second == Tier::Valley);
    CHECK(price_at(32).second == Tier::Normal);
    CHECK(price_at(55).second == Tier::Normal);
    CHECK(price_at(56).second == Tier::Peak);
}

TEST_CASE("tariff CSV override") {
    const auto flat = parse_tariff_csv("start_hour,end_hour,price,tier\n0,24,0.5,Normal\n");
    CHECK(flat.price_at(50) == std::pair{0.5, Tier::Normal});
    const auto two = parse_tariff_csv("start_hour,end_hour,price,tier\n0,6.5,0.2,Valley\n6.5,24,0.9,Peak\n");
    CHECK(two.price_at(25).second == Tier::Valley);
    CHECK(two.price_at(26).second == Tier::Peak);
    CHECK_THROWS(parse_tariff_csv("start_hour,end_hour,price,tier\n0,12,0.5,Normal\n"));
    CHECK_THROWS(parse_tariff_csv("start_hour,end_hour,price,tier\n0,12,0.5,Normal\n11,24,0.5,Normal\n"));
    CHECK_THROWS(parse_tariff_csv("start_hour,end_hour,price,tier\n0,24,0.5,Cheap\n"));
}

TEST_CASE("auxiliary demand") {
    const auto file = parse_aux_csv("slot,e_limit_kwh\n0,1.5\n1,0\n2,7.25\n");
    CHECK(aux_demand_at(file, 2) == 7.25);
    CHECK(aux_demand_at(file, 0) == 1.5);
    CHECK_THROWS_AS(aux_demand_at(file, 3), MissingFeed);
    CHECK_THROWS(parse_aux_csv("slot,e_limit_kwh\n0,1\n2,1\n"));
    CHECK_THROWS(parse_aux_csv("slot,e_limit_kwh\n0,-1\n"));

    SyntheticAuxConfig zero;
    zero.peak_kwh = 0.0;
    const auto z = synthetic_aux_demand(zero);
    CHECK(std::all_of(z.e_limit.begin(), z.e_limit.end(), [](double v) { return v == 0.0; }));

    SyntheticAuxConfig cfg;
    cfg.seed = 42;
    const auto a = synthetic_aux_demand(cfg);
    CHECK(a.e_limit == synthetic_aux_demand(cfg).e_limit);
    REQUIRE(a.e_limit.size() == kSlotsPerDay);
    CHECK(*std::max_element(a.e_limit.begin(), a.e_limit.end()) == doctest::Approx(cfg.peak_kwh).epsilon(1e-12));
    CHECK(std::all_of(a.e_limit.begin(), a.e_limit.end(), [](double v) { return v >= 0.0; }));
    cfg.seed = 43;
    CHECK(a.e_limit != synthetic_aux_demand(cfg).e_limit);
}
