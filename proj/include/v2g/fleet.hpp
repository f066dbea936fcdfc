#pragma once

// Fleet records, time-of-use tariff, and auxiliary-demand schedules.
//
// Time is measured in 15-minute slots counted from 00:00 of the first day;
// a "next day HH:MM" departure maps to slot + 96.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "v2g/market.hpp"

namespace v2g {

inline constexpr std::uint32_t kSlotsPerDay = 96;
inline constexpr double kSlotHours = 0.25;
/// Case-study day runs 07:00 to 07:00 the next morning.
inline constexpr std::uint32_t kDefaultStartSlot = 28;

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class RangeError : public ParseError {
public:
    using ParseError::ParseError;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MissingFeed : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

struct EvRecord {
    EvId ev_id;
    double battery_volume = 0.0;   // kWh
    double initial_battery = 0.0;  // kWh
    std::uint32_t arrival_slot = 0;
    std::uint32_t departure_slot = 0;

    bool operator==(const EvRecord&) const = default;
};

void validate(const EvRecord& r);

/// "H:MM" or "next day H:MM" to a slot index; minutes must be a multiple of 15.
std::uint32_t parse_slot_time(std::string_view text);
std::string format_slot_time(std::uint32_t slot);

/// CSV with header `id,battery_kwh,initial_kwh,arrival,departure`.
std::vector<EvRecord> parse_fleet_csv(std::string_view text);
std::string serialize_fleet_csv(std::span<const EvRecord> fleet);

/// The six published driving-pattern samples.
std::vector<EvRecord> sample_fleet();

struct FleetSynthConfig {
    std::vector<EvRecord> mixture = sample_fleet();
    double jitter = 1.0;  // scales every jitter width below; 0 reproduces the mixture
    double capacity_jitter = 0.10;        // relative
    double soc_jitter = 0.10;             // absolute, on initial SOC
    std::uint32_t arrival_jitter_slots = 8;
    std::uint32_t dwell_jitter_slots = 8;
};

/// Record k is drawn from mixture[k % mixture.size()] with bounded jitter.
/// Ids are template id + cycle * 10^digits(max template id), so the first
/// cycle keeps the template ids. Capacities and energies are rounded to 0.1 kWh.
std::vector<EvRecord> generate_fleet(std::size_t n, std::uint64_t seed, const FleetSynthConfig& config = {});

enum class Tier : std::uint8_t { Valley, Normal, Peak };

const char* to_string(Tier tier);

struct TariffBand {
    double start_hour = 0.0;
    double end_hour = 0.0;
    double price = 0.0;
    Tier tier = Tier::Normal;
};

class PriceSchedule {
public:
    /// Bands must tile [0, 24) on quarter-hour boundaries.
    explicit PriceSchedule(std::span<const TariffBand> bands);

    /// Shenzhen valley-peak tariff.
    static PriceSchedule shenzhen();

    std::pair<double, Tier> price_at(std::uint64_t slot) const { return slots_[slot % kSlotsPerDay]; }

private:
    std::array<std::pair<double, Tier>, kSlotsPerDay> slots_{};
};

/// CSV with header `start_hour,end_hour,price,tier`.
PriceSchedule parse_tariff_csv(std::string_view text);

/// Default (Shenzhen) tariff lookup.
std::pair<double, Tier> price_at(std::uint64_t slot);

/// Indexed by position in the horizon, not by absolute slot.
struct AuxDemandProfile {
    std::vector<double> e_limit;  // kWh per slot
    std::string provenance;
};

/// CSV with header `slot,e_limit_kwh`; slots are horizon positions 0..n-1 in order.
AuxDemandProfile parse_aux_csv(std::string_view text);

struct SyntheticAuxConfig {
    double peak_kwh = 75.0;
    std::uint64_t seed = 1;
    std::size_t horizon = kSlotsPerDay;
    std::uint32_t start_slot = kDefaultStartSlot;  // time of day of position 0
};

/// Two smooth humps (late morning, early evening) with seeded jitter on their
/// centres, widths, and relative height, scaled so the daily maximum equals
/// peak_kwh.
AuxDemandProfile synthetic_aux_demand(const SyntheticAuxConfig& config);

double aux_demand_at(const AuxDemandProfile& profile, std::uint64_t slot);

}  // namespace v2g
