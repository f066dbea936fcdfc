#include "v2g/fleet.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "v2g/text.hpp"

namespace v2g {

namespace {

constexpr std::string_view kFleetHeader = "id,battery_kwh,initial_kwh,arrival,departure";
constexpr std::string_view kTariffHeader = "start_hour,end_hour,price,tier";
constexpr std::string_view kAuxHeader = "slot,e_limit_kwh";
constexpr std::string_view kNextDay = "next day ";

// Uniform in [-1, 1) from the top 53 bits; independent of the standard
// library's distribution implementations.
double symmetric_unit(std::mt19937_64& rng) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return 2.0 * u - 1.0;
}

double round_tenth(double v) { return std::round(v * 10.0) / 10.0; }

// Non-empty data lines with their 1-based line numbers; the first must match header.
std::vector<std::pair<std::size_t, std::string_view>> csv_rows(std::string_view csv, std::string_view header) {
    std::vector<std::pair<std::size_t, std::string_view>> rows;
    bool seen_header = false;
    std::size_t lineno = 0;
    for (auto line : text::lines(csv)) {
        ++lineno;
        line = text::trim(line);
        if (line.empty()) continue;
        if (!seen_header) {
            if (line != header) throw ParseError(lineno, "expected header '" + std::string(header) + "'");
            seen_header = true;
            continue;
        }
        rows.emplace_back(lineno, line);
    }
    if (!seen_header) throw ParseError(lineno, "missing header '" + std::string(header) + "'");
    return rows;
}

std::vector<std::string_view> fields(std::size_t lineno, std::string_view row, std::size_t expected) {
    auto f = text::split(row, ',');
    if (f.size() != expected)
        throw ParseError(lineno, "expected " + std::to_string(expected) + " fields, got " + std::to_string(f.size()));
    for (auto& x : f) x = text::trim(x);
    return f;
}

Tier parse_tier(std::string_view s) {
    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "valley") return Tier::Valley;
    if (lower == "normal" || lower == "flat") return Tier::Normal;
    if (lower == "peak") return Tier::Peak;
    throw std::invalid_argument("unknown tier '" + std::string(s) + "'");
}

}  // namespace

void validate(const EvRecord& r) {
    const auto id = to_string(r.ev_id);
    if (!std::isfinite(r.battery_volume) || r.battery_volume <= 0.0)
        throw DomainError("EV " + id + ": battery volume must be positive");
    if (!std::isfinite(r.initial_battery) || r.initial_battery < 0.0 || r.initial_battery > r.battery_volume)
        throw DomainError("EV " + id + ": initial battery outside [0, volume]");
    if (r.arrival_slot >= kSlotsPerDay) throw DomainError("EV " + id + ": arrival must fall on the first day");
    if (r.departure_slot <= r.arrival_slot) throw DomainError("EV " + id + ": departure must follow arrival");
}

std::uint32_t parse_slot_time(std::string_view s) {
    s = text::trim(s);
    std::uint32_t offset = 0;
    if (s.starts_with(kNextDay)) {
        offset = kSlotsPerDay;
        s = text::trim(s.substr(kNextDay.size()));
    }
    const auto colon = s.find(':');
    if (colon == std::string_view::npos || colon == 0 || colon > 2 || s.size() - colon != 3)
        throw std::invalid_argument("time must be H:MM or HH:MM");
    const auto hours = text::parse_uint(s.substr(0, colon));
    const auto minutes = text::parse_uint(s.substr(colon + 1));
    if (hours > 23 || minutes > 59) throw std::invalid_argument("time out of range");
    if (minutes % 15 != 0) throw std::invalid_argument("time must fall on a 15-minute boundary");
    return offset + static_cast<std::uint32_t>(hours * 4 + minutes / 15);
}

std::string format_slot_time(std::uint32_t slot) {
    std::string out;
    if (slot >= 2 * kSlotsPerDay) throw std::out_of_range("slot beyond the next day");
    const bool next_day = slot >= kSlotsPerDay;
    if (next_day) {
        out = kNextDay;
        slot -= kSlotsPerDay;
    }
    // Same-day hours unpadded, next-day hours two digits, as in the published table.
    const auto hours = slot / 4;
    const auto minutes = (slot % 4) * 15;
    out += (next_day && hours < 10 ? "0" : "") + std::to_string(hours) + ":" + (minutes < 10 ? "0" : "") +
           std::to_string(minutes);
    return out;
}

std::vector<EvRecord> parse_fleet_csv(std::string_view csv) {
    std::vector<EvRecord> out;
    std::set<EvId> seen;
    for (const auto& [lineno, row] : csv_rows(csv, kFleetHeader)) {
        const auto f = fields(lineno, row, 5);
        EvRecord r;
        try {
            r.ev_id = EvId{text::parse_uint(f[0])};
            r.battery_volume = text::parse_double(f[1]);
            r.initial_battery = text::parse_double(f[2]);
            r.arrival_slot = parse_slot_time(f[3]);
            r.departure_slot = parse_slot_time(f[4]);
        } catch (const std::invalid_argument& e) {
            throw ParseError(lineno, e.what());
        }
        try {
            validate(r);
        } catch (const DomainError& e) {
            throw RangeError(lineno, e.what());
        }
        if (!seen.insert(r.ev_id).second) throw ParseError(lineno, "duplicate id " + to_string(r.ev_id));
        out.push_back(r);
    }
    return out;
}

std::string serialize_fleet_csv(std::span<const EvRecord> fleet) {
    std::string out(kFleetHeader);
    out += '\n';
    for (const auto& r : fleet) {
        out += to_string(r.ev_id) + ',' + text::format_number(r.battery_volume) + ',' +
               text::format_number(r.initial_battery) + ',' + format_slot_time(r.arrival_slot) + ',' +
               format_slot_time(r.departure_slot) + '\n';
    }
    return out;
}

std::vector<EvRecord> sample_fleet() {
    return {
        {EvId{1}, 160, 57.2, 64, 96 + 26},   // 16:00 -> next day 06:30
        {EvId{71}, 64, 19.9, 71, 96 + 66},   // 17:45 -> next day 16:30
        {EvId{74}, 65, 17.7, 58, 96 + 18},   // 14:30 -> next day 04:30
        {EvId{215}, 40, 26.2, 23, 41},       // 5:45 -> 10:15
        {EvId{217}, 65, 37.1, 0, 48},        // 0:00 -> 12:00
        {EvId{486}, 32, 20.2, 86, 96 + 48},  // 21:30 -> next day 12:00
    };
}

std::vector<EvRecord> generate_fleet(std::size_t n, std::uint64_t seed, const FleetSynthConfig& config) {
    if (n == 0) throw ConfigError("fleet size must be at least 1");
    if (config.mixture.empty()) throw ConfigError("fleet mixture is empty");
    if (!(config.jitter >= 0.0) || !(config.capacity_jitter >= 0.0 && config.capacity_jitter < 1.0) ||
        !(config.soc_jitter >= 0.0))
        throw ConfigError("jitter parameters must be non-negative (capacity jitter < 1)");
    std::uint64_t max_id = 0;
    for (const auto& t : config.mixture) {
        validate(t);
        max_id = std::max(max_id, t.ev_id.value);
    }
    std::uint64_t stride = 10;
    while (stride <= max_id) stride *= 10;

    std::mt19937_64 rng(seed);
    const double j = config.jitter;
    const std::uint32_t last_slot = 2 * kSlotsPerDay - 1;
    std::vector<EvRecord> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto& t = config.mixture[k % config.mixture.size()];
        const double u_cap = symmetric_unit(rng);
        const double u_soc = symmetric_unit(rng);
        const double u_arr = symmetric_unit(rng);
        const double u_dwell = symmetric_unit(rng);

        EvRecord r;
        r.ev_id = EvId{t.ev_id.value + static_cast<std::uint64_t>(k / config.mixture.size()) * stride};
        r.battery_volume = std::max(1.0, round_tenth(t.battery_volume * (1.0 + j * config.capacity_jitter * u_cap)));
        const double soc = std::clamp(t.initial_battery / t.battery_volume + j * config.soc_jitter * u_soc, 0.0, 1.0);
        r.initial_battery = std::min(r.battery_volume, round_tenth(soc * r.battery_volume));

        const double arrival = t.arrival_slot + std::round(j * config.arrival_jitter_slots * u_arr);
        r.arrival_slot = static_cast<std::uint32_t>(std::clamp(arrival, 0.0, double(kSlotsPerDay - 1)));
        const double dwell = double(t.departure_slot - t.arrival_slot) + std::round(j * config.dwell_jitter_slots * u_dwell);
        r.departure_slot = std::min(last_slot, r.arrival_slot + static_cast<std::uint32_t>(std::max(1.0, dwell)));
        out.push_back(r);
    }
    return out;
}

const char* to_string(Tier tier) {
    switch (tier) {
        case Tier::Valley: return "Valley";
        case Tier::Normal: return "Normal";
        case Tier::Peak: return "Peak";
    }
    return "?";
}

PriceSchedule::PriceSchedule(std::span<const TariffBand> bands) {
    std::array<bool, kSlotsPerDay> covered{};
    for (const auto& b : bands) {
        const double first = b.start_hour * 4.0;
        const double last = b.end_hour * 4.0;
        if (first != std::floor(first) || last != std::floor(last) || first < 0 || last > kSlotsPerDay || first >= last)
            throw ConfigError("tariff band hours must be quarter-hour aligned with 0 <= start < end <= 24");
        if (!std::isfinite(b.price) || b.price < 0.0) throw ConfigError("tariff price must be non-negative");
        for (auto s = static_cast<std::size_t>(first); s < static_cast<std::size_t>(last); ++s) {
            if (covered[s]) throw ConfigError("tariff bands overlap at slot " + std::to_string(s));
            covered[s] = true;
            slots_[s] = {b.price, b.tier};
        }
    }
    for (std::size_t s = 0; s < kSlotsPerDay; ++s) {
        if (!covered[s]) throw ConfigError("tariff bands leave slot " + std::to_string(s) + " uncovered");
    }
}

PriceSchedule PriceSchedule::shenzhen() {
    static const TariffBand bands[] = {
        {0, 8, 0.26, Tier::Valley},  {8, 10, 0.66, Tier::Normal},  {10, 12, 1.12, Tier::Peak},
        {12, 14, 0.66, Tier::Normal}, {14, 19, 1.12, Tier::Peak}, {19, 24, 0.66, Tier::Normal},
    };
    return PriceSchedule(bands);
}

PriceSchedule parse_tariff_csv(std::string_view csv) {
    std::vector<TariffBand> bands;
    for (const auto& [lineno, row] : csv_rows(csv, kTariffHeader)) {
        const auto f = fields(lineno, row, 4);
        try {
            bands.push_back({text::parse_double(f[0]), text::parse_double(f[1]), text::parse_double(f[2]),
                             parse_tier(f[3])});
        } catch (const std::invalid_argument& e) {
            throw ParseError(lineno, e.what());
        }
    }
    return PriceSchedule(bands);
}

std::pair<double, Tier> price_at(std::uint64_t slot) {
    static const PriceSchedule schedule = PriceSchedule::shenzhen();
    return schedule.price_at(slot);
}

AuxDemandProfile parse_aux_csv(std::string_view csv) {
    AuxDemandProfile p;
    p.provenance = "file";
    for (const auto& [lineno, row] : csv_rows(csv, kAuxHeader)) {
        const auto f = fields(lineno, row, 2);
        try {
            if (text::parse_uint(f[0]) != p.e_limit.size())
                throw std::invalid_argument("slots must be listed in order starting at 0");
            const double v = text::parse_double(f[1]);
            if (v < 0.0) throw std::invalid_argument("e_limit must be non-negative");
            p.e_limit.push_back(v);
        } catch (const std::invalid_argument& e) {
            throw ParseError(lineno, e.what());
        }
    }
    return p;
}

AuxDemandProfile synthetic_aux_demand(const SyntheticAuxConfig& config) {
    if (!std::isfinite(config.peak_kwh) || config.peak_kwh < 0.0)
        throw ConfigError("auxiliary peak must be non-negative");
    std::mt19937_64 rng(config.seed);
    struct Hump {
        double centre, width, height;
    };
    const Hump humps[] = {
        {11.0 + 0.5 * symmetric_unit(rng), 1.5 * (1.0 + 0.15 * symmetric_unit(rng)), 1.0},
        {18.0 + 0.5 * symmetric_unit(rng), 2.0 * (1.0 + 0.15 * symmetric_unit(rng)), 0.8 + 0.2 * symmetric_unit(rng)},
    };
    auto shape = [&](std::size_t slot) {
        const double hour = std::fmod((static_cast<double>(slot + config.start_slot) + 0.5) * kSlotHours, 24.0);
        double v = 0.0;
        for (const auto& h : humps) {
            double d = std::abs(hour - h.centre);
            d = std::min(d, 24.0 - d);
            v += h.height * std::exp(-0.5 * (d / h.width) * (d / h.width));
        }
        return v;
    };
    double day_max = 0.0;
    for (std::size_t s = 0; s < kSlotsPerDay; ++s) day_max = std::max(day_max, shape(s));

    AuxDemandProfile p;
    std::ostringstream tag;
    tag << "synthetic(seed=" << config.seed << ",peak_kwh=" << text::format_number(config.peak_kwh)
        << ",start_slot=" << config.start_slot << ")";
    p.provenance = tag.str();
    p.e_limit.resize(config.horizon);
    for (std::size_t s = 0; s < config.horizon; ++s) p.e_limit[s] = config.peak_kwh * shape(s) / day_max;
    return p;
}

double aux_demand_at(const AuxDemandProfile& profile, std::uint64_t slot) {
    if (slot >= profile.e_limit.size())
        throw MissingFeed("no auxiliary demand for slot " + std::to_string(slot));
    return profile.e_limit[slot];
}

}  // namespace v2g
