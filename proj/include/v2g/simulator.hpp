#pragma once

// Horizon engine: runs the slot cycle over the scenario window, the plug-and-charge
// baseline, and the summary metrics compared between them.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "v2g/fleet.hpp"
#include "v2g/ledger.hpp"
#include "v2g/protocol.hpp"

namespace v2g {

struct ScenarioConfig {
    std::uint32_t start_slot = kDefaultStartSlot;
    std::uint32_t horizon = kSlotsPerDay;  // slots [start_slot, start_slot + horizon)
    std::vector<EvRecord> fleet;
    PriceSchedule tariff = PriceSchedule::shenzhen();
    AuxDemandProfile aux = synthetic_aux_demand({});  // indexed by horizon position
    MarketConstants constants;
    std::optional<std::size_t> scp_count;  // default: peak number of EVs present at once
    std::vector<double> scp_capacities;    // empty: all 1.0
    std::uint64_t seed = 0;                // wallet key derivation
    std::string scheme = "hmac-sha256";
    std::optional<double> min_departure_soc;
    unsigned threads = 0;
};

/// Throws ConfigError when the aux series does not cover the horizon or the
/// SCP settings are inconsistent.
void validate(const ScenarioConfig& config);

std::uint32_t end_slot(const ScenarioConfig& config);

/// Largest number of EVs present in any slot of [start, end).
std::size_t peak_occupancy(std::span<const EvRecord> fleet, std::uint32_t start, std::uint32_t end);

/// SHA-256 over every input that shapes a run (threads excluded), hex.
std::string fingerprint(const ScenarioConfig& config);

class SimulationError : public std::runtime_error {
public:
    SimulationError(std::uint64_t slot, const std::string& what)
        : std::runtime_error("slot " + std::to_string(slot) + ": " + what), slot_(slot) {}
    std::uint64_t slot() const { return slot_; }

private:
    std::uint64_t slot_;
};

class ConfigMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EvTotals {
    EvId ev_id;
    double charged_kwh = 0.0;
    double discharged_kwh = 0.0;
    double charging_cost = 0.0;  // CNY paid for charging energy
    double net_cost = 0.0;       // CNY paid minus CNY credited
};

struct RunSummary {
    double charged_kwh = 0.0;
    double discharged_kwh = 0.0;
    double charging_cost = 0.0;
    double mean_charging_cost = 0.0;  // CNY/kWh; 0 when nothing was charged
    double valley_share = 0.0;        // of charged energy
    double normal_share = 0.0;
    double peak_share = 0.0;
    double r_service = 0.0;
    double r_grid_v2g = 0.0;
    double c_v2g = 0.0;
    double c_limit = 0.0;
    double eva_profit = 0.0;  // sum of per-slot totals
};

enum class RunKind { Scheme, Baseline };

struct RunReport {
    RunKind kind = RunKind::Scheme;
    std::string provenance;
    std::uint64_t scp_count = 0;
    std::vector<SlotOutcome> slots;
    std::vector<EvTotals> ev_totals;  // ascending ev_id, every EV in the fleet
    RunSummary summary;
    // Cumulative money flows (see WorldState).
    double eva_from_evs = 0.0;
    double grid_to_eva = 0.0;
    double eva_to_grid = 0.0;
    std::optional<Chain> ledger;  // scheme runs only
};

/// Summary statistics recomputed from per-slot outcomes.
RunSummary summarize(std::span<const SlotOutcome> slots);
std::vector<EvTotals> ev_totals(std::span<const EvRecord> fleet, std::span<const SlotOutcome> slots);

/// Runs every slot through the protocol, then checks every node's chain and
/// every light client's header chain. Protocol failures surface as
/// SimulationError naming the slot.
RunReport run_horizon(const ScenarioConfig& config);

/// Plug-and-charge comparator: every plugged EV charges min(1, headroom)
/// units per slot at p_real_time + w_service until full; no discharge, no ledger.
RunReport baseline_uncoordinated(const ScenarioConfig& config);

struct Comparison {
    double scheme_mean_charging_cost = 0.0;
    double baseline_mean_charging_cost = 0.0;
    double delta_mean_charging_cost = 0.0;  // scheme - baseline
    double scheme_valley_share = 0.0;
    double baseline_valley_share = 0.0;
    double delta_valley_share = 0.0;
    double scheme_eva_profit = 0.0;
    double baseline_eva_profit = 0.0;
    double delta_eva_profit = 0.0;
};

/// Throws ConfigMismatch unless both reports come from the same scenario.
Comparison compare_reports(const RunReport& scheme, const RunReport& baseline);

// --- export -------------------------------------------------------------------

inline constexpr const char* kReportCsvHeader =
    "slot,p_real_time,p_d_star,charge_kW,discharge_kW,r_service,r_grid_v2g,c_v2g,c_limit,total";

void write_report_csv(std::ostream& out, const RunReport& report);
void write_ev_totals_csv(std::ostream& out, const RunReport& report);
std::string summary_json(const RunReport& report);
std::string comparison_json(const Comparison& comparison);

// --- configuration file ---------------------------------------------------------

/// Parses a JSON scenario document; relative file paths resolve against
/// base_dir. Throws ConfigError on unknown keys, bad types, or bad values.
ScenarioConfig parse_config(std::string_view json_text, const std::string& base_dir);
ScenarioConfig load_config(const std::string& path);

}  // namespace v2g
