#include <ostream>

#include "json.hpp"
#include "v2g/simulator.hpp"
#include "v2g/text.hpp"

namespace v2g {

using text::format_number;
using nlohmann::ordered_json;

void write_report_csv(std::ostream& out, const RunReport& report) {
    out << kReportCsvHeader << '\n';
    for (const auto& o : report.slots) {
        const auto& b = o.breakdown;
        out << o.slot << ',' << format_number(o.p_real_time) << ','
            << (report.kind == RunKind::Scheme ? format_number(o.p_d_star) : std::string()) << ','
            << format_number(o.charge_kw) << ',' << format_number(o.discharge_kw) << ',' << format_number(b.r_service)
            << ',' << format_number(b.r_grid_v2g) << ',' << format_number(b.c_v2g) << ',' << format_number(b.c_limit)
            << ',' << format_number(b.total) << '\n';
    }
}

void write_ev_totals_csv(std::ostream& out, const RunReport& report) {
    out << "ev_id,charged_kWh,discharged_kWh,charging_cost,net_cost\n";
    for (const auto& t : report.ev_totals) {
        out << to_string(t.ev_id) << ',' << format_number(t.charged_kwh) << ',' << format_number(t.discharged_kwh)
            << ',' << format_number(t.charging_cost) << ',' << format_number(t.net_cost) << '\n';
    }
}

std::string summary_json(const RunReport& report) {
    const auto& s = report.summary;
    ordered_json j;
    j["run"] = report.kind == RunKind::Scheme ? "scheme" : "baseline";
    j["scenario_fingerprint"] = report.provenance;
    j["slots"] = report.slots.size();
    j["scp_count"] = report.scp_count;
    j["evs"] = report.ev_totals.size();
    j["charged_kWh"] = s.charged_kwh;
    j["discharged_kWh"] = s.discharged_kwh;
    j["charging_cost_CNY"] = s.charging_cost;
    j["mean_charging_cost_CNY_per_kWh"] = s.mean_charging_cost;
    j["energy_share"] = {{"valley", s.valley_share}, {"normal", s.normal_share}, {"peak", s.peak_share}};
    j["eva"] = {{"r_service", s.r_service},   {"r_grid_v2g", s.r_grid_v2g}, {"c_v2g", s.c_v2g},
                {"c_limit", s.c_limit},       {"profit", s.eva_profit}};
    j["money_flows_CNY"] = {
        {"evs_to_eva", report.eva_from_evs}, {"grid_to_eva", report.grid_to_eva}, {"eva_to_grid", report.eva_to_grid}};
    if (report.ledger) {
        j["ledger"] = {{"blocks", report.ledger->length()},
                       {"tip", codec::to_hex(report.ledger->tip().header.digest())},
                       {"scheme", std::string(report.ledger->scheme().name())}};
    }
    return j.dump(2) + "\n";
}

std::string comparison_json(const Comparison& c) {
    ordered_json j;
    j["mean_charging_cost_CNY_per_kWh"] = {
        {"scheme", c.scheme_mean_charging_cost}, {"baseline", c.baseline_mean_charging_cost},
        {"delta", c.delta_mean_charging_cost}};
    j["valley_share"] = {
        {"scheme", c.scheme_valley_share}, {"baseline", c.baseline_valley_share}, {"delta", c.delta_valley_share}};
    j["eva_profit_CNY"] = {
        {"scheme", c.scheme_eva_profit}, {"baseline", c.baseline_eva_profit}, {"delta", c.delta_eva_profit}};
    return j.dump(2) + "\n";
}

}  // namespace v2g
