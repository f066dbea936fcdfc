#include "v2g/simulator.hpp"

#include <algorithm>
#include <map>

#include "v2g/codec.hpp"
#include "v2g/crypto.hpp"

namespace v2g {

namespace {

// First slot at which the EV is gone, clipped to the horizon.
std::uint32_t leave_slot(const EvRecord& r, std::uint32_t end) { return std::min(r.departure_slot, end); }

std::size_t resolved_scp_count(const ScenarioConfig& config) {
    if (config.scp_count) return *config.scp_count;
    return std::max<std::size_t>(1, peak_occupancy(config.fleet, config.start_slot, end_slot(config)));
}

OracleFeed feed_for(const ScenarioConfig& config) {
    return build_oracle_feed(config.tariff, config.aux, config.constants, config.start_slot, config.horizon);
}

}  // namespace

void validate(const ScenarioConfig& config) {
    if (config.horizon == 0) throw ConfigError("horizon must be at least one slot");
    if (config.start_slot >= kSlotsPerDay) throw ConfigError("start slot must fall on the first day");
    if (config.aux.e_limit.size() < config.horizon)
        throw ConfigError("auxiliary demand covers " + std::to_string(config.aux.e_limit.size()) +
                          " slots, horizon needs " + std::to_string(config.horizon));
    for (double v : config.aux.e_limit) {
        if (!(v >= 0.0)) throw ConfigError("auxiliary demand must be non-negative");
    }
    if (config.scp_count && *config.scp_count == 0) throw ConfigError("scp count must be at least 1");
    if (!config.scp_capacities.empty() && config.scp_capacities.size() != resolved_scp_count(config))
        throw ConfigError("scp capacities must list one value per SCP");
    for (double c : config.scp_capacities) {
        if (!(c >= 0.0)) throw ConfigError("scp capacities must be non-negative");
    }
    for (const auto& r : config.fleet) {
        try {
            validate(r);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("EV ") + to_string(r.ev_id) + ": " + e.what());
        }
    }
}

std::uint32_t end_slot(const ScenarioConfig& config) { return config.start_slot + config.horizon; }

std::size_t peak_occupancy(std::span<const EvRecord> fleet, std::uint32_t start, std::uint32_t end) {
    if (end <= start) return 0;
    std::vector<int> delta(end - start + 1, 0);
    for (const auto& r : fleet) {
        const auto arrive = std::max(r.arrival_slot, start);
        const auto leave = leave_slot(r, end);
        if (arrive >= leave) continue;
        ++delta[arrive - start];
        --delta[leave - start];
    }
    std::size_t peak = 0;
    long present = 0;
    for (int d : delta) {
        present += d;
        peak = std::max(peak, static_cast<std::size_t>(present));
    }
    return peak;
}

std::string fingerprint(const ScenarioConfig& config) {
    codec::Writer w;
    w.str("v2g-scenario").u32(config.start_slot).u32(config.horizon);
    w.count(config.fleet.size());
    for (const auto& r : config.fleet) {
        w.u64(r.ev_id.value).f64(r.battery_volume).f64(r.initial_battery).u32(r.arrival_slot).u32(r.departure_slot);
    }
    for (std::uint32_t s = 0; s < kSlotsPerDay; ++s) {
        const auto [price, tier] = config.tariff.price_at(s);
        w.f64(price).u8(static_cast<std::uint8_t>(tier));
    }
    w.count(config.aux.e_limit.size());
    for (double v : config.aux.e_limit) w.f64(v);
    const auto& c = config.constants;
    for (double v : {c.w_grid, c.w_service, c.p_d_max, c.p_d_min_factor, c.delta_factor, c.e0, c.p_delay, c.epsilon,
                     c.beta, c.a, c.u_idle})
        w.f64(v);
    w.u64(resolved_scp_count(config));
    w.count(config.scp_capacities.size());
    for (double v : config.scp_capacities) w.f64(v);
    w.u64(config.seed).str(config.scheme);
    w.u8(config.min_departure_soc.has_value()).f64(config.min_departure_soc.value_or(0.0));
    const auto digest = sha256(w.data());
    return codec::to_hex(digest);
}

RunSummary summarize(std::span<const SlotOutcome> slots) {
    RunSummary s;
    double by_tier[3] = {0.0, 0.0, 0.0};
    for (const auto& o : slots) {
        for (const auto& d : o.dispatches) {
            if (d.mode == Mode::Charge) {
                s.charged_kwh += d.energy_kwh;
                s.charging_cost += d.payment;
                by_tier[static_cast<int>(o.tier)] += d.energy_kwh;
            } else if (d.mode == Mode::Discharge) {
                s.discharged_kwh -= d.energy_kwh;
            }
        }
        s.r_service += o.breakdown.r_service;
        s.r_grid_v2g += o.breakdown.r_grid_v2g;
        s.c_v2g += o.breakdown.c_v2g;
        s.c_limit += o.breakdown.c_limit;
        s.eva_profit += o.breakdown.total;
    }
    if (s.charged_kwh > 0.0) {
        s.mean_charging_cost = s.charging_cost / s.charged_kwh;
        s.valley_share = by_tier[static_cast<int>(Tier::Valley)] / s.charged_kwh;
        s.normal_share = by_tier[static_cast<int>(Tier::Normal)] / s.charged_kwh;
        s.peak_share = by_tier[static_cast<int>(Tier::Peak)] / s.charged_kwh;
    }
    return s;
}

std::vector<EvTotals> ev_totals(std::span<const EvRecord> fleet, std::span<const SlotOutcome> slots) {
    std::map<EvId, EvTotals> totals;
    for (const auto& r : fleet) totals[r.ev_id].ev_id = r.ev_id;
    for (const auto& o : slots) {
        for (const auto& d : o.dispatches) {
            auto& t = totals[d.ev_id];
            t.ev_id = d.ev_id;
            if (d.mode == Mode::Charge) {
                t.charged_kwh += d.energy_kwh;
                t.charging_cost += d.payment;
            } else if (d.mode == Mode::Discharge) {
                t.discharged_kwh -= d.energy_kwh;
            }
            t.net_cost += d.payment;
        }
    }
    std::vector<EvTotals> out;
    out.reserve(totals.size());
    for (auto& [id, t] : totals) out.push_back(t);
    return out;
}

RunReport run_horizon(const ScenarioConfig& config) {
    validate(config);
    WorldConfig wc;
    wc.constants = config.constants;
    wc.scp_count = resolved_scp_count(config);
    wc.scp_capacities = config.scp_capacities;
    wc.key_seed = config.seed;
    wc.scheme = config.scheme;
    wc.end_slot = end_slot(config);
    wc.min_departure_soc = config.min_departure_soc;
    wc.threads = config.threads;

    auto world = make_world(wc, config.fleet);
    const auto feed = feed_for(config);

    RunReport report;
    report.kind = RunKind::Scheme;
    report.provenance = fingerprint(config);
    report.scp_count = wc.scp_count;
    report.slots.reserve(config.horizon);
    for (std::uint32_t slot = config.start_slot; slot < wc.end_slot; ++slot) {
        try {
            report.slots.push_back(run_slot(world, feed, slot));
        } catch (const std::exception& e) {
            throw SimulationError(slot, e.what());
        }
    }

    const std::uint64_t end = wc.end_slot;
    const auto& chain = world.chain();
    if (const auto r = verify_chain(chain); !r)
        throw SimulationError(end, std::string("ledger fails verification at height ") + std::to_string(r.height) +
                                       ": " + to_string(r.error));
    for (const auto& node : world.nodes) {
        if (!node.chain.same_as(chain)) throw SimulationError(end, node.node_id + " holds a divergent chain");
    }
    const auto headers = chain.headers();
    for (const auto& ev : world.evs) {
        if (ev.headers.empty()) continue;
        const auto r = verify_header_chain(ev.headers);
        const bool prefix = ev.headers.size() <= headers.size() &&
                            std::equal(ev.headers.begin(), ev.headers.end(), headers.begin());
        if (!r || !prefix) throw SimulationError(end, "light client " + ev.wallet.wallet_id + " holds a bad header chain");
    }

    report.ev_totals = ev_totals(config.fleet, report.slots);
    report.summary = summarize(report.slots);
    report.eva_from_evs = world.eva_from_evs;
    report.grid_to_eva = world.grid_to_eva;
    report.eva_to_grid = world.eva_to_grid;
    report.ledger = chain;
    return report;
}

RunReport baseline_uncoordinated(const ScenarioConfig& config) {
    validate(config);
    const auto feed = feed_for(config);
    const auto points = resolved_scp_count(config);

    auto fleet = config.fleet;
    std::sort(fleet.begin(), fleet.end(), [](const auto& l, const auto& r) { return l.ev_id < r.ev_id; });
    std::vector<double> soc(fleet.size());
    for (std::size_t i = 0; i < fleet.size(); ++i) soc[i] = fleet[i].initial_battery / fleet[i].battery_volume;
    std::vector<bool> plugged(fleet.size(), false);
    std::size_t occupied = 0;

    RunReport report;
    report.kind = RunKind::Baseline;
    report.provenance = fingerprint(config);
    report.scp_count = points;
    const auto& c = config.constants;
    const auto end = end_slot(config);
    for (std::uint32_t slot = config.start_slot; slot < end; ++slot) {
        const auto& o = feed.at(slot);
        for (std::size_t i = 0; i < fleet.size(); ++i) {
            if (plugged[i] && slot >= leave_slot(fleet[i], end)) {
                plugged[i] = false;
                --occupied;
            }
        }
        for (std::size_t i = 0; i < fleet.size() && occupied < points; ++i) {
            if (!plugged[i] && slot >= fleet[i].arrival_slot && slot < leave_slot(fleet[i], end)) {
                plugged[i] = true;
                ++occupied;
            }
        }

        SlotOutcome out;
        out.slot = slot;
        out.p_real_time = o.p_real_time;
        out.tier = o.tier;
        const double p_c = o.p_real_time + o.w_service;
        double charged = 0.0;
        for (std::size_t i = 0; i < fleet.size(); ++i) {
            if (!plugged[i]) continue;
            const double cap = fleet[i].battery_volume;
            const double x = std::clamp((1.0 - soc[i]) * cap / c.e0, 0.0, 1.0);
            EvDispatch d;
            d.ev_id = fleet[i].ev_id;
            d.mode = x > 0.0 ? Mode::Charge : Mode::Idle;
            d.x = x;
            d.energy_kwh = c.e0 * x;
            d.payment = p_c * c.e0 * x;
            d.soc_before = soc[i];
            soc[i] = std::min(1.0, soc[i] + c.e0 * x / cap);
            d.soc_after = soc[i];
            charged += d.energy_kwh;
            out.breakdown.r_service += o.w_service * c.e0 * x;
            report.eva_from_evs += d.payment;
            report.eva_to_grid += o.p_real_time * c.e0 * x;
            out.dispatches.push_back(d);
        }
        out.breakdown.c_limit = std::abs(o.e_limit) * o.delta;
        out.breakdown.total = out.breakdown.r_service - out.breakdown.c_limit;
        report.eva_to_grid += out.breakdown.c_limit;
        out.charge_kw = charged / kSlotHours;
        report.slots.push_back(std::move(out));
    }

    report.ev_totals = ev_totals(config.fleet, report.slots);
    report.summary = summarize(report.slots);
    return report;
}

Comparison compare_reports(const RunReport& scheme, const RunReport& baseline) {
    if (scheme.provenance != baseline.provenance)
        throw ConfigMismatch("reports come from different scenarios (" + scheme.provenance.substr(0, 12) + " vs " +
                             baseline.provenance.substr(0, 12) + ")");
    Comparison c;
    c.scheme_mean_charging_cost = scheme.summary.mean_charging_cost;
    c.baseline_mean_charging_cost = baseline.summary.mean_charging_cost;
    c.delta_mean_charging_cost = c.scheme_mean_charging_cost - c.baseline_mean_charging_cost;
    c.scheme_valley_share = scheme.summary.valley_share;
    c.baseline_valley_share = baseline.summary.valley_share;
    c.delta_valley_share = c.scheme_valley_share - c.baseline_valley_share;
    c.scheme_eva_profit = scheme.summary.eva_profit;
    c.baseline_eva_profit = baseline.summary.eva_profit;
    c.delta_eva_profit = c.scheme_eva_profit - c.baseline_eva_profit;
    return c;
}

}  // namespace v2g
