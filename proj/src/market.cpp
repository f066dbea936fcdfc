#include "v2g/market.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace v2g {

namespace {

bool finite(double v) { return std::isfinite(v); }

double charge_utility(double x, double w, double p_c) { return satisfaction(x, w) - p_c * x; }

// S - BDC + p_d x with BDC = a x.
double discharge_utility(double x, double w, double a, double p_d) {
    return satisfaction(x, w) - a * x + p_d * x;
}

std::optional<FollowerDecision> best_charge(double w, double p_c, FeasibleBounds b) {
    if (b.hi <= 0.0) return std::nullopt;
    const double lo = std::max(b.lo, 0.0);
    double x = p_c > 0.0 ? w / (p_c * std::numbers::ln2) - 1.0 : b.hi;
    x = std::clamp(x, lo, b.hi);
    if (x <= 0.0) return std::nullopt;  // supremum at 0+, never beats idle
    return FollowerDecision{x, Mode::Charge, charge_utility(x, w, p_c)};
}

std::optional<FollowerDecision> best_discharge(double w, double a, double p_d, FeasibleBounds b) {
    if (b.lo >= 0.0) return std::nullopt;
    const double slope = a - p_d;
    if (slope <= 0.0) return std::nullopt;  // utility increasing on [lo, 0)
    const double x = std::clamp(w / (slope * std::numbers::ln2) - 2.0, b.lo, 0.0);
    if (x >= 0.0) return std::nullopt;
    return FollowerDecision{x, Mode::Discharge, discharge_utility(x, w, a, p_d)};
}

FollowerDecision pick(std::optional<FollowerDecision> idle, const std::optional<FollowerDecision>& charge,
                      const std::optional<FollowerDecision>& discharge) {
    std::optional<FollowerDecision> best = idle;
    for (const auto* cand : {&charge, &discharge}) {
        if (*cand && (!best || (*cand)->utility > best->utility)) best = *cand;
    }
    // Unreachable for validated inputs: idle is only excluded when lo > 0,
    // which guarantees a charge candidate.
    return best.value_or(FollowerDecision{});
}

}  // namespace

std::string to_string(EvId id) { return std::to_string(id.value); }

const char* to_string(Mode mode) {
    switch (mode) {
        case Mode::Charge: return "charge";
        case Mode::Idle: return "idle";
        case Mode::Discharge: return "discharge";
    }
    return "?";
}

void validate(const EvChargeState& ev) {
    if (!finite(ev.soc) || ev.soc < 0.0 || ev.soc > 1.0)
        throw DomainError("soc outside [0,1] for EV " + to_string(ev.ev_id));
    if (!finite(ev.capacity) || ev.capacity <= 0.0)
        throw DomainError("capacity must be positive for EV " + to_string(ev.ev_id));
    if (!finite(ev.beta) || ev.beta <= 0.0)
        throw DomainError("beta must be positive for EV " + to_string(ev.ev_id));
    if (!finite(ev.a) || !finite(ev.u_idle))
        throw DomainError("non-finite preference for EV " + to_string(ev.ev_id));
    if (ev.departure) {
        const auto& d = *ev.departure;
        if (!finite(d.target_soc) || d.target_soc < 0.0 || d.target_soc > 1.0 || d.slots_remaining == 0)
            throw DomainError("bad departure requirement for EV " + to_string(ev.ev_id));
    }
}

void validate(const MarketParams& p) {
    const double all[] = {p.p_real_time, p.w_service, p.w_grid, p.p_delay, p.p_d_min,
                          p.p_d_max,     p.e0,        p.delta,  p.epsilon, p.e_limit};
    if (!std::all_of(std::begin(all), std::end(all), finite)) throw DomainError("non-finite market parameter");
    if (!(p.p_d_min <= p.p_d_max && p.p_d_max <= 0.0))
        throw DomainError("discharging price bounds must satisfy p_d_min <= p_d_max <= 0");
    if (p.e0 <= 0.0) throw DomainError("e0 must be positive");
    if (p.epsilon <= 0.0) throw DomainError("epsilon must be positive");
    if (p.delta < 0.0) throw DomainError("delta must be non-negative");
    if (p.e_limit < 0.0) throw DomainError("e_limit must be non-negative");
}

double satisfaction(double x, double w) {
    if (!(x >= -1.0 && x <= 1.0)) throw DomainError("satisfaction: x outside [-1,1]");
    if (!(w > 0.0) || !finite(w)) throw DomainError("satisfaction: willingness must be positive");
    if (x >= 0.0) return w * std::log2(1.0 + x);
    return w * (std::log2(2.0 + x) - 1.0);
}

double willingness(double beta, double soc) {
    if (!(beta > 0.0) || !finite(beta)) throw DomainError("willingness: beta must be positive");
    if (!(soc >= 0.0 && soc <= 1.0)) throw DomainError("willingness: soc outside [0,1]");
    return beta / std::max(soc, kSocFloor);
}

FeasibleBounds feasible_bounds(const EvChargeState& ev, double e0) {
    FeasibleBounds b;
    b.hi = std::min(1.0, (1.0 - ev.soc) * ev.capacity / e0);
    b.lo = std::max(-1.0, -ev.soc * ev.capacity / e0);
    if (ev.departure) {
        const double slots_after = static_cast<double>(ev.departure->slots_remaining) - 1.0;
        const double needed = (ev.departure->target_soc - ev.soc) * ev.capacity / e0 - slots_after;
        if (needed > b.lo) b.lo = std::min(needed, b.hi);
    }
    return b;
}

double follower_utility(double x, const MarketParams& params, const EvChargeState& ev, double p_d) {
    const auto b = feasible_bounds(ev, params.e0);
    if (!(x >= b.lo && x <= b.hi)) throw DomainError("follower_utility: x outside feasible bounds");
    if (x == 0.0) return ev.u_idle;
    const double w = willingness(ev.beta, ev.soc);
    if (x > 0.0) return charge_utility(x, w, params.charging_price());
    return discharge_utility(x, w, ev.a, p_d);
}

FollowerDecision follower_best_response(const EvChargeState& ev, const MarketParams& params, double p_d) {
    const EvChargeState one[] = {ev};
    return PreparedFleet(one, params).respond(0, p_d);
}

PreparedFleet::PreparedFleet(std::span<const EvChargeState> fleet, const MarketParams& params) : params_(params) {
    validate(params_);
    followers_.reserve(fleet.size());
    const double p_c = params_.charging_price();
    for (const auto& ev : fleet) {
        validate(ev);
        Follower f{ev.ev_id, willingness(ev.beta, ev.soc), ev.a, ev.u_idle, feasible_bounds(ev, params_.e0), {}};
        f.charge = best_charge(f.w, p_c, f.bounds);
        followers_.push_back(f);
    }
    std::sort(followers_.begin(), followers_.end(), [](const Follower& l, const Follower& r) { return l.id < r.id; });
    for (std::size_t i = 1; i < followers_.size(); ++i) {
        if (followers_[i].id == followers_[i - 1].id)
            throw DomainError("duplicate ev_id " + to_string(followers_[i].id));
    }
}

FollowerDecision PreparedFleet::respond(std::size_t i, double p_d) const {
    const auto& f = followers_[i];
    std::optional<FollowerDecision> idle;
    if (f.bounds.lo <= 0.0) idle = FollowerDecision{0.0, Mode::Idle, f.u_idle};
    return pick(idle, f.charge, best_discharge(f.w, f.a, p_d, f.bounds));
}

RevenueBreakdown PreparedFleet::revenue(double p_d) const {
    const auto& p = params_;
    RevenueBreakdown r;
    double delivered = 0.0;
    for (std::size_t i = 0; i < followers_.size(); ++i) {
        const auto d = respond(i, p_d);
        switch (d.mode) {
            case Mode::Charge:
                r.r_service += p.w_service * p.e0 * d.x;
                break;
            case Mode::Idle:
                r.c_v2g += std::abs(p.p_delay);
                break;
            case Mode::Discharge:
                delivered += p.e0 * std::abs(d.x);
                r.c_v2g += p_d * p.e0 * d.x;
                break;
        }
    }
    r.r_grid_v2g = p.w_grid * delivered;
    r.c_limit = std::abs(p.e_limit - delivered) * p.delta;
    r.total = r.r_service + r.r_grid_v2g - r.c_v2g - r.c_limit;
    return r;
}

std::vector<std::pair<EvId, FollowerDecision>> PreparedFleet::decisions(double p_d) const {
    std::vector<std::pair<EvId, FollowerDecision>> out;
    out.reserve(followers_.size());
    for (std::size_t i = 0; i < followers_.size(); ++i) out.emplace_back(followers_[i].id, respond(i, p_d));
    return out;
}

RevenueBreakdown eva_revenue(std::span<const EvChargeState> fleet, const MarketParams& params, double p_d) {
    return PreparedFleet(fleet, params).revenue(p_d);
}

std::vector<double> price_grid(double p_d_min, double p_d_max, double epsilon) {
    if (!finite(p_d_min) || !finite(p_d_max) || !(p_d_min <= p_d_max))
        throw DomainError("price_grid: bounds inverted");
    if (!(epsilon > 0.0) || !finite(epsilon)) throw DomainError("price_grid: epsilon must be positive");
    const double steps = std::floor((p_d_max - p_d_min) / epsilon + 1e-9);
    if (steps > 1e7) throw DomainError("price_grid: more than 1e7 grid points");

    // Points within this distance of the upper bound snap onto it.
    const double snap = epsilon * 1e-6;
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(steps) + 2);
    for (std::size_t k = 0; k <= static_cast<std::size_t>(steps); ++k) {
        const double p = p_d_min + static_cast<double>(k) * epsilon;
        if (p > p_d_max - snap) break;
        grid.push_back(p);
    }
    grid.push_back(p_d_max);
    return grid;
}

std::vector<IndexRange> partition_grid(std::size_t grid_size, std::span<const double> capacities) {
    if (grid_size == 0) throw DomainError("partition_grid: empty grid");
    double total = 0.0;
    for (double c : capacities) {
        if (!finite(c) || c < 0.0) throw DomainError("partition_grid: capacities must be finite and >= 0");
        total += c;
    }
    if (!(total > 0.0)) throw DomainError("partition_grid: all capacities are zero");

    const std::size_t n = capacities.size();
    std::vector<std::size_t> len(n);
    std::vector<double> frac(n);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double quota = static_cast<double>(grid_size) * capacities[i] / total;
        len[i] = static_cast<std::size_t>(std::floor(quota));
        frac[i] = quota - std::floor(quota);
        assigned += len[i];
    }
    // Floating error could in theory push the floors over the total.
    for (std::size_t i = n; assigned > grid_size && i-- > 0;) {
        const auto take = std::min(len[i], assigned - grid_size);
        len[i] -= take;
        assigned -= take;
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return frac[l] > frac[r]; });
    for (std::size_t k = 0; assigned < grid_size; k = (k + 1) % n) {
        if (capacities[order[k]] > 0.0) {
            ++len[order[k]];
            ++assigned;
        }
    }

    std::vector<IndexRange> ranges(n);
    std::size_t at = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ranges[i] = {at, at + len[i]};
        at += len[i];
    }
    return ranges;
}

namespace {

bool better(const SearchResult& cand, const SearchResult& best) {
    return cand.value > best.value || (cand.value == best.value && cand.price < best.price);
}

}  // namespace

std::optional<SearchResult> leader_grid_search(const PreparedFleet& fleet, std::span<const double> grid,
                                               IndexRange range) {
    if (range.end > grid.size() || range.begin > range.end)
        throw DomainError("leader_grid_search: range outside the price grid");
    std::optional<SearchResult> best;
    for (std::size_t k = range.begin; k < range.end; ++k) {
        const SearchResult cand{fleet.revenue(grid[k]).total, grid[k]};
        if (!best || better(cand, *best)) best = cand;
    }
    return best;
}

std::optional<SearchResult> reduce_search_results(std::span<const std::optional<SearchResult>> partial) {
    std::optional<SearchResult> best;
    for (const auto& r : partial) {
        if (r && (!best || better(*r, *best))) best = r;
    }
    return best;
}

LeaderSolution solution_at(const PreparedFleet& fleet, double p_d) {
    return LeaderSolution{p_d, fleet.revenue(p_d), fleet.decisions(p_d)};
}

LeaderSolution leader_grid_search(std::span<const EvChargeState> fleet, const MarketParams& params) {
    const PreparedFleet prepared(fleet, params);
    const auto grid = price_grid(params.p_d_min, params.p_d_max, params.epsilon);
    const auto best = leader_grid_search(prepared, grid, IndexRange{0, grid.size()});
    return solution_at(prepared, best->price);
}

}  // namespace v2g
