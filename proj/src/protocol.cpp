#include "v2g/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

#include "v2g/text.hpp"

namespace v2g {

using Code = ProtocolError::Code;

const char* to_string(ProtocolError::Code code) {
    switch (code) {
        case Code::OccupiedPoint: return "OccupiedPoint";
        case Code::IdentityFailure: return "IdentityFailure";
        case Code::ValidationError: return "ValidationError";
        case Code::BadSignature: return "BadSignature";
        case Code::ReplayedNonce: return "ReplayedNonce";
        case Code::NonceGap: return "NonceGap";
        case Code::StaleSlot: return "StaleSlot";
        case Code::MissingFeed: return "MissingFeed";
        case Code::NoFunctionalNodes: return "NoFunctionalNodes";
        case Code::InsufficientVotes: return "InsufficientVotes";
        case Code::LedgerRejected: return "LedgerRejected";
    }
    return "?";
}

namespace {

[[noreturn]] void fail(Code code, const std::string& what) {
    throw ProtocolError(code, std::string(to_string(code)) + ": " + what);
}

Code code_for(RejectReason r) {
    switch (r) {
        case RejectReason::BadSignature: return Code::BadSignature;
        case RejectReason::ReplayedNonce: return Code::ReplayedNonce;
        case RejectReason::NonceGap: return Code::NonceGap;
        case RejectReason::StaleSlot: return Code::StaleSlot;
    }
    return Code::LedgerRejected;
}

void submit_or_throw(TxPool& pool, const Transaction& tx, const Chain& chain) {
    if (auto r = submit_transaction(pool, tx, chain); !r.accepted())
        fail(code_for(*r.rejected), std::string(to_string(tx.kind())) + " from " + tx.sender);
}

// Signs with the wallet, hands the transaction to accept(), and gives the
// nonce back if it was not accepted.
template <typename Accept>
Transaction sign_and_deliver(Payload payload, WalletKey& wallet, std::uint64_t slot, const SignatureScheme& scheme,
                             Accept&& accept) {
    const auto nonce = wallet.next_nonce;
    auto tx = make_transaction(std::move(payload), wallet, slot, scheme);
    try {
        accept(tx);
    } catch (...) {
        wallet.next_nonce = nonce;
        throw;
    }
    return tx;
}

ScpNode& node_at(WorldState& world, std::size_t index) {
    if (index >= world.nodes.size()) fail(Code::ValidationError, "no SCP with index " + std::to_string(index));
    return world.nodes[index];
}

}  // namespace

const OracleSlot& OracleFeed::at(std::uint64_t slot) const {
    if (slot < first_slot_ || slot >= end_slot()) throw MissingFeed("no oracle data for slot " + std::to_string(slot));
    return slots_[slot - first_slot_];
}

OracleFeed build_oracle_feed(const PriceSchedule& tariff, const AuxDemandProfile& aux, const MarketConstants& c,
                             std::uint32_t start_slot, std::uint32_t horizon) {
    std::vector<OracleSlot> slots(horizon);
    for (std::uint32_t k = 0; k < horizon; ++k) {
        auto& o = slots[k];
        std::tie(o.p_real_time, o.tier) = tariff.price_at(start_slot + k);
        o.w_service = c.w_service;
        o.w_grid = c.w_grid;
        o.p_d_max = c.p_d_max;
        o.p_d_min = std::min(c.p_d_min_factor * o.p_real_time, c.p_d_max);
        o.delta = c.delta_factor * o.p_real_time;
        o.e_limit = aux_demand_at(aux, k);
    }
    return OracleFeed(start_slot, std::move(slots));
}

std::string ev_wallet_id(EvId id) { return "ev-" + to_string(id); }

std::size_t WorldState::ev_index(EvId id) const {
    const auto it = std::lower_bound(evs.begin(), evs.end(), id,
                                     [](const LightClientEv& ev, EvId v) { return ev.ev_id < v; });
    if (it == evs.end() || it->ev_id != id) fail(Code::ValidationError, "unknown EV " + to_string(id));
    return static_cast<std::size_t>(it - evs.begin());
}

WorldState make_world(const WorldConfig& config, std::span<const EvRecord> fleet) {
    if (config.scp_count == 0) throw ConfigError("at least one SCP is required");
    if (!config.scp_capacities.empty() && config.scp_capacities.size() != config.scp_count)
        throw ConfigError("scp_capacities must list one value per SCP");
    if (config.min_departure_soc && !(*config.min_departure_soc >= 0.0 && *config.min_departure_soc <= 1.0))
        throw ConfigError("min_departure_soc must lie in [0,1]");

    WorldState w;
    w.scheme = make_scheme(config.scheme);
    w.constants = config.constants;
    w.end_slot = config.end_slot;
    w.min_departure_soc = config.min_departure_soc;
    w.threads = config.threads;
    w.oracle = make_wallet(*w.scheme, "oracle", config.key_seed);

    Membership membership;
    membership.scheme = std::string(w.scheme->name());
    membership.wallets.emplace(w.oracle.wallet_id, w.oracle.verify_key);

    for (std::size_t i = 0; i < config.scp_count; ++i) {
        ScpNode node;
        node.node_id = "scp-" + std::to_string(i);
        node.compute_capacity = config.scp_capacities.empty() ? 1.0 : config.scp_capacities[i];
        node.wallet = make_wallet(*w.scheme, node.node_id, config.key_seed);
        membership.full_nodes.push_back(node.node_id);
        membership.wallets.emplace(node.node_id, node.wallet.verify_key);
        w.nodes.push_back(std::move(node));
    }

    std::vector<EvRecord> sorted(fleet.begin(), fleet.end());
    std::sort(sorted.begin(), sorted.end(), [](const EvRecord& l, const EvRecord& r) { return l.ev_id < r.ev_id; });
    for (const auto& r : sorted) {
        validate(r);
        if (!w.evs.empty() && w.evs.back().ev_id == r.ev_id) throw ConfigError("duplicate EV id " + to_string(r.ev_id));
        LightClientEv ev;
        ev.ev_id = r.ev_id;
        ev.wallet = make_wallet(*w.scheme, ev_wallet_id(r.ev_id), config.key_seed);
        ev.charge_state = EvChargeState{r.ev_id, r.battery_volume, r.initial_battery / r.battery_volume,
                                        config.constants.beta, config.constants.a, config.constants.u_idle, {}};
        validate(ev.charge_state);
        ev.arrival_slot = r.arrival_slot;
        ev.departure_slot = r.departure_slot;
        membership.wallets.emplace(ev.wallet.wallet_id, ev.wallet.verify_key);
        w.evs.push_back(std::move(ev));
    }

    const auto genesis = Chain::genesis(std::move(membership));
    for (auto& node : w.nodes) node.chain = genesis;
    return w;
}

unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("V2G_SIM_THREADS")) {
        try {
            const auto v = text::parse_uint(env);
            if (v > 0) return static_cast<unsigned>(std::min<unsigned long long>(v, 1024));
        } catch (const std::invalid_argument&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// --- step 1 -----------------------------------------------------------------

void plug_in(WorldState& world, std::size_t node_index, std::size_t ev_index, std::uint64_t slot, TxPool& pool) {
    if (ev_index >= world.evs.size()) fail(Code::ValidationError, "no EV with index " + std::to_string(ev_index));
    auto& ev = world.evs[ev_index];
    if (slot < ev.arrival_slot || slot >= ev.departure_slot)
        fail(Code::ValidationError, "EV " + to_string(ev.ev_id) + " is not present at slot " + std::to_string(slot));
    if (ev.node) fail(Code::ValidationError, "EV " + to_string(ev.ev_id) + " is already plugged in");
    const auto& node = node_at(world, node_index);
    sign_and_deliver(PlugInPayload{ev.ev_id, node.node_id}, ev.wallet, slot, *world.scheme,
                     [&](const Transaction& tx) { accept_plug_in(world, node_index, tx, pool); });
}

void accept_plug_in(WorldState& world, std::size_t node_index, const Transaction& tx, TxPool& pool) {
    auto& node = node_at(world, node_index);
    const auto* p = std::get_if<PlugInPayload>(&tx.payload);
    if (!p || p->node_id != node.node_id) fail(Code::ValidationError, "not a PlugIn for " + node.node_id);
    const auto ev_index = world.ev_index(p->ev_id);
    if (tx.sender != ev_wallet_id(p->ev_id))
        fail(Code::IdentityFailure, "PlugIn for EV " + to_string(p->ev_id) + " signed by " + tx.sender);
    if (node.plugged_ev) fail(Code::OccupiedPoint, node.node_id + " already serves EV " + to_string(*node.plugged_ev));
    if (auto r = submit_transaction(pool, tx, node.chain); !r.accepted()) {
        if (*r.rejected == RejectReason::BadSignature)
            fail(Code::IdentityFailure, "PlugIn signature does not verify for " + tx.sender);
        fail(code_for(*r.rejected), "PlugIn from " + tx.sender);
    }
    node.plugged_ev = p->ev_id;
    node.ev_params.reset();
    world.evs[ev_index].node = node_index;
}

void unplug(WorldState& world, std::size_t node_index) {
    auto& node = node_at(world, node_index);
    if (!node.plugged_ev) return;
    world.evs[world.ev_index(*node.plugged_ev)].node.reset();
    node.plugged_ev.reset();
    node.ev_params.reset();
}

// --- step 2 -----------------------------------------------------------------

Transaction transfer_info(WorldState& world, std::size_t node_index, std::uint64_t slot, TxPool& pool) {
    const auto& node = node_at(world, node_index);
    if (!node.plugged_ev) fail(Code::ValidationError, node.node_id + " has no plugged EV");
    auto& ev = world.evs[world.ev_index(*node.plugged_ev)];
    EvChargeState state = ev.charge_state;
    if (world.min_departure_soc) {
        const auto leave = std::min<std::uint64_t>(ev.departure_slot, world.end_slot);
        const auto left = leave > slot ? leave - slot : 1;
        state.departure = DepartureRequirement{*world.min_departure_soc, static_cast<std::uint32_t>(left)};
    }
    return sign_and_deliver(EvInfoPayload{state}, ev.wallet, slot, *world.scheme,
                            [&](const Transaction& tx) { accept_ev_info(world, node_index, tx, pool); });
}

void accept_ev_info(WorldState& world, std::size_t node_index, const Transaction& tx, TxPool& pool) {
    auto& node = node_at(world, node_index);
    const auto* p = std::get_if<EvInfoPayload>(&tx.payload);
    if (!p) fail(Code::ValidationError, "not an EvInfo transaction");
    if (!node.plugged_ev || p->state.ev_id != *node.plugged_ev)
        fail(Code::ValidationError, "EvInfo for EV " + to_string(p->state.ev_id) + " not plugged at " + node.node_id);
    if (tx.sender != ev_wallet_id(*node.plugged_ev))
        fail(Code::IdentityFailure, "EvInfo for EV " + to_string(p->state.ev_id) + " signed by " + tx.sender);
    try {
        validate(p->state);
    } catch (const DomainError& e) {
        fail(Code::ValidationError, e.what());
    }
    submit_or_throw(pool, tx, node.chain);
    node.ev_params = p->state;
}

// --- step 3 -----------------------------------------------------------------

MarketParams assimilate_data(WorldState& world, const OracleFeed& feed, std::uint64_t slot, TxPool& pool) {
    const OracleSlot* o = nullptr;
    try {
        o = &feed.at(slot);
    } catch (const MissingFeed& e) {
        fail(Code::MissingFeed, e.what());
    }
    const auto& c = world.constants;
    MarketParams params{o->p_real_time, o->w_service, o->w_grid, c.p_delay, o->p_d_min,
                        o->p_d_max,     c.e0,         o->delta,  c.epsilon, o->e_limit};
    try {
        validate(params);
    } catch (const DomainError& e) {
        fail(Code::ValidationError, std::string("oracle data for slot ") + std::to_string(slot) + ": " + e.what());
    }
    sign_and_deliver(OracleUpdatePayload{params}, world.oracle, slot, *world.scheme,
                     [&](const Transaction& tx) { submit_or_throw(pool, tx, world.chain()); });
    return params;
}

// --- step 4 -----------------------------------------------------------------

DistributedSearch distributed_price_search(std::span<const ScpNode> nodes, std::span<const EvChargeState> fleet,
                                           const MarketParams& params, unsigned threads) {
    std::vector<double> capacities;
    capacities.reserve(nodes.size());
    for (const auto& n : nodes) capacities.push_back(n.compute_capacity);
    if (std::none_of(capacities.begin(), capacities.end(), [](double c) { return c > 0.0; }))
        fail(Code::NoFunctionalNodes, "no SCP with positive compute capacity");

    std::optional<PreparedFleet> prepared;
    std::vector<double> grid;
    DistributedSearch out;
    try {
        prepared.emplace(fleet, params);
        grid = price_grid(params.p_d_min, params.p_d_max, params.epsilon);
        out.ranges = partition_grid(grid.size(), capacities);
    } catch (const DomainError& e) {
        fail(Code::ValidationError, e.what());
    }
    out.results.resize(nodes.size());

    std::vector<std::size_t> busy;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!out.ranges[i].empty()) busy.push_back(i);
    }
    const auto search = [&](std::size_t i) { out.results[i] = leader_grid_search(*prepared, grid, out.ranges[i]); };
    const auto workers = std::min<std::size_t>(std::max(1u, threads), busy.size());
    if (workers <= 1) {
        for (auto i : busy) search(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < workers; ++t) {
            pool.emplace_back([&] {
                for (std::size_t k; (k = next.fetch_add(1)) < busy.size();) search(busy[k]);
            });
        }
    }

    const auto best = reduce_search_results(out.results);
    out.solution = solution_at(*prepared, best->price);
    return out;
}

std::vector<EvChargeState> plugged_fleet(const WorldState& world) {
    std::vector<EvChargeState> fleet;
    for (const auto& node : world.nodes) {
        if (node.plugged_ev && node.ev_params) fleet.push_back(*node.ev_params);
    }
    std::sort(fleet.begin(), fleet.end(), [](const auto& l, const auto& r) { return l.ev_id < r.ev_id; });
    return fleet;
}

// --- step 5 -----------------------------------------------------------------

bool approves(std::span<const EvChargeState> fleet, const MarketParams& params, const LeaderSolution& proposal,
              const std::optional<SearchResult>& own_best, std::span<const std::optional<SearchResult>> reported) {
    if (!(proposal.p_d_star >= params.p_d_min && proposal.p_d_star <= params.p_d_max)) return false;
    const auto reval = PreparedFleet(fleet, params).revenue(proposal.p_d_star);
    if (reval != proposal.breakdown) return false;
    if (own_best && reval.total < own_best->value) return false;
    return std::none_of(reported.begin(), reported.end(),
                        [&](const auto& r) { return r && reval.total < r->value; });
}

double settlement_payment(const FollowerDecision& d, const MarketParams& params, double p_d) {
    switch (d.mode) {
        case Mode::Charge: return params.charging_price() * params.e0 * d.x;
        case Mode::Discharge: return -(p_d * params.e0 * d.x);
        case Mode::Idle: return -std::abs(params.p_delay);
    }
    return 0.0;
}

Block commit_solution(WorldState& world, const LeaderSolution& proposal, const DistributedSearch& search,
                      const MarketParams& params, std::uint64_t slot, TxPool& pool) {
    const auto n = world.nodes.size();
    if (search.results.size() != n) fail(Code::ValidationError, "search results do not match the SCP set");
    auto& proposer = world.nodes[slot % n];
    const auto fleet = plugged_fleet(world);

    sign_and_deliver(SolutionProposalPayload{proposal.p_d_star, proposal.breakdown}, proposer.wallet, slot,
                     *world.scheme, [&](const Transaction& tx) { submit_or_throw(pool, tx, proposer.chain); });

    std::vector<bool> approved(n);
    std::size_t approvals = 0;
    for (std::size_t i = 0; i < n; ++i) {
        approved[i] = approves(fleet, params, proposal, search.results[i], search.results);
        approvals += approved[i];
    }
    if (approvals * 2 <= n)
        fail(Code::InsufficientVotes, std::to_string(approvals) + " of " + std::to_string(n) +
                                          " SCPs approved p_d=" + text::format_number(proposal.p_d_star));

    for (auto& node : world.nodes) {
        if (!node.plugged_ev || !node.ev_params) continue;
        auto& ev = world.evs[world.ev_index(*node.plugged_ev)];
        const auto d = follower_best_response(*node.ev_params, params, proposal.p_d_star);
        const double payment = settlement_payment(d, params, proposal.p_d_star);
        sign_and_deliver(DispatchPayload{ev.ev_id, d.x, payment}, node.wallet, slot, *world.scheme,
                         [&](const Transaction& tx) { submit_or_throw(pool, tx, node.chain); });
        sign_and_deliver(SettlementPayload{ev.ev_id, payment}, ev.wallet, slot, *world.scheme,
                         [&](const Transaction& tx) { submit_or_throw(pool, tx, node.chain); });
    }

    auto block = world.chain().propose(slot, proposer.node_id, pool.take());
    for (std::size_t i = 0; i < n; ++i) {
        if (approved[i]) block.votes.push_back(sign_vote(world.nodes[i].wallet, block.header, *world.scheme));
    }
    Chain next;
    try {
        next = append_block(world.chain(), std::move(block));
    } catch (const LedgerError& e) {
        fail(e.code() == LedgerError::Code::InsufficientVotes ? Code::InsufficientVotes : Code::LedgerRejected,
             e.what());
    }
    for (auto& node : world.nodes) node.chain = next;
    return next.tip();
}

// --- step 6 -----------------------------------------------------------------

SlotOutcome settle_and_sync(WorldState& world, const Block& block, const MarketParams& params, std::uint64_t slot) {
    SlotOutcome out;
    out.slot = slot;
    out.p_real_time = params.p_real_time;
    out.block_height = block.header.height;

    double charged = 0.0;
    double discharged = 0.0;
    for (const auto& tx : block.txns) {
        if (const auto* s = std::get_if<SolutionProposalPayload>(&tx.payload)) {
            out.p_d_star = s->p_d_star;
            out.breakdown = s->breakdown;
        } else if (const auto* d = std::get_if<DispatchPayload>(&tx.payload)) {
            auto& ev = world.evs[world.ev_index(d->ev_id)];
            auto& state = ev.charge_state;
            EvDispatch rec{d->ev_id, Mode::Idle, d->x, params.e0 * d->x, d->payment, state.soc, state.soc};
            rec.mode = d->x > 0.0 ? Mode::Charge : d->x < 0.0 ? Mode::Discharge : Mode::Idle;
            state.soc = std::clamp(state.soc + params.e0 * d->x / state.capacity, 0.0, 1.0);
            rec.soc_after = state.soc;
            ev.balance -= d->payment;
            world.eva_from_evs += d->payment;
            if (d->x > 0.0) {
                charged += params.e0 * d->x;
                world.eva_to_grid += params.p_real_time * params.e0 * d->x;
            } else if (d->x < 0.0) {
                discharged += params.e0 * -d->x;
            }
            out.dispatches.push_back(rec);
        }
    }
    world.grid_to_eva += out.breakdown.r_grid_v2g;
    world.eva_to_grid += out.breakdown.c_limit;
    std::sort(out.dispatches.begin(), out.dispatches.end(),
              [](const EvDispatch& l, const EvDispatch& r) { return l.ev_id < r.ev_id; });
    out.charge_kw = charged / kSlotHours;
    out.discharge_kw = discharged / kSlotHours;

    for (auto& ev : world.evs) {
        if (!ev.node) continue;
        const auto& chain = world.nodes[*ev.node].chain;
        for (auto h = ev.headers.size(); h < chain.length(); ++h) {
            if (!extend_header_chain(ev.headers, chain.block(h).header))
                fail(Code::LedgerRejected, "header " + std::to_string(h) + " does not extend EV " +
                                               to_string(ev.ev_id) + "'s header chain");
        }
    }
    world.last_slot = slot;
    return out;
}

// --- full cycle ---------------------------------------------------------------

SlotOutcome run_slot(WorldState& world, const OracleFeed& feed, std::uint64_t slot,
                     const ProposalOverride& override_proposal) {
    if (world.last_slot && slot <= *world.last_slot)
        fail(Code::StaleSlot, "slot " + std::to_string(slot) + " already executed");
    if (slot >= world.end_slot) fail(Code::MissingFeed, "slot " + std::to_string(slot) + " beyond the horizon");

    WorldState w = world;
    TxPool pool(slot);

    for (std::size_t i = 0; i < w.nodes.size(); ++i) {
        if (!w.nodes[i].plugged_ev) continue;
        const auto& ev = w.evs[w.ev_index(*w.nodes[i].plugged_ev)];
        if (slot >= ev.departure_slot) unplug(w, i);
    }
    std::size_t free_node = 0;
    for (std::size_t e = 0; e < w.evs.size(); ++e) {
        const auto& ev = w.evs[e];
        if (ev.node || slot < ev.arrival_slot || slot >= ev.departure_slot) continue;
        while (free_node < w.nodes.size() && w.nodes[free_node].plugged_ev) ++free_node;
        if (free_node == w.nodes.size()) break;  // the rest wait for a free point
        plug_in(w, free_node, e, slot, pool);
    }
    for (std::size_t i = 0; i < w.nodes.size(); ++i) {
        if (w.nodes[i].plugged_ev) transfer_info(w, i, slot, pool);
    }

    const auto params = assimilate_data(w, feed, slot, pool);
    const auto fleet = plugged_fleet(w);
    const auto search = distributed_price_search(w.nodes, fleet, params, resolve_threads(w.threads));
    const auto proposal = override_proposal ? override_proposal(search, params) : search.solution;
    const auto block = commit_solution(w, proposal, search, params, slot, pool);
    auto outcome = settle_and_sync(w, block, params, slot);
    outcome.tier = feed.at(slot).tier;

    world = std::move(w);
    return outcome;
}

}  // namespace v2g
