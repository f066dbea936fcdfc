#pragma once

// Per-slot trading cycle executed by smart charging points (SCPs):
//
//   1. plug-in         EV signs a PlugIn; the SCP checks it against the EV's wallet
//   2. info transfer   EV signs its follower parameters (EvInfo); the SCP validates and keeps them
//   3. assimilation    the oracle signs the slot's market inputs (OracleUpdate)
//   4. price search    the discharging-price grid is split across SCPs by compute capacity
//   5. vote & commit   the proposer signs the solution; SCPs re-evaluate it and vote; the block
//                      carries the slot's transactions plus signed Dispatch/Settlement records
//   6. settle & sync   committed dispatches move energy and money; EVs sync block headers
//
// A slot either commits one block or leaves the world untouched.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "v2g/fleet.hpp"
#include "v2g/ledger.hpp"
#include "v2g/market.hpp"

namespace v2g {

class ProtocolError : public std::runtime_error {
public:
    enum class Code {
        OccupiedPoint,
        IdentityFailure,
        ValidationError,
        BadSignature,
        ReplayedNonce,
        NonceGap,
        StaleSlot,
        MissingFeed,
        NoFunctionalNodes,
        InsufficientVotes,
        LedgerRejected,
    };
    ProtocolError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

const char* to_string(ProtocolError::Code code);

/// Tariff-independent constants of the case study. Per-slot bounds and the
/// penalty factor scale with the real-time price.
struct MarketConstants {
    double w_grid = 0.792;
    double w_service = 0.5;
    double p_d_max = 0.0;
    double p_d_min_factor = -3.0;  // p_d_min = factor * p_real_time
    double delta_factor = 2.0;     // delta = factor * p_real_time
    double e0 = 3.75;
    double p_delay = -0.1;
    double epsilon = 0.01;
    // Per-EV preferences applied to every fleet record.
    double beta = 0.16;
    double a = -0.01;
    double u_idle = 0.0;
};

struct OracleSlot {
    double p_real_time = 0.0;
    Tier tier = Tier::Normal;
    double w_service = 0.0;
    double w_grid = 0.0;
    double p_d_min = 0.0;
    double p_d_max = 0.0;
    double delta = 0.0;
    double e_limit = 0.0;
};

class OracleFeed {
public:
    OracleFeed() = default;
    OracleFeed(std::uint64_t first_slot, std::vector<OracleSlot> slots)
        : first_slot_(first_slot), slots_(std::move(slots)) {}

    std::uint64_t first_slot() const { return first_slot_; }
    std::uint64_t end_slot() const { return first_slot_ + slots_.size(); }
    /// Throws MissingFeed outside [first_slot, end_slot).
    const OracleSlot& at(std::uint64_t slot) const;

private:
    std::uint64_t first_slot_ = 0;
    std::vector<OracleSlot> slots_;
};

/// Feed for slots [start_slot, start_slot + horizon); aux is indexed by horizon position.
OracleFeed build_oracle_feed(const PriceSchedule& tariff, const AuxDemandProfile& aux, const MarketConstants& constants,
                             std::uint32_t start_slot, std::uint32_t horizon);

struct ScpNode {
    std::string node_id;
    double compute_capacity = 1.0;
    WalletKey wallet;
    Chain chain;
    std::optional<EvId> plugged_ev;
    std::optional<EvChargeState> ev_params;  // from the last accepted EvInfo
};

struct LightClientEv {
    EvId ev_id;
    WalletKey wallet;
    HeaderChain headers;
    EvChargeState charge_state;
    double balance = 0.0;  // CNY
    std::uint32_t arrival_slot = 0;
    std::uint32_t departure_slot = 0;
    std::optional<std::size_t> node;  // SCP index while plugged
};

std::string ev_wallet_id(EvId id);

struct WorldState {
    std::shared_ptr<const SignatureScheme> scheme;
    MarketConstants constants;
    std::vector<ScpNode> nodes;
    std::vector<LightClientEv> evs;  // ascending ev_id
    WalletKey oracle;
    std::uint32_t end_slot = kDefaultStartSlot + kSlotsPerDay;  // first slot past the horizon
    std::optional<double> min_departure_soc;
    unsigned threads = 0;  // 0: V2G_SIM_THREADS or hardware concurrency
    std::optional<std::uint64_t> last_slot;

    // Cumulative money flows, CNY. EV<->EVA flows net to zero with EV balances;
    // grid flows are external.
    double eva_from_evs = 0.0;
    double grid_to_eva = 0.0;  // auxiliary-service revenue
    double eva_to_grid = 0.0;  // energy purchases for charging plus shortfall penalties

    const Chain& chain() const { return nodes.front().chain; }
    std::size_t ev_index(EvId id) const;
};

struct WorldConfig {
    MarketConstants constants;
    std::size_t scp_count = 1;
    std::vector<double> scp_capacities;  // empty: all 1.0
    std::uint64_t key_seed = 0;
    std::string scheme = "hmac-sha256";
    std::uint32_t end_slot = kDefaultStartSlot + kSlotsPerDay;
    std::optional<double> min_departure_soc;
    unsigned threads = 0;
};

/// Wallets, SCP nodes, light clients, and the genesis block for a fleet.
WorldState make_world(const WorldConfig& config, std::span<const EvRecord> fleet);

/// Worker count for the price search: explicit value, else V2G_SIM_THREADS,
/// else hardware concurrency.
unsigned resolve_threads(unsigned requested);

// --- step 1 -----------------------------------------------------------------

/// EV at ev_index plugs into node_index: the EV signs a PlugIn and the node accepts it.
void plug_in(WorldState& world, std::size_t node_index, std::size_t ev_index, std::uint64_t slot, TxPool& pool);

/// Node-side identity check of a PlugIn transaction.
void accept_plug_in(WorldState& world, std::size_t node_index, const Transaction& tx, TxPool& pool);

void unplug(WorldState& world, std::size_t node_index);

// --- step 2 -----------------------------------------------------------------

Transaction transfer_info(WorldState& world, std::size_t node_index, std::uint64_t slot, TxPool& pool);

void accept_ev_info(WorldState& world, std::size_t node_index, const Transaction& tx, TxPool& pool);

// --- step 3 -----------------------------------------------------------------

MarketParams assimilate_data(WorldState& world, const OracleFeed& feed, std::uint64_t slot, TxPool& pool);

// --- step 4 -----------------------------------------------------------------

struct DistributedSearch {
    LeaderSolution solution;
    std::vector<IndexRange> ranges;                     // one per node
    std::vector<std::optional<SearchResult>> results;   // one per node
};

DistributedSearch distributed_price_search(std::span<const ScpNode> nodes, std::span<const EvChargeState> fleet,
                                           const MarketParams& params, unsigned threads = 1);

/// Follower parameters held by the SCPs with a plugged EV.
std::vector<EvChargeState> plugged_fleet(const WorldState& world);

// --- step 5 -----------------------------------------------------------------

/// Node approval rule: the proposal is inside the price bounds, its breakdown
/// matches the node's own re-evaluation, and the re-evaluated revenue is at
/// least the node's subrange best and every subrange best broadcast in the search.
bool approves(std::span<const EvChargeState> fleet, const MarketParams& params, const LeaderSolution& proposal,
              const std::optional<SearchResult>& own_best, std::span<const std::optional<SearchResult>> reported);

/// Payment the EV makes for decision d at p_d (negative = credited).
double settlement_payment(const FollowerDecision& d, const MarketParams& params, double p_d);

/// Records the proposal, collects votes, adds signed Dispatch/Settlement
/// transactions, and appends the block on every node. Throws
/// ProtocolError(InsufficientVotes) without touching any chain when a strict
/// majority does not approve.
Block commit_solution(WorldState& world, const LeaderSolution& proposal, const DistributedSearch& search,
                      const MarketParams& params, std::uint64_t slot, TxPool& pool);

// --- step 6 -----------------------------------------------------------------

struct EvDispatch {
    EvId ev_id;
    Mode mode = Mode::Idle;
    double x = 0.0;
    double energy_kwh = 0.0;  // e0 * x
    double payment = 0.0;
    double soc_before = 0.0;
    double soc_after = 0.0;
};

struct SlotOutcome {
    std::uint64_t slot = 0;
    double p_real_time = 0.0;
    Tier tier = Tier::Normal;
    double p_d_star = 0.0;
    RevenueBreakdown breakdown;
    std::vector<EvDispatch> dispatches;  // ascending ev_id
    double charge_kw = 0.0;
    double discharge_kw = 0.0;
    std::uint64_t block_height = 0;
};

/// Applies the committed Dispatch records (SOC per the energy balance, money
/// flows) and brings every plugged EV's header chain up to date.
SlotOutcome settle_and_sync(WorldState& world, const Block& block, const MarketParams& params, std::uint64_t slot);

// --- full cycle ---------------------------------------------------------------

/// Hook to replace the searched solution before commit (fault injection).
using ProposalOverride = std::function<LeaderSolution(const DistributedSearch&, const MarketParams&)>;

/// Departures, arrivals, steps 2-6 for one slot. On any error the world is left
/// exactly as it was.
SlotOutcome run_slot(WorldState& world, const OracleFeed& feed, std::uint64_t slot,
                     const ProposalOverride& override_proposal = {});

}  // namespace v2g
