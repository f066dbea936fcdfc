#pragma once

// Leader/follower pricing game between an EV aggregator and plugged-in EVs.
//
// Everything in this header is a pure function of its arguments. Prices are
// CNY/kWh, energies kWh, and the follower decision x is the charged (x > 0) or
// discharged (x < 0) energy expressed as a fraction of the standard quantity e0.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace v2g {

struct EvId {
    std::uint64_t value = 0;
    auto operator<=>(const EvId&) const = default;
};

std::string to_string(EvId id);

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Optional departure target: the EV must be able to reach target_soc by
/// charging at full rate in the slots still left (this one included).
struct DepartureRequirement {
    double target_soc = 0.0;
    std::uint32_t slots_remaining = 1;
    auto operator<=>(const DepartureRequirement&) const = default;
};

struct EvChargeState {
    EvId ev_id;
    double capacity = 0.0;  // kWh
    double soc = 0.0;       // [0, 1]
    double beta = 0.16;     // willingness constant
    double a = -0.01;       // degradation coefficient, CNY/kWh
    double u_idle = 0.0;
    std::optional<DepartureRequirement> departure;

    double stored_energy() const { return soc * capacity; }
    bool operator==(const EvChargeState&) const = default;
};

void validate(const EvChargeState& ev);

struct MarketParams {
    double p_real_time = 0.0;  // retail price
    double w_service = 0.5;    // service fee on charging
    double w_grid = 0.792;     // auxiliary-service price paid by the grid operator
    double p_delay = -0.1;     // idle fee per slot, stored with its tariff sign
    double p_d_min = 0.0;
    double p_d_max = 0.0;
    double e0 = 3.75;          // kWh per unit of x
    double delta = 0.0;        // penalty per kWh of auxiliary shortfall/excess
    double epsilon = 0.01;     // price-search precision
    double e_limit = 0.0;      // auxiliary demand for the slot, kWh

    /// Price a charging EV pays per kWh.
    double charging_price() const { return p_real_time + w_service; }

    bool operator==(const MarketParams&) const = default;
};

void validate(const MarketParams& params);

enum class Mode : std::uint8_t { Charge, Idle, Discharge };

const char* to_string(Mode mode);

struct FollowerDecision {
    double x = 0.0;
    Mode mode = Mode::Idle;
    double utility = 0.0;

    bool operator==(const FollowerDecision&) const = default;
};

struct RevenueBreakdown {
    double r_service = 0.0;
    double r_grid_v2g = 0.0;
    double c_v2g = 0.0;
    double c_limit = 0.0;
    double total = 0.0;

    bool operator==(const RevenueBreakdown&) const = default;
};

struct LeaderSolution {
    double p_d_star = 0.0;
    RevenueBreakdown breakdown;
    std::vector<std::pair<EvId, FollowerDecision>> decisions;  // ascending ev_id

    bool operator==(const LeaderSolution&) const = default;
};

struct FeasibleBounds {
    double lo = 0.0;
    double hi = 0.0;
};

inline constexpr double kSocFloor = 0.01;

/// Charging/discharging satisfaction. Continuous and strictly increasing on
/// [-1, 1]; S(-1) = -w, S(0) = 0, S(1) = w.
double satisfaction(double x, double w);

/// beta / SOC, with SOC floored at kSocFloor so an empty battery stays finite.
double willingness(double beta, double soc);

/// Range of x that keeps SOC inside [0, 1] after dispatch. With a departure
/// requirement the lower bound is raised (possibly above zero) so the target
/// stays reachable.
FeasibleBounds feasible_bounds(const EvChargeState& ev, double e0);

/// Follower utility at x. Throws DomainError when x lies outside
/// feasible_bounds(ev, params.e0).
double follower_utility(double x, const MarketParams& params, const EvChargeState& ev, double p_d);

/// Utility-maximising x over the feasible interval. Each branch (charge, idle,
/// discharge) is solved in closed form; the best branch wins and ties go to
/// Idle, then Charge, then Discharge.
FollowerDecision follower_best_response(const EvChargeState& ev, const MarketParams& params, double p_d);

/// Fleet sorted by ev_id with the price-independent parts of every follower's
/// best response cached. Revenue evaluation at a price only redoes the
/// discharge branch.
class PreparedFleet {
public:
    PreparedFleet(std::span<const EvChargeState> fleet, const MarketParams& params);

    std::size_t size() const { return followers_.size(); }
    EvId id(std::size_t i) const { return followers_[i].id; }

    FollowerDecision respond(std::size_t i, double p_d) const;
    RevenueBreakdown revenue(double p_d) const;
    std::vector<std::pair<EvId, FollowerDecision>> decisions(double p_d) const;

    const MarketParams& params() const { return params_; }

private:
    struct Follower {
        EvId id;
        double w;
        double a;
        double u_idle;
        FeasibleBounds bounds;
        std::optional<FollowerDecision> charge;  // best strictly positive x, if any
    };

    MarketParams params_;
    std::vector<Follower> followers_;
};

/// EVA revenue at discharging price p_d, with every EV playing its best
/// response. Sums run in ascending ev_id order.
RevenueBreakdown eva_revenue(std::span<const EvChargeState> fleet, const MarketParams& params, double p_d);

/// {lo, lo + eps, ...} truncated at hi, with hi always present as the last point.
std::vector<double> price_grid(double p_d_min, double p_d_max, double epsilon);

struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    bool empty() const { return begin == end; }
    bool operator==(const IndexRange&) const = default;
};

/// Contiguous split of [0, grid_size) with lengths proportional to the
/// capacities (largest-remainder rounding, ties to the lower index).
std::vector<IndexRange> partition_grid(std::size_t grid_size, std::span<const double> capacities);

struct SearchResult {
    double value = 0.0;
    double price = 0.0;

    bool operator==(const SearchResult&) const = default;
};

/// Best (max revenue, then min price) grid point inside range. Empty range
/// gives nullopt.
std::optional<SearchResult> leader_grid_search(const PreparedFleet& fleet, std::span<const double> grid,
                                               IndexRange range);

/// Order-independent merge of subrange results under the same rule.
std::optional<SearchResult> reduce_search_results(std::span<const std::optional<SearchResult>> partial);

/// Full leader solution at a fixed price.
LeaderSolution solution_at(const PreparedFleet& fleet, double p_d);

/// Exhaustive search over the whole price grid of params.
LeaderSolution leader_grid_search(std::span<const EvChargeState> fleet, const MarketParams& params);

}  // namespace v2g
