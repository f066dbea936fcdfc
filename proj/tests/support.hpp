#pragma once

// Seeded generators shared by the property tests.

#include <cstdint>
#include <random>
#include <vector>

#include "v2g/market.hpp"

namespace v2g::testing {

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) {
        const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }
    std::uint64_t below(std::uint64_t n) { return rng_() % n; }
    bool coin() { return (rng_() & 1) != 0; }

    EvChargeState ev(std::uint64_t id) {
        EvChargeState ev;
        ev.ev_id = EvId{id};
        ev.capacity = uniform(20.0, 170.0);
        ev.soc = below(10) == 0 ? (coin() ? 0.0 : 1.0) : uniform(0.0, 1.0);
        ev.beta = uniform(0.05, 0.4);
        ev.a = uniform(-0.05, 0.0);
        ev.u_idle = below(4) == 0 ? uniform(0.0, 0.1) : 0.0;
        return ev;
    }

    std::vector<EvChargeState> fleet(std::size_t n) {
        std::vector<EvChargeState> out;
        for (std::size_t i = 0; i < n; ++i) out.push_back(ev(1000 + 7 * i + below(5)));
        return out;
    }

    // Case-study-scale market inputs around a tariff price.
    MarketParams params() {
        static constexpr double kTariff[] = {0.26, 0.66, 1.12};
        MarketParams p;
        p.p_real_time = below(4) == 0 ? uniform(0.1, 1.5) : kTariff[below(3)];
        p.p_d_max = 0.0;
        p.p_d_min = -3.0 * p.p_real_time;
        p.delta = 2.0 * p.p_real_time;
        p.e_limit = uniform(0.0, 40.0);
        return p;
    }

private:
    std::mt19937_64 rng_;
};

}  // namespace v2g::testing
