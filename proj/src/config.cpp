#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"
#include "v2g/simulator.hpp"

namespace v2g {

namespace {

using nlohmann::json;

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (const char* a : allowed) known = known || key == a;
        if (!known) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

double number(const json& obj, const char* key, const std::string& where, double fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
    return v.get<double>();
}

std::uint64_t count(const json& obj, const char* key, const std::string& where, std::uint64_t fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number_unsigned()) throw ConfigError(where + "." + key + " must be a non-negative integer");
    return v.get<std::uint64_t>();
}

std::string string(const json& obj, const char* key, const std::string& where, const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_string()) throw ConfigError(where + "." + key + " must be a string");
    return v.get<std::string>();
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path resolve(const std::string& base_dir, const std::string& file) {
    std::filesystem::path p(file);
    return p.is_absolute() || base_dir.empty() ? p : std::filesystem::path(base_dir) / p;
}

// Exactly one of "file" or "synthetic".
const json* pick_source(const json& obj, const std::string& where) {
    only_keys(obj, where, {"file", "synthetic"});
    if (obj.contains("file") == obj.contains("synthetic"))
        throw ConfigError(where + " needs exactly one of 'file' or 'synthetic'");
    return obj.contains("file") ? nullptr : &obj.at("synthetic");
}

template <typename Parse>
auto parse_file(const std::filesystem::path& path, Parse&& parse) {
    const auto text = read_file(path);
    try {
        return parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace

ScenarioConfig parse_config(std::string_view json_text, const std::string& base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON: ") + e.what());
    }
    only_keys(doc, "config",
              {"start_time", "horizon_slots", "seed", "signature_scheme", "threads", "min_departure_soc", "fleet", "tariff",
               "aux_demand", "market", "scp"});

    ScenarioConfig cfg;
    const auto horizon = count(doc, "horizon_slots", "config", kSlotsPerDay);
    if (horizon == 0 || horizon > 100 * kSlotsPerDay) throw ConfigError("config.horizon_slots out of range");
    cfg.horizon = static_cast<std::uint32_t>(horizon);
    if (doc.contains("start_time")) {
        try {
            cfg.start_slot = parse_slot_time(string(doc, "start_time", "config", ""));
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config.start_time: ") + e.what());
        }
        if (cfg.start_slot >= kSlotsPerDay) throw ConfigError("config.start_time must fall on the first day");
    }
    cfg.seed = count(doc, "seed", "config", 0);
    cfg.scheme = string(doc, "signature_scheme", "config", cfg.scheme);
    if (cfg.scheme != "hmac-sha256" && cfg.scheme != "ed25519")
        throw ConfigError("config.signature_scheme must be 'hmac-sha256' or 'ed25519'");
    cfg.threads = static_cast<unsigned>(count(doc, "threads", "config", 0));
    if (doc.contains("min_departure_soc") && !doc.at("min_departure_soc").is_null()) {
        const double v = number(doc, "min_departure_soc", "config", 0.0);
        if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("config.min_departure_soc must lie in [0,1]");
        cfg.min_departure_soc = v;
    }

    if (doc.contains("market")) {
        const auto& m = doc.at("market");
        only_keys(m, "market",
                  {"w_grid", "w_service", "p_d_max", "p_d_min_factor", "delta_factor", "e0_kwh", "p_delay",
                   "epsilon", "beta", "a", "u_idle"});
        auto& c = cfg.constants;
        c.w_grid = number(m, "w_grid", "market", c.w_grid);
        c.w_service = number(m, "w_service", "market", c.w_service);
        c.p_d_max = number(m, "p_d_max", "market", c.p_d_max);
        c.p_d_min_factor = number(m, "p_d_min_factor", "market", c.p_d_min_factor);
        c.delta_factor = number(m, "delta_factor", "market", c.delta_factor);
        c.e0 = number(m, "e0_kwh", "market", c.e0);
        c.p_delay = number(m, "p_delay", "market", c.p_delay);
        c.epsilon = number(m, "epsilon", "market", c.epsilon);
        c.beta = number(m, "beta", "market", c.beta);
        c.a = number(m, "a", "market", c.a);
        c.u_idle = number(m, "u_idle", "market", c.u_idle);
        if (!(c.e0 > 0.0)) throw ConfigError("market.e0_kwh must be positive");
        if (!(c.epsilon > 0.0)) throw ConfigError("market.epsilon must be positive");
        if (!(c.beta > 0.0)) throw ConfigError("market.beta must be positive");
    }

    if (doc.contains("fleet")) {
        if (const auto* synth = pick_source(doc.at("fleet"), "fleet")) {
            only_keys(*synth, "fleet.synthetic", {"n", "seed", "jitter"});
            const auto n = count(*synth, "n", "fleet.synthetic", 0);
            if (n == 0) throw ConfigError("fleet.synthetic.n must be at least 1");
            FleetSynthConfig fc;
            fc.jitter = number(*synth, "jitter", "fleet.synthetic", fc.jitter);
            if (!(fc.jitter >= 0.0)) throw ConfigError("fleet.synthetic.jitter must be non-negative");
            cfg.fleet = generate_fleet(n, count(*synth, "seed", "fleet.synthetic", cfg.seed), fc);
        } else {
            const auto path = resolve(base_dir, string(doc.at("fleet"), "file", "fleet", ""));
            cfg.fleet = parse_file(path, [](const std::string& t) { return parse_fleet_csv(t); });
        }
    } else {
        cfg.fleet = sample_fleet();
    }

    if (doc.contains("tariff")) {
        const auto& t = doc.at("tariff");
        only_keys(t, "tariff", {"file"});
        if (!t.contains("file")) throw ConfigError("tariff needs 'file'");
        const auto path = resolve(base_dir, string(t, "file", "tariff", ""));
        cfg.tariff = parse_file(path, [](const std::string& s) { return parse_tariff_csv(s); });
    }

    SyntheticAuxConfig aux;
    aux.seed = cfg.seed;
    aux.horizon = cfg.horizon;
    aux.start_slot = cfg.start_slot;
    if (doc.contains("aux_demand")) {
        if (const auto* synth = pick_source(doc.at("aux_demand"), "aux_demand")) {
            only_keys(*synth, "aux_demand.synthetic", {"peak_kwh", "seed"});
            aux.peak_kwh = number(*synth, "peak_kwh", "aux_demand.synthetic", aux.peak_kwh);
            aux.seed = count(*synth, "seed", "aux_demand.synthetic", aux.seed);
            if (!(aux.peak_kwh >= 0.0)) throw ConfigError("aux_demand.synthetic.peak_kwh must be non-negative");
            cfg.aux = synthetic_aux_demand(aux);
        } else {
            const auto path = resolve(base_dir, string(doc.at("aux_demand"), "file", "aux_demand", ""));
            cfg.aux = parse_file(path, [](const std::string& s) { return parse_aux_csv(s); });
        }
    } else {
        cfg.aux = synthetic_aux_demand(aux);
    }

    if (doc.contains("scp")) {
        const auto& s = doc.at("scp");
        only_keys(s, "scp", {"count", "capacities"});
        if (s.contains("count")) cfg.scp_count = count(s, "count", "scp", 1);
        if (s.contains("capacities")) {
            const auto& caps = s.at("capacities");
            if (!caps.is_array()) throw ConfigError("scp.capacities must be an array");
            for (const auto& c : caps) {
                if (!c.is_number()) throw ConfigError("scp.capacities must hold numbers");
                cfg.scp_capacities.push_back(c.get<double>());
            }
        }
    }

    validate(cfg);
    return cfg;
}

ScenarioConfig load_config(const std::string& path) {
    const std::filesystem::path p(path);
    return parse_config(read_file(p), p.parent_path().string());
}

}  // namespace v2g
