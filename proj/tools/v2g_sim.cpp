// v2g-sim: scenario runs, fleet generation, and ledger validation.
//
// Exit codes: 0 success, 1 bad arguments / config / unreadable input,
// 2 runtime failure during a run, 3 ledger fails verification.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "v2g/codec.hpp"
#include "v2g/simulator.hpp"

namespace fs = std::filesystem;
using namespace v2g;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitInvalidLedger = 3;

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    out.close();
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

template <typename Fn>
std::string render(Fn&& fn) {
    std::ostringstream ss;
    fn(ss);
    return ss.str();
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, bool with_baseline) {
    ScenarioConfig config;
    try {
        config = load_config(config_path);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << config_path << ": " << e.what() << '\n';
        return kExitConfig;
    }
    try {
        fs::create_directories(out_dir);
        const fs::path out(out_dir);
        const auto report = run_horizon(config);
        write_file(out / "report.csv", render([&](std::ostream& s) { write_report_csv(s, report); }));
        write_file(out / "ev_totals.csv", render([&](std::ostream& s) { write_ev_totals_csv(s, report); }));
        write_file(out / "summary.json", summary_json(report));
        write_file(out / "ledger.hex", render([&](std::ostream& s) { write_ledger(s, *report.ledger); }));
        if (with_baseline) {
            const auto baseline = baseline_uncoordinated(config);
            write_file(out / "baseline.csv", render([&](std::ostream& s) { write_report_csv(s, baseline); }));
            write_file(out / "baseline_summary.json", summary_json(baseline));
            write_file(out / "comparison.json", comparison_json(compare_reports(report, baseline)));
        }
        std::cout << "wrote " << report.slots.size() << " slots, " << report.ledger->length() << " blocks to "
                  << out.string() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "simulation failed: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}

int cmd_gen_fleet(std::size_t n, std::uint64_t seed, const std::string& out, bool no_jitter) {
    if (n == 0) {
        std::cerr << "--n must be at least 1\n";
        return kExitConfig;
    }
    FleetSynthConfig cfg;
    if (no_jitter) cfg.jitter = 0.0;
    try {
        const auto csv = serialize_fleet_csv(generate_fleet(n, seed, cfg));
        if (out == "-") {
            std::cout << csv;
        } else {
            write_file(out, csv);
        }
    } catch (const std::exception& e) {
        std::cerr << "gen-fleet failed: " << e.what() << '\n';
        return kExitConfig;
    }
    return 0;
}

int cmd_validate_ledger(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::cerr << "cannot read " << path << '\n';
        return kExitConfig;
    }
    std::vector<Block> blocks;
    try {
        blocks = read_ledger(in);
    } catch (const std::exception& e) {
        std::cerr << "malformed ledger " << path << ": " << e.what() << '\n';
        return kExitConfig;
    }
    if (blocks.empty()) {
        std::cerr << "malformed ledger " << path << ": no blocks\n";
        return kExitConfig;
    }
    const auto r = verify_blocks(blocks);
    if (!r) {
        std::cout << "INVALID at height " << r.height << ": " << to_string(r.error);
        if (!r.detail.empty()) std::cout << " (" << r.detail << ')';
        std::cout << '\n';
        return kExitInvalidLedger;
    }
    std::cout << "OK " << blocks.size() << " blocks, tip " << codec::to_hex(blocks.back().header.digest()) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Blockchain-coordinated V2G pricing simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    bool with_baseline = false;
    auto* simulate = app.add_subcommand("simulate", "Run a scenario and export the report and ledger");
    simulate->add_option("--config", config_path, "JSON scenario file")->required();
    simulate->add_option("--out", out_dir, "Output directory")->required();
    simulate->add_flag("--baseline", with_baseline, "Also run the plug-and-charge baseline and compare");

    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string fleet_out;
    bool no_jitter = false;
    auto* gen = app.add_subcommand("gen-fleet", "Write a synthetic fleet CSV");
    gen->add_option("--n", n, "Number of EVs")->required();
    gen->add_option("--seed", seed, "RNG seed");
    gen->add_option("--out", fleet_out, "Output CSV path, '-' for stdout")->required();
    gen->add_flag("--no-jitter", no_jitter, "Reproduce the template rows exactly");

    std::string ledger_path;
    auto* validate_cmd = app.add_subcommand("validate-ledger", "Verify an exported ledger");
    validate_cmd->add_option("--ledger", ledger_path, "ledger.hex path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    if (simulate->parsed()) return cmd_simulate(config_path, out_dir, with_baseline);
    if (gen->parsed()) return cmd_gen_fleet(n, seed, fleet_out, no_jitter);
    return cmd_validate_ledger(ledger_path);
}
