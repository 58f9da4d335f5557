// tabs: simulator, mean-field ODE and oracle front end.
//
//   tabs <mode> [--config <file>] [--set key=value ...] --out <dir>
//
// Modes: simulate, ode, fixed-point, compare, oracle, figure2.
// Precedence of settings: --set > TABS_SEED (seed only) > config file > mode defaults.

#include "tabs/scenario.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kIo = 3, kOperation = 4, kInternal = 5 };

int fail(ExitCode code, std::string_view kind, const std::string& message) {
    std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TABS load-balancing and auto-scaling simulator"};
    std::string mode_name;
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    app.add_option("mode", mode_name, "simulate | ode | fixed-point | compare | oracle | figure2")->required();
    app.add_option("--config", config_path, "flat key=value config file");
    app.add_option("--set", sets, "override key=value (repeatable)");
    app.add_option("--out", out_dir, "output directory")->required();
    CLI11_PARSE(app, argc, argv);

    using namespace tabs::cli;
    ScenarioConfig config;
    try {
        const Mode mode = parse_mode(mode_name);
        KeyValues file;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) return fail(kIo, "io", "cannot read config file " + config_path);
            file = parse_key_values(in);
        }
        KeyValues overrides;
        for (const auto& s : sets) {
            auto [k, v] = parse_assignment(s);
            overrides[k] = v;
        }
        overrides["output_dir"] = out_dir;
        std::optional<std::string> env_seed;
        if (const char* e = std::getenv("TABS_SEED")) env_seed = e;
        config = resolve(mode, file, env_seed, overrides);
    } catch (const ConfigError& e) {
        return fail(kConfig, "config", e.what());
    }

    try {
        std::cout << run_scenario(config).dump(2) << '\n';
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(kIo, "io", e.what());
    } catch (const ConfigError& e) {
        return fail(kConfig, "config", e.what());
    } catch (const std::logic_error& e) {
        return fail(kOperation, "operation", e.what());
    } catch (const std::runtime_error& e) {
        return fail(kOperation, "operation", e.what());
    } catch (const std::exception& e) {
        return fail(kInternal, "internal", e.what());
    }
    return kOk;
}
