#pragma once

#include "tabs/fluid.hpp"
#include "tabs/simulator.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include "json.hpp"
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tabs::cli {

enum class Mode { Simulate, Ode, FixedPoint, Compare, Oracle, Figure2 };

Mode parse_mode(const std::string& name);
std::string_view to_string(Mode mode);

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using KeyValues = std::map<std::string, std::string>;

// Flat `key = value` lines; '#' starts a comment. Throws ConfigError.
KeyValues parse_key_values(std::istream& in);
// "key=value" from the command line.
std::pair<std::string, std::string> parse_assignment(const std::string& text);

struct ScenarioConfig {
    Mode mode = Mode::Simulate;
    SimParams sim;
    FluidParams fluid;
    std::size_t replicas = 1;
    std::size_t threads = 0;
    std::filesystem::path output_dir = ".";
    std::size_t csv_depth = 8;
    double burn_in = default_burn_in;
    double q1_threshold = 0.1;
    // Explicit fluid start (q_1, q_2, ...); otherwise derived from sim.initial.
    std::vector<double> ode_q;
    std::optional<double> ode_delta0, ode_delta1;
    std::uint64_t oracle_events = 10'000'000;
    std::vector<std::size_t> figure2_sizes{2, 50, 500};
};

// Resolution order, lowest to highest: mode defaults, config file, TABS_SEED,
// command-line assignments. Unknown keys and malformed values are errors.
ScenarioConfig resolve(Mode mode, const KeyValues& file, const std::optional<std::string>& env_seed,
                       const KeyValues& overrides);

// Fully resolved flat configuration; feeding it back through resolve()
// reproduces the run.
KeyValues to_key_values(const ScenarioConfig& config);

// Header: t,q1,...,q{depth},delta0,delta1,u,losses,setups,max_queue
void write_trace_csv(std::ostream& out, const SimTrace& trace, std::size_t depth);
// Header: t,q1,...,q{depth},delta0,delta1,u,xi
void write_fluid_csv(std::ostream& out, const FluidTrajectory& traj, std::size_t depth);

// Fluid start matching `config`: explicit ode.* keys, else the initial
// fractions (busy servers at depth busy_len on top of the kappa floor).
OccupancyState fluid_initial(const ScenarioConfig& config);

// Stationary laws estimated from `events` simulated transitions with exact
// dwell-time weighting: joint (#busy, #idle-off, #setup) law keyed like
// oracle::mode_key, and the law of the largest queue (cap at buffer_cap).
struct EmpiricalLaws {
    std::vector<double> modes;
    std::vector<double> max_queue;
    double elapsed = 0.0;
};
EmpiricalLaws empirical_laws(const SimParams& params, std::uint64_t events,
                             std::uint64_t replica = 0);

nlohmann::json stats_json(const SteadyStats& stats);

// Executes the scenario and writes its artifacts under config.output_dir.
// Returns the headline JSON (also written to disk). Throws on any error.
nlohmann::json run_scenario(const ScenarioConfig& config);

}  // namespace tabs::cli
