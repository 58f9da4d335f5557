#include "tabs/scenario.hpp"

#include "tabs/oracle.hpp"

#include <algorithm>
#include <charconv>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>

namespace tabs::cli {

using nlohmann::json;

Mode parse_mode(const std::string& name) {
    static const std::map<std::string, Mode> modes{
        {"simulate", Mode::Simulate}, {"ode", Mode::Ode},         {"fixed-point", Mode::FixedPoint},
        {"compare", Mode::Compare},   {"oracle", Mode::Oracle},   {"figure2", Mode::Figure2}};
    const auto it = modes.find(name);
    if (it == modes.end()) throw ConfigError("unknown mode '" + name + "'");
    return it->second;
}

std::string_view to_string(Mode mode) {
    switch (mode) {
    case Mode::Simulate: return "simulate";
    case Mode::Ode: return "ode";
    case Mode::FixedPoint: return "fixed-point";
    case Mode::Compare: return "compare";
    case Mode::Oracle: return "oracle";
    case Mode::Figure2: return "figure2";
    }
    return "?";
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::pair<std::string, std::string> parse_assignment(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + text + "'");
    std::string key = trim(std::string_view(text).substr(0, eq));
    std::string value = trim(std::string_view(text).substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key in '" + text + "'");
    return {std::move(key), std::move(value)};
}

KeyValues parse_key_values(std::istream& in) {
    KeyValues kv;
    std::string line;
    for (int lineno = 1; std::getline(in, line); ++lineno) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        try {
            auto [k, v] = parse_assignment(line);
            kv[k] = v;
        } catch (const ConfigError& e) {
            throw ConfigError(fmt::format("line {}: {}", lineno, e.what()));
        }
    }
    return kv;
}

namespace {

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError(fmt::format("{}: '{}' is not a number", key, v));
    }
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError(fmt::format("{}: '{}' is not a nonnegative integer", key, v));
    }
    return out;
}

template <class T>
std::vector<T> to_list(const std::string& key, const std::string& v, T (*conv)(const std::string&, const std::string&)) {
    std::vector<T> out;
    std::size_t start = 0;
    while (start <= v.size()) {
        const auto comma = v.find(',', start);
        const std::string item = trim(std::string_view(v).substr(start, comma - start));
        if (!item.empty()) out.push_back(conv(key, item));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
    return static_cast<std::size_t>(to_u64(key, v));
}

std::string num(double x) { return fmt::format("{}", x); }

template <class T>
std::string join(const std::vector<T>& xs) {
    return fmt::format("{}", fmt::join(xs, ","));
}

struct KeyDef {
    const char* name;
    std::function<void(ScenarioConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ScenarioConfig&)> get;
};

const std::vector<KeyDef>& key_table() {
    using C = ScenarioConfig;
    using S = const std::string&;
    static const std::vector<KeyDef> table{
        {"servers", [](C& c, S k, S v) { c.sim.servers = to_size(k, v); },
         [](const C& c) { return fmt::format("{}", c.sim.servers); }},
        {"lambda", [](C& c, S k, S v) { c.sim.lambda = c.fluid.lambda = to_double(k, v); },
         [](const C& c) { return num(c.sim.lambda); }},
        {"mu", [](C& c, S k, S v) { c.sim.mu = c.fluid.mu = to_double(k, v); },
         [](const C& c) { return num(c.sim.mu); }},
        {"nu", [](C& c, S k, S v) { c.sim.nu = c.fluid.nu = to_double(k, v); },
         [](const C& c) { return num(c.sim.nu); }},
        {"horizon", [](C& c, S k, S v) { c.sim.horizon = c.fluid.horizon = to_double(k, v); },
         [](const C& c) { return num(c.sim.horizon); }},
        {"seed", [](C& c, S k, S v) { c.sim.seed = to_u64(k, v); },
         [](const C& c) { return fmt::format("{}", c.sim.seed); }},
        {"k_infinite", [](C& c, S k, S v) { c.sim.k_infinite = to_size(k, v); },
         [](const C& c) { return fmt::format("{}", c.sim.k_infinite); }},
        {"sample_interval",
         [](C& c, S k, S v) {
             if (v == "auto") c.sim.sample_interval.reset();
             else c.sim.sample_interval = to_double(k, v);
         },
         [](const C& c) { return c.sim.sample_interval ? num(*c.sim.sample_interval) : std::string("auto"); }},
        {"buffer_cap",
         [](C& c, S k, S v) {
             if (v == "none") c.sim.buffer_cap.reset();
             else c.sim.buffer_cap = to_u64(k, v);
         },
         [](const C& c) { return c.sim.buffer_cap ? fmt::format("{}", *c.sim.buffer_cap) : std::string("none"); }},
        {"depth", [](C& c, S k, S v) { c.sim.depth = c.fluid.depth = to_size(k, v); },
         [](const C& c) { return fmt::format("{}", c.sim.depth); }},
        {"init.busy", [](C& c, S k, S v) { c.sim.initial.busy_fraction = to_double(k, v); },
         [](const C& c) { return num(c.sim.initial.busy_fraction); }},
        {"init.busy_len", [](C& c, S k, S v) { c.sim.initial.busy_queue_len = to_u64(k, v); },
         [](const C& c) { return fmt::format("{}", c.sim.initial.busy_queue_len); }},
        {"init.setup", [](C& c, S k, S v) { c.sim.initial.setup_fraction = to_double(k, v); },
         [](const C& c) { return num(c.sim.initial.setup_fraction); }},
        {"init.idle_off", [](C& c, S k, S v) { c.sim.initial.idle_off_fraction = to_double(k, v); },
         [](const C& c) { return num(c.sim.initial.idle_off_fraction); }},
        {"init.lead_queue", [](C& c, S k, S v) { c.sim.initial.lead_queue = to_u64(k, v); },
         [](const C& c) { return fmt::format("{}", c.sim.initial.lead_queue); }},
        {"kappa", [](C& c, S k, S v) { c.fluid.kappa = to_double(k, v); },
         [](const C& c) { return num(c.fluid.kappa); }},
        {"dt", [](C& c, S k, S v) { c.fluid.dt = to_double(k, v); },
         [](const C& c) { return num(c.fluid.dt); }},
        {"record_every", [](C& c, S k, S v) { c.fluid.record_every = to_size(k, v); },
         [](const C& c) { return fmt::format("{}", c.fluid.record_every); }},
        {"ode.q", [](C& c, S k, S v) { c.ode_q = to_list<double>(k, v, &to_double); },
         [](const C& c) { return join(c.ode_q); }},
        {"ode.delta0",
         [](C& c, S k, S v) {
             if (v == "auto") c.ode_delta0.reset();
             else c.ode_delta0 = to_double(k, v);
         },
         [](const C& c) { return c.ode_delta0 ? num(*c.ode_delta0) : std::string("auto"); }},
        {"ode.delta1",
         [](C& c, S k, S v) {
             if (v == "auto") c.ode_delta1.reset();
             else c.ode_delta1 = to_double(k, v);
         },
         [](const C& c) { return c.ode_delta1 ? num(*c.ode_delta1) : std::string("auto"); }},
        {"replicas", [](C& c, S k, S v) { c.replicas = to_size(k, v); },
         [](const C& c) { return fmt::format("{}", c.replicas); }},
        {"threads", [](C& c, S k, S v) { c.threads = to_size(k, v); },
         [](const C& c) { return fmt::format("{}", c.threads); }},
        {"csv_depth", [](C& c, S k, S v) { c.csv_depth = to_size(k, v); },
         [](const C& c) { return fmt::format("{}", c.csv_depth); }},
        {"burn_in", [](C& c, S k, S v) { c.burn_in = to_double(k, v); },
         [](const C& c) { return num(c.burn_in); }},
        {"q1_threshold", [](C& c, S k, S v) { c.q1_threshold = to_double(k, v); },
         [](const C& c) { return num(c.q1_threshold); }},
        {"oracle.events", [](C& c, S k, S v) { c.oracle_events = to_u64(k, v); },
         [](const C& c) { return fmt::format("{}", c.oracle_events); }},
        {"figure2.sizes", [](C& c, S k, S v) { c.figure2_sizes = to_list<std::size_t>(k, v, &to_size); },
         [](const C& c) { return join(c.figure2_sizes); }},
        {"output_dir", [](C& c, S, S v) { c.output_dir = v; },
         [](const C& c) { return c.output_dir.string(); }},
    };
    return table;
}

void apply(ScenarioConfig& c, const KeyValues& kv) {
    const auto& table = key_table();
    for (const auto& [key, value] : kv) {
        const auto it = std::find_if(table.begin(), table.end(),
                                     [&](const KeyDef& d) { return key == d.name; });
        if (it == table.end()) throw ConfigError("unknown key '" + key + "'");
        it->set(c, key, value);
    }
}

ScenarioConfig mode_defaults(Mode mode) {
    ScenarioConfig c;
    c.mode = mode;
    c.sim.servers = 100;
    c.sim.lambda = c.fluid.lambda = 0.5;
    c.sim.mu = c.fluid.mu = 1.0;
    c.sim.nu = c.fluid.nu = 0.1;
    c.sim.horizon = c.fluid.horizon = 100.0;
    switch (mode) {
    case Mode::Simulate:
    case Mode::FixedPoint: break;
    case Mode::Ode:
        c.sim.horizon = c.fluid.horizon = 200.0;
        c.sim.initial = {0.9, 1, 0.0, 0.0, 0};
        break;
    case Mode::Compare:
        c.sim.servers = 10'000;
        c.sim.horizon = c.fluid.horizon = 50.0;
        c.sim.sample_interval = 0.1;
        c.sim.initial = {0.9, 1, 0.0, 0.0, 0};
        break;
    case Mode::Oracle:
        c.sim.servers = 2;
        c.sim.buffer_cap = 20;
        c.sim.lambda = c.fluid.lambda = 0.7;
        c.sim.nu = c.fluid.nu = 0.01;
        break;
    case Mode::Figure2:
        // Instability demo: one long queue on top of the equilibrium mix
        // (fraction lambda busy, the rest off), slow setups.
        c.sim.lambda = c.fluid.lambda = 0.7;
        c.sim.nu = c.fluid.nu = 0.01;
        c.sim.horizon = c.fluid.horizon = 500.0;
        c.sim.initial = {0.7, 1, 0.0, 0.3, 50};
        break;
    }
    return c;
}

void check(const ScenarioConfig& c) {
    try {
        c.sim.validate();
        c.fluid.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (c.replicas < 1) throw ConfigError("replicas must be >= 1");
    if (c.csv_depth < 1) throw ConfigError("csv_depth must be >= 1");
    if (!(c.burn_in >= 0.0 && c.burn_in < 1.0)) throw ConfigError("burn_in must lie in [0,1)");
    if (c.mode == Mode::Figure2 && c.figure2_sizes.empty()) throw ConfigError("figure2.sizes is empty");
    if (c.mode == Mode::Oracle && !c.sim.buffer_cap) throw ConfigError("oracle mode needs buffer_cap");
}

}  // namespace

ScenarioConfig resolve(Mode mode, const KeyValues& file, const std::optional<std::string>& env_seed,
                       const KeyValues& overrides) {
    ScenarioConfig c = mode_defaults(mode);
    apply(c, file);
    if (env_seed) apply(c, {{"seed", *env_seed}});
    apply(c, overrides);
    check(c);
    return c;
}

KeyValues to_key_values(const ScenarioConfig& config) {
    KeyValues kv;
    for (const KeyDef& d : key_table()) kv[d.name] = d.get(config);
    return kv;
}

void write_trace_csv(std::ostream& out, const SimTrace& trace, std::size_t depth) {
    out << 't';
    for (std::size_t i = 1; i <= depth; ++i) out << ",q" << i;
    out << ",delta0,delta1,u,losses,setups,max_queue\n";
    for (const SimSample& s : trace.samples) {
        const OccupancyState& o = s.occupancy;
        out << num(s.t);
        for (std::size_t i = 1; i <= depth; ++i) out << ',' << num(o.q_at(i));
        out << ',' << num(o.delta0) << ',' << num(o.delta1) << ',' << num(o.u()) << ','
            << s.losses << ',' << s.setups << ',' << s.max_queue << '\n';
    }
}

void write_fluid_csv(std::ostream& out, const FluidTrajectory& traj, std::size_t depth) {
    out << 't';
    for (std::size_t i = 1; i <= depth; ++i) out << ",q" << i;
    out << ",delta0,delta1,u,xi\n";
    for (const FluidSample& s : traj.samples) {
        out << num(s.t);
        for (std::size_t i = 1; i <= depth; ++i) out << ',' << num(s.state.q_at(i));
        out << ',' << num(s.state.delta0) << ',' << num(s.state.delta1) << ',' << num(s.state.u())
            << ',' << num(s.xi) << '\n';
    }
}

OccupancyState fluid_initial(const ScenarioConfig& c) {
    const double kappa = c.fluid.kappa;
    OccupancyState s;
    s.kappa = kappa;
    s.q.assign(c.fluid.depth, kappa);
    if (!c.ode_q.empty()) {
        if (c.ode_q.size() > c.fluid.depth) throw ConfigError("ode.q longer than depth");
        std::copy(c.ode_q.begin(), c.ode_q.end(), s.q.begin());
    } else {
        const auto len = std::min<std::uint64_t>(c.sim.initial.busy_queue_len, c.fluid.depth);
        for (std::uint64_t i = 0; i < len; ++i) s.q[i] = kappa + c.sim.initial.busy_fraction;
    }
    s.delta0 = c.ode_delta0.value_or(c.sim.initial.idle_off_fraction);
    s.delta1 = c.ode_delta1.value_or(c.sim.initial.setup_fraction);
    if (auto broken = check_space(s, 1e-9)) throw ConfigError("fluid initial state: " + *broken);
    return s;
}

EmpiricalLaws empirical_laws(const SimParams& params, std::uint64_t events, std::uint64_t replica) {
    SystemState s = make_initial_state(params);
    Rng rng(params.seed, replica);
    const std::size_t n = s.size();
    EmpiricalLaws laws;
    laws.modes.assign((n + 1) * (n + 1) * (n + 1), 0.0);
    laws.max_queue.assign(params.buffer_cap ? *params.buffer_cap + 1 : 1, 0.0);
    for (std::uint64_t e = 0; e < events; ++e) {
        const std::size_t key = oracle::mode_key(s.busy.size(), s.tokens.red.size(),
                                                 s.tokens.orange.size(), n);
        std::uint64_t mx = 0;
        for (const ServerState& srv : s.servers) {
            if (!srv.infinite) mx = std::max(mx, srv.queue_len);
        }
        const double before = s.t;
        step(s, params, rng);
        const double dwell = s.t - before;
        laws.modes[key] += dwell;
        if (mx >= laws.max_queue.size()) laws.max_queue.resize(mx + 1, 0.0);
        laws.max_queue[mx] += dwell;
    }
    laws.elapsed = s.t;
    if (s.t > 0.0) {
        for (double& x : laws.modes) x /= s.t;
        for (double& x : laws.max_queue) x /= s.t;
    }
    return laws;
}

json stats_json(const SteadyStats& st) {
    json j{{"mean_q1", st.mean_q1},
           {"mean_delta0", st.mean_delta0},
           {"mean_delta1", st.mean_delta1},
           {"mean_u", st.mean_u},
           {"p_all_occupied", st.p_all_occupied},
           {"q1_threshold", st.q1_threshold},
           {"p_q1_below", st.p_q1_below},
           {"loss_rate", st.loss_rate},
           {"window_start", st.window_start},
           {"window_length", st.window_length}};
    if (st.infinite_drift) j["infinite_drift"] = *st.infinite_drift;
    return j;
}

namespace {

namespace fs = std::filesystem;

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw fs::filesystem_error("cannot open for writing", path, std::make_error_code(std::errc::io_error));
    body(out);
    out.flush();
    if (!out) throw fs::filesystem_error("write failed", path, std::make_error_code(std::errc::io_error));
}

void write_json(const fs::path& path, const json& j) {
    write_file(path, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
}

json config_json(const ScenarioConfig& c) {
    json j = json::object();
    for (const auto& [k, v] : to_key_values(c)) j[k] = v;
    j["mode"] = std::string(to_string(c.mode));
    return j;
}

json null_stats() {
    return json{{"mean_q1", nullptr},        {"mean_delta0", nullptr}, {"mean_delta1", nullptr},
                {"mean_u", nullptr},         {"p_all_occupied", nullptr},
                {"p_q1_below", nullptr},     {"loss_rate", nullptr}};
}

std::optional<SteadyStats> try_stats(const SimTrace& t, const ScenarioConfig& c) {
    if (t.samples.size() < 2) return std::nullopt;
    try {
        return steady_stats(t, c.burn_in, c.q1_threshold);
    } catch (const std::runtime_error&) {
        return std::nullopt;  // empty post-burn-in window
    }
}

json run_simulate(const ScenarioConfig& c) {
    const auto traces = run_replicas(c.sim, c.replicas, c.threads);
    StatsAccumulator acc;
    std::uint64_t events = 0;
    json per = json::array();
    for (std::size_t r = 0; r < traces.size(); ++r) {
        const SimTrace& t = traces[r];
        const fs::path dir = c.output_dir / fmt::format("replica_{:03}", r);
        write_file(dir / "trace.csv", [&](std::ostream& o) { write_trace_csv(o, t, c.csv_depth); });
        json s{{"config", config_json(c)}, {"seed", c.sim.seed}, {"replica", r}, {"events", t.events_processed}};
        const auto st = try_stats(t, c);
        s.update(st ? stats_json(*st) : null_stats());
        if (st) acc.add(*st);
        write_json(dir / "summary.json", s);
        events += t.events_processed;
        per.push_back(s);
    }
    json merged{{"config", config_json(c)}, {"seed", c.sim.seed}, {"replicas", c.replicas}, {"events", events}};
    merged.update(acc.count() > 0 ? stats_json(acc.mean()) : null_stats());
    write_json(c.output_dir / "summary.json", merged);
    return merged;
}

json state_json(const OccupancyState& s, std::size_t depth) {
    json j{{"delta0", s.delta0}, {"delta1", s.delta1}, {"u", s.u()}, {"kappa", s.kappa}};
    for (std::size_t i = 1; i <= depth; ++i) j[fmt::format("q{}", i)] = s.q_at(i);
    return j;
}

json run_ode(const ScenarioConfig& c) {
    const FluidTrajectory traj = integrate(fluid_initial(c), c.fluid);
    write_file(c.output_dir / "fluid.csv", [&](std::ostream& o) { write_fluid_csv(o, traj, c.csv_depth); });

    const OccupancyState& end = traj.samples.back().state;
    const FluidDerivative d = rhs(end, c.fluid);
    double norm = std::max(std::abs(d.ddelta0), std::abs(d.ddelta1));
    for (double x : d.dq) norm = std::max(norm, std::abs(x));
    json rep{{"config", config_json(c)},
             {"final", state_json(end, c.csv_depth)},
             {"xi", traj.samples.back().xi},
             {"rhs_sup_norm", norm},
             {"truncation_warning", traj.truncation_warning},
             {"max_projection", traj.max_clip}};
    try {
        const OccupancyState fp = fixed_point(c.fluid.lambda, c.fluid.kappa, c.fluid.depth);
        double dist = std::max(std::abs(end.delta0 - fp.delta0), std::abs(end.delta1 - fp.delta1));
        for (std::size_t i = 1; i <= fp.depth(); ++i) dist = std::max(dist, std::abs(end.q_at(i) - fp.q_at(i)));
        rep["fixed_point_distance"] = dist;
    } catch (const std::domain_error&) {
        rep["saturated"] = true;
    } catch (const std::invalid_argument&) {
        rep["fixed_point_distance"] = nullptr;  // lambda >= 1: no equilibrium
    }
    write_json(c.output_dir / "residual.json", rep);
    return rep;
}

json run_fixed_point(const ScenarioConfig& c) {
    json j;
    try {
        const OccupancyState fp = fixed_point(c.fluid.lambda, c.fluid.kappa, c.fluid.depth);
        j = json{{"q1", fp.q_at(1)}, {"q2", fp.q_at(2)}, {"delta0", fp.delta0}, {"delta1", fp.delta1}};
    } catch (const SaturatedRegime& e) {
        j = json{{"saturated", true},
                 {"lambda", c.fluid.lambda},
                 {"kappa", c.fluid.kappa},
                 {"q1_limit", 1.0},
                 {"message", e.what()}};
    }
    write_json(c.output_dir / "fixed_point.json", j);
    return j;
}

json run_compare(const ScenarioConfig& c) {
    const auto traces = run_replicas(c.sim, c.replicas, c.threads);
    FluidParams fp = c.fluid;
    fp.kappa = static_cast<double>(c.sim.k_infinite) / static_cast<double>(c.sim.servers);
    fp.horizon = c.sim.horizon;
    OccupancyState start = occupancy_of(make_initial_state(c.sim), fp.depth).occupancy;
    const FluidTrajectory traj = integrate(start, fp);
    write_file(c.output_dir / "fluid.csv", [&](std::ostream& o) { write_fluid_csv(o, traj, c.csv_depth); });

    json reps = json::array();
    double mean_q1 = 0.0;
    for (std::size_t r = 0; r < traces.size(); ++r) {
        const SupNormReport rep = compare(traces[r], traj);
        write_file(c.output_dir / fmt::format("replica_{:03}", r) / "trace.csv",
                   [&](std::ostream& o) { write_trace_csv(o, traces[r], c.csv_depth); });
        reps.push_back({{"replica", r},          {"sup_q1", rep.sup_q1},         {"t_q1", rep.t_q1},
                        {"sup_delta0", rep.sup_delta0}, {"t_delta0", rep.t_delta0},
                        {"sup_delta1", rep.sup_delta1}, {"t_delta1", rep.t_delta1},
                        {"points", rep.points}});
        mean_q1 += rep.sup_q1;
    }
    json out{{"config", config_json(c)},
             {"servers", c.sim.servers},
             {"mean_sup_q1", mean_q1 / static_cast<double>(traces.size())},
             {"replicas", reps}};
    write_json(c.output_dir / "supnorm.json", out);
    return out;
}

std::string describe(const std::vector<ServerState>& servers) {
    std::string s;
    for (std::size_t j = 0; j < servers.size(); ++j) {
        if (j) s += ';';
        s += to_string(servers[j].mode);
        if (servers[j].mode == ServerMode::Busy) s += fmt::format(":{}", servers[j].queue_len);
    }
    return s;
}

json run_oracle(const ScenarioConfig& c) {
    const oracle::TruncatedStateSpace space(c.sim.servers, *c.sim.buffer_cap);
    const auto gen = oracle::build_generator(space, c.sim.lambda, c.sim.mu, c.sim.nu);
    const Eigen::VectorXd pi = oracle::stationary(gen);
    write_file(c.output_dir / "pi.csv", [&](std::ostream& o) {
        o << "index,state,probability\n";
        for (std::size_t i = 0; i < space.size(); ++i) {
            o << i << ',' << describe(space.decode(i)) << ',' << num(pi(static_cast<Eigen::Index>(i))) << '\n';
        }
    });

    const auto exact_modes = oracle::mode_marginal(space, pi);
    const auto exact_max = oracle::max_queue_marginal(space, pi);
    const EmpiricalLaws emp = empirical_laws(c.sim, c.oracle_events);
    auto emp_max = emp.max_queue;
    emp_max.resize(exact_max.size(), 0.0);
    json rep{{"config", config_json(c)},
             {"states", space.size()},
             {"residual", oracle::residual(gen, pi)},
             {"events", c.oracle_events},
             {"simulated_time", emp.elapsed},
             {"tv_modes", oracle::total_variation(exact_modes, emp.modes)},
             {"tv_max_queue", oracle::total_variation(exact_max, emp_max)},
             {"oracle_max_queue", exact_max},
             {"empirical_max_queue", emp_max}};
    write_json(c.output_dir / "tv-report.json", rep);
    return rep;
}

json run_figure2(const ScenarioConfig& c) {
    json panels = json::array();
    for (std::size_t n : c.figure2_sizes) {
        ScenarioConfig cn = c;
        cn.sim.servers = n;
        cn.sim.validate();
        const auto traces = run_replicas(cn.sim, c.replicas, c.threads);
        for (std::size_t r = 0; r < traces.size(); ++r) {
            const SimTrace& t = traces[r];
            const std::string name = c.replicas == 1 ? fmt::format("figure2_N{}.csv", n)
                                                     : fmt::format("figure2_N{}_r{:03}.csv", n, r);
            write_file(c.output_dir / name, [&](std::ostream& o) { write_trace_csv(o, t, c.csv_depth); });
            std::uint64_t after = 0;
            for (const SimSample& s : t.samples) {
                if (s.t >= c.burn_in * c.sim.horizon) after = std::max(after, s.max_queue);
            }
            panels.push_back({{"servers", n},
                              {"replica", r},
                              {"file", name},
                              {"initial_max_queue", t.samples.empty() ? 0 : t.samples.front().max_queue},
                              {"final_max_queue", t.samples.empty() ? 0 : t.samples.back().max_queue},
                              {"max_queue_after_burn_in", after},
                              {"events", t.events_processed}});
        }
    }
    json out{{"config", config_json(c)}, {"panels", panels}};
    write_json(c.output_dir / "figure2.json", out);
    return out;
}

}  // namespace

json run_scenario(const ScenarioConfig& config) {
    fs::create_directories(config.output_dir);
    switch (config.mode) {
    case Mode::Simulate: return run_simulate(config);
    case Mode::Ode: return run_ode(config);
    case Mode::FixedPoint: return run_fixed_point(config);
    case Mode::Compare: return run_compare(config);
    case Mode::Oracle: return run_oracle(config);
    case Mode::Figure2: return run_figure2(config);
    }
    throw ConfigError("unhandled mode");
}

}  // namespace tabs::cli
