#include "doctest.h"
#include "tabs/scenario.hpp"

#include <fstream>
#include <sstream>

using namespace tabs;
using namespace tabs::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("tabs_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json load(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

TEST_CASE("config files are flat key=value with comments") {
    std::istringstream in("# header\nlambda = 0.6\n\nservers=12  # trailing\n");
    const KeyValues kv = parse_key_values(in);
    CHECK(kv.size() == 2);
    CHECK(kv.at("lambda") == "0.6");
    CHECK(kv.at("servers") == "12");

    std::istringstream bad("lambda 0.6\n");
    CHECK_THROWS_AS(parse_key_values(bad), ConfigError);
}

TEST_CASE("precedence is command line over environment over file") {
    const KeyValues file{{"seed", "1"}, {"lambda", "0.3"}};
    CHECK(resolve(Mode::Simulate, file, std::nullopt, {}).sim.seed == 1);
    CHECK(resolve(Mode::Simulate, file, std::string("7"), {}).sim.seed == 7);
    CHECK(resolve(Mode::Simulate, file, std::string("7"), {{"seed", "9"}}).sim.seed == 9);
    CHECK(resolve(Mode::Simulate, file, std::nullopt, {}).fluid.lambda == 0.3);
}

TEST_CASE("bad configuration is rejected") {
    CHECK_THROWS_AS(resolve(Mode::Simulate, {{"bogus", "1"}}, std::nullopt, {}), ConfigError);
    CHECK_THROWS_AS(resolve(Mode::Simulate, {{"lambda", "abc"}}, std::nullopt, {}), ConfigError);
    CHECK_THROWS_AS(resolve(Mode::Simulate, {{"replicas", "0"}}, std::nullopt, {}), ConfigError);
    CHECK_THROWS_AS(resolve(Mode::Simulate, {{"horizon", "-1"}}, std::nullopt, {}), ConfigError);
    CHECK_THROWS_AS(resolve(Mode::Simulate, {{"sample_interval", "0"}}, std::nullopt, {}), ConfigError);
    CHECK_THROWS_AS(parse_mode("plot"), ConfigError);
}

TEST_CASE("resolved key values reproduce the configuration") {
    const ScenarioConfig a = resolve(Mode::Figure2, {{"seed", "5"}, {"figure2.sizes", "2, 8"}}, std::nullopt,
                                     {{"buffer_cap", "7"}, {"ode.q", "0.5,0.25"}});
    const KeyValues kv = to_key_values(a);
    const ScenarioConfig b = resolve(Mode::Figure2, kv, std::nullopt, {});
    CHECK(to_key_values(b) == kv);
    CHECK(b.figure2_sizes == std::vector<std::size_t>{2, 8});
    CHECK(b.sim.buffer_cap == 7u);
    CHECK(b.sim.initial == a.sim.initial);
}

TEST_CASE("trace csv has the fixed schema") {
    SimParams p;
    p.servers = 4;
    p.horizon = 5.0;
    p.sample_interval = 1.0;
    std::ostringstream out;
    write_trace_csv(out, run(p), 3);
    std::istringstream in(out.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "t,q1,q2,q3,delta0,delta1,u,losses,setups,max_queue");
    int rows = 0;
    double last_t = -1.0;
    while (std::getline(in, line)) {
        ++rows;
        std::istringstream cells(line);
        std::string cell;
        int cols = 0;
        while (std::getline(cells, cell, ',')) {
            CHECK_NOTHROW((void)std::stod(cell));
            if (cols == 0) {
                CHECK(std::stod(cell) > last_t);
                last_t = std::stod(cell);
            }
            ++cols;
        }
        CHECK(cols == 10);
    }
    CHECK(rows == 6);
}

TEST_CASE("fixed-point mode writes the equilibrium or a saturation marker") {
    const fs::path dir = scratch("fp");
    auto cfg = resolve(Mode::FixedPoint, {{"lambda", "0.5"}, {"kappa", "0"}}, std::nullopt,
                       {{"output_dir", dir.string()}});
    const auto j = run_scenario(cfg);
    CHECK(j == nlohmann::json{{"q1", 0.5}, {"q2", 0.0}, {"delta0", 0.5}, {"delta1", 0.0}});
    CHECK(load(dir / "fixed_point.json") == j);

    cfg.fluid.kappa = 0.6;
    const auto s = run_scenario(cfg);
    CHECK(s.at("saturated") == true);
}

TEST_CASE("simulate with zero horizon succeeds with zero events") {
    const fs::path dir = scratch("h0");
    const auto cfg = resolve(Mode::Simulate, {{"horizon", "0"}, {"servers", "3"}}, std::nullopt,
                             {{"output_dir", dir.string()}});
    const auto j = run_scenario(cfg);
    CHECK(j.at("events") == 0);
    CHECK(j.at("mean_q1").is_null());
    const auto merged = load(dir / "summary.json");
    CHECK(merged.at("config").at("horizon") == "0");
    CHECK(fs::exists(dir / "replica_000" / "trace.csv"));
    CHECK(fs::exists(dir / "replica_000" / "summary.json"));
}

TEST_CASE("simulate writes per-replica and merged summaries deterministically") {
    const fs::path a = scratch("sim_a"), b = scratch("sim_b");
    const KeyValues file{{"servers", "20"}, {"horizon", "40"}, {"replicas", "2"}, {"k_infinite", "2"}};
    run_scenario(resolve(Mode::Simulate, file, std::nullopt, {{"output_dir", a.string()}}));
    run_scenario(resolve(Mode::Simulate, file, std::nullopt, {{"output_dir", b.string()}}));
    CHECK(slurp(a / "replica_001" / "trace.csv") == slurp(b / "replica_001" / "trace.csv"));
    const auto s = load(a / "summary.json");
    for (const char* key : {"config", "seed", "events", "mean_q1", "mean_delta0", "mean_delta1",
                            "p_all_occupied", "loss_rate", "infinite_drift"}) {
        CHECK_MESSAGE(s.contains(key), key);
    }
    CHECK(s.at("replicas") == 2);
}

TEST_CASE("ode mode reports convergence to the equilibrium") {
    const fs::path dir = scratch("ode");
    const auto cfg = resolve(Mode::Ode, {{"horizon", "200"}, {"depth", "16"}}, std::nullopt,
                             {{"output_dir", dir.string()}});
    const auto j = run_scenario(cfg);
    CHECK(j.at("fixed_point_distance").get<double>() < 1e-3);
    CHECK(j.at("truncation_warning") == false);
    const std::string csv = slurp(dir / "fluid.csv");
    CHECK(csv.rfind("t,q1,q2,q3,q4,q5,q6,q7,q8,delta0,delta1,u,xi\n", 0) == 0);
}

TEST_CASE("compare, oracle and figure2 modes produce their artifacts") {
    const fs::path dir = scratch("modes");
    const auto cmp = run_scenario(resolve(Mode::Compare, {{"servers", "500"}, {"horizon", "10"}, {"depth", "16"}},
                                          std::nullopt, {{"output_dir", (dir / "cmp").string()}}));
    CHECK(cmp.at("mean_sup_q1").get<double>() < 0.2);
    CHECK(fs::exists(dir / "cmp" / "supnorm.json"));

    const auto orc = run_scenario(resolve(Mode::Oracle,
                                          {{"servers", "1"}, {"buffer_cap", "4"}, {"oracle.events", "200000"},
                                           {"nu", "0.5"}},
                                          std::nullopt, {{"output_dir", (dir / "orc").string()}}));
    CHECK(orc.at("tv_modes").get<double>() < 0.02);
    CHECK(orc.at("residual").get<double>() < 1e-10);
    CHECK(slurp(dir / "orc" / "pi.csv").rfind("index,state,probability\n", 0) == 0);

    const auto fig = run_scenario(resolve(Mode::Figure2, {{"figure2.sizes", "2,5"}, {"horizon", "50"}},
                                          std::nullopt, {{"output_dir", (dir / "fig").string()}}));
    CHECK(fig.at("panels").size() == 2);
    CHECK(fs::exists(dir / "fig" / "figure2_N2.csv"));
    CHECK(fs::exists(dir / "fig" / "figure2_N5.csv"));
    CHECK(fig.at("panels")[0].at("initial_max_queue") == 50);
}

TEST_CASE("fluid start follows the initial fractions") {
    auto cfg = resolve(Mode::Ode, {{"init.busy", "0.4"}, {"init.busy_len", "2"}, {"init.idle_off", "0.3"},
                                   {"kappa", "0.1"}, {"depth", "8"}},
                       std::nullopt, {});
    const OccupancyState s = fluid_initial(cfg);
    CHECK(s.q_at(1) == doctest::Approx(0.5));
    CHECK(s.q_at(2) == doctest::Approx(0.5));
    CHECK(s.q_at(3) == doctest::Approx(0.1));
    CHECK(s.delta0 == doctest::Approx(0.3));
    cfg.sim.initial.idle_off_fraction = 0.9;
    CHECK_THROWS_AS(fluid_initial(cfg), ConfigError);
}
