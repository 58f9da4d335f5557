#pragma once

#include "tabs/model.hpp"
#include "tabs/rng.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace tabs {

// Server composition at t = 0. Fractions are of N and are rounded to the
// nearest count; whatever remains is IdleOn. Ids are assigned in the order
// infinite, lead, busy, setup, idle-off, idle-on.
struct InitialCondition {
    double busy_fraction = 0.0;
    std::uint64_t busy_queue_len = 1;
    double setup_fraction = 0.0;
    double idle_off_fraction = 1.0;
    std::uint64_t lead_queue = 0;  // one extra server with this queue when > 0

    friend bool operator==(const InitialCondition&, const InitialCondition&) = default;
};

struct SimParams {
    std::size_t servers = 1;
    double lambda = 0.5;  // arrival rate per server
    double mu = 1.0;      // standby expiry rate
    double nu = 0.1;      // setup completion rate
    double horizon = 100.0;
    std::optional<double> sample_interval;  // unset means horizon / 1000
    std::uint64_t seed = 1;
    std::size_t k_infinite = 0;  // servers 0..k-1 carry infinite queues
    InitialCondition initial;
    // Truncated-buffer variant used only for oracle comparison: arrivals
    // routed to a busy server already holding `buffer_cap` tasks are dropped.
    std::optional<std::uint64_t> buffer_cap;
    std::size_t depth = default_occupancy_depth;

    // Throws std::invalid_argument on a broken invariant.
    void validate() const;
    double resolved_sample_interval() const;
};

SystemState make_initial_state(const SimParams& params);

enum class EventKind : std::uint8_t { Arrival, Departure, StandbyExpiry, SetupComplete };

std::string_view to_string(EventKind kind);

enum class Assignment : std::uint8_t { Idle, Busy, Lost, CapDrop };

struct DispatchResult {
    Assignment assignment = Assignment::Lost;
    std::optional<ServerId> target;         // server that received the task
    std::optional<ServerId> setup_started;  // red server moved to setup
};

// Routes one arriving task according to the token rules.
DispatchResult dispatch(SystemState& state, Rng& rng,
                        std::optional<std::uint64_t> buffer_cap = std::nullopt);

// Sum of all event rates in `state`.
double total_rate(const SystemState& state, const SimParams& params);

struct StepResult {
    EventKind kind = EventKind::Arrival;
    double dwell = 0.0;
    ServerId server = 0;  // server the event happened at (arrivals: unused)
    DispatchResult dispatch;
};

// Draws the holding time of the current state.
double draw_dwell(const SystemState& state, const SimParams& params, Rng& rng);

// Selects an event in proportion to its rate and applies it. Does not move time.
StepResult fire_event(SystemState& state, const SimParams& params, Rng& rng);

// One Gillespie step: dwell, event, and time advance.
StepResult step(SystemState& state, const SimParams& params, Rng& rng);

struct SimSample {
    double t = 0.0;
    OccupancyState occupancy;
    std::uint64_t losses = 0;
    std::uint64_t setups = 0;
    std::uint64_t max_queue = 0;
    std::uint64_t events = 0;
    std::uint64_t arrivals = 0;
    std::uint64_t arrivals_no_green = 0;  // arrival epochs with Q1 + D0 + D1 = N
    std::int64_t infinite_net_flow = 0;   // summed over infinite servers
    // Exact time integrals from 0 to t of the scaled fractions.
    double integral_q1 = 0.0;
    double integral_delta0 = 0.0;
    double integral_delta1 = 0.0;
    double integral_u = 0.0;
};

struct SimTrace {
    SimParams params;
    std::vector<SimSample> samples;
    std::uint64_t events_processed = 0;
    SystemState final;
};

// Simulates until the horizon. Deterministic in (params, seed, replica).
SimTrace run(const SimParams& params, std::uint64_t replica = 0);

// Runs `replicas` independent streams; at most `threads` concurrently
// (0 picks the hardware concurrency).
std::vector<SimTrace> run_replicas(const SimParams& params, std::size_t replicas,
                                   std::size_t threads = 0);

struct SteadyStats {
    double window_start = 0.0;
    double window_length = 0.0;
    double mean_q1 = 0.0;
    double mean_delta0 = 0.0;
    double mean_delta1 = 0.0;
    double mean_u = 0.0;
    double p_all_occupied = 0.0;
    double q1_threshold = 0.1;
    double p_q1_below = 0.0;
    double loss_rate = 0.0;
    std::optional<double> infinite_drift;
};

inline constexpr double default_burn_in = 0.2;

// Post-burn-in averages. Means, rates and drift are exact (from cumulative
// counters); p_q1_below is time-weighted over the recorded samples.
SteadyStats steady_stats(const SimTrace& trace, double burn_in_fraction = default_burn_in,
                         double q1_threshold = 0.1);

// Associative merge of replica statistics (plain means).
class StatsAccumulator {
public:
    void add(const SteadyStats& s);
    StatsAccumulator& merge(const StatsAccumulator& other);
    std::size_t count() const { return n_; }
    SteadyStats mean() const;

private:
    std::size_t n_ = 0;
    std::size_t n_drift_ = 0;
    SteadyStats sum_;
    double drift_sum_ = 0.0;
};

}  // namespace tabs
