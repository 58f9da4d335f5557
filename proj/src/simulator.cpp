#include "tabs/simulator.hpp"

#include <atomic>
#include <cassert>
#include <cmath>
#include <fmt/format.h>
#include <thread>

namespace tabs {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

bool fraction(double x) { return std::isfinite(x) && x >= 0.0 && x <= 1.0; }

ServerId pick(const IndexedSet& set, Rng& rng) { return set[rng.below(set.size())]; }

}  // namespace

void SimParams::validate() const {
    require(servers >= 1, "servers must be >= 1");
    require(servers < 0xffffffffu, "servers exceeds id range");
    require(positive_finite(lambda), "lambda must be positive");
    require(positive_finite(mu), "mu must be positive");
    require(positive_finite(nu), "nu must be positive");
    require(std::isfinite(horizon) && horizon >= 0.0, "horizon must be >= 0");
    require(!sample_interval || positive_finite(*sample_interval),
            "sample_interval must be positive");
    require(k_infinite <= servers, "k_infinite must not exceed servers");
    require(fraction(initial.busy_fraction) && fraction(initial.setup_fraction) &&
                fraction(initial.idle_off_fraction),
            "initial fractions must lie in [0,1]");
    require(initial.busy_fraction + initial.setup_fraction + initial.idle_off_fraction <= 1.0 + 1e-9,
            "initial fractions sum above 1");
    require(initial.busy_queue_len >= 1, "initial busy queue length must be >= 1");
    require(!buffer_cap || *buffer_cap >= 1, "buffer_cap must be >= 1");
    require(depth >= 1, "depth must be >= 1");
}

double SimParams::resolved_sample_interval() const {
    return sample_interval ? *sample_interval : horizon / 1000.0;
}

SystemState make_initial_state(const SimParams& params) {
    params.validate();
    const std::size_t n = params.servers;
    std::vector<ServerState> servers(n, ServerState{ServerMode::IdleOn, 0, false, 0});
    std::size_t next = 0;
    for (; next < params.k_infinite; ++next) servers[next] = {ServerMode::Busy, 0, true, 0};

    const InitialCondition& init = params.initial;
    if (init.lead_queue > 0 && next < n) servers[next++] = {ServerMode::Busy, init.lead_queue, false, 0};

    auto fill = [&](double frac, ServerState proto) {
        auto want = static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
        for (std::size_t i = 0; i < want && next < n; ++i) servers[next++] = proto;
    };
    fill(init.busy_fraction, {ServerMode::Busy, init.busy_queue_len, false, 0});
    fill(init.setup_fraction, {ServerMode::Setup, 0, false, 0});
    fill(init.idle_off_fraction, {ServerMode::IdleOff, 0, false, 0});
    return make_state(std::move(servers));
}

std::string_view to_string(EventKind kind) {
    switch (kind) {
    case EventKind::Arrival: return "arrival";
    case EventKind::Departure: return "departure";
    case EventKind::StandbyExpiry: return "standby-expiry";
    case EventKind::SetupComplete: return "setup-complete";
    }
    return "?";
}

DispatchResult dispatch(SystemState& state, Rng& rng, std::optional<std::uint64_t> buffer_cap) {
    DispatchResult res;
    ++state.arrivals_total;

    if (!state.tokens.green.empty()) {
        const ServerId id = pick(state.tokens.green, rng);
        state.servers[id].queue_len = 1;
        state.set_mode(id, ServerMode::Busy);
        ++state.finite_joins;
        res.assignment = Assignment::Idle;
        res.target = id;
        return res;
    }

    ++state.arrivals_without_green;
    if (!state.busy.empty()) {
        const ServerId id = pick(state.busy, rng);
        ServerState& srv = state.servers[id];
        res.target = id;
        if (srv.infinite) {
            ++srv.net_flow;
            ++state.infinite_joins;
            res.assignment = Assignment::Busy;
        } else if (buffer_cap && srv.queue_len >= *buffer_cap) {
            ++state.cap_drops;
            ++state.losses;
            res.assignment = Assignment::CapDrop;
        } else {
            ++srv.queue_len;
            ++state.finite_joins;
            res.assignment = Assignment::Busy;
        }
    } else {
        ++state.losses;
        res.assignment = Assignment::Lost;
    }

    // A red token is consumed at every arrival epoch that found no green one,
    // whether or not the task itself was lost.
    if (!state.tokens.red.empty()) {
        const ServerId id = pick(state.tokens.red, rng);
        state.set_mode(id, ServerMode::Setup);
        ++state.setups_initiated;
        res.setup_started = id;
    }
    return res;
}

double total_rate(const SystemState& state, const SimParams& params) {
    return params.lambda * static_cast<double>(state.size()) +
           static_cast<double>(state.busy.size()) +
           params.mu * static_cast<double>(state.tokens.green.size()) +
           params.nu * static_cast<double>(state.tokens.orange.size());
}

double draw_dwell(const SystemState& state, const SimParams& params, Rng& rng) {
    return rng.exponential(total_rate(state, params));
}

StepResult fire_event(SystemState& state, const SimParams& params, Rng& rng) {
    const double arrival = params.lambda * static_cast<double>(state.size());
    const double departure = static_cast<double>(state.busy.size());
    const double standby = params.mu * static_cast<double>(state.tokens.green.size());
    const double setup = params.nu * static_cast<double>(state.tokens.orange.size());
    const double x = rng.uniform() * (arrival + departure + standby + setup);

    EventKind kind = EventKind::SetupComplete;
    if (x < arrival) {
        kind = EventKind::Arrival;
    } else if (x < arrival + departure) {
        kind = EventKind::Departure;
    } else if (x < arrival + departure + standby) {
        kind = EventKind::StandbyExpiry;
    } else if (state.tokens.orange.empty()) {
        // x rounded onto the upper edge; fall back to the last live category.
        kind = !state.tokens.green.empty() ? EventKind::StandbyExpiry
               : !state.busy.empty()       ? EventKind::Departure
                                           : EventKind::Arrival;
    }

    StepResult res;
    res.kind = kind;
    switch (kind) {
    case EventKind::Arrival:
        res.dispatch = dispatch(state, rng, params.buffer_cap);
        res.server = res.dispatch.target.value_or(0);
        break;
    case EventKind::Departure: {
        const ServerId id = pick(state.busy, rng);
        ServerState& srv = state.servers[id];
        res.server = id;
        ++state.departures_total;
        if (srv.infinite) {
            --srv.net_flow;
            ++state.infinite_departures;
        } else {
            ++state.finite_departures;
            if (--srv.queue_len == 0) state.set_mode(id, ServerMode::IdleOn);
        }
        break;
    }
    case EventKind::StandbyExpiry:
        res.server = pick(state.tokens.green, rng);
        state.set_mode(res.server, ServerMode::IdleOff);
        break;
    case EventKind::SetupComplete:
        res.server = pick(state.tokens.orange, rng);
        state.set_mode(res.server, ServerMode::IdleOn);
        break;
    }

#ifdef TABS_CHECK_INVARIANTS
    assert(validate(state).empty());
#endif
    return res;
}

StepResult step(SystemState& state, const SimParams& params, Rng& rng) {
    const double dwell = draw_dwell(state, params, rng);
    StepResult res = fire_event(state, params, rng);
    res.dwell = dwell;
    state.t += dwell;
    return res;
}

namespace {

// Time integrals of the mode counts, advanced lazily.
struct CountIntegrals {
    double busy = 0.0, idle_off = 0.0, setup = 0.0, idle_on = 0.0;
    double until = 0.0;

    void advance(const SystemState& s, double to) {
        const double dt = to - until;
        busy += static_cast<double>(s.busy.size()) * dt;
        idle_off += static_cast<double>(s.tokens.red.size()) * dt;
        setup += static_cast<double>(s.tokens.orange.size()) * dt;
        idle_on += static_cast<double>(s.tokens.green.size()) * dt;
        until = to;
    }
};

SimSample snapshot(const SystemState& s, const CountIntegrals& ints, double t,
                   std::uint64_t events, std::size_t depth) {
    OccupancySnapshot occ = occupancy_of(s, depth);
    const double n = static_cast<double>(s.size());
    SimSample out;
    out.t = t;
    out.occupancy = std::move(occ.occupancy);
    out.losses = s.losses;
    out.setups = s.setups_initiated;
    out.max_queue = occ.max_queue;
    out.events = events;
    out.arrivals = s.arrivals_total;
    out.arrivals_no_green = s.arrivals_without_green;
    out.infinite_net_flow = static_cast<std::int64_t>(s.infinite_joins) -
                            static_cast<std::int64_t>(s.infinite_departures);
    out.integral_q1 = ints.busy / n;
    out.integral_delta0 = ints.idle_off / n;
    out.integral_delta1 = ints.setup / n;
    out.integral_u = ints.idle_on / n;
    return out;
}

}  // namespace

SimTrace run(const SimParams& params, std::uint64_t replica) {
    SimTrace trace;
    trace.params = params;
    SystemState state = make_initial_state(params);
    if (params.horizon == 0.0) {
        trace.final = std::move(state);
        return trace;
    }

    Rng rng(params.seed, replica);
    const double h = params.resolved_sample_interval();
    const auto last_k = static_cast<std::uint64_t>(std::floor(params.horizon / h + 1e-9));
    std::uint64_t k = 0;
    CountIntegrals ints;

    for (;;) {
        const double t_next = state.t + draw_dwell(state, params, rng);
        while (k <= last_k && static_cast<double>(k) * h < t_next) {
            const double ts = std::min(static_cast<double>(k) * h, params.horizon);
            ints.advance(state, ts);
            trace.samples.push_back(snapshot(state, ints, ts, trace.events_processed, params.depth));
            ++k;
        }
        if (t_next > params.horizon) break;
        ints.advance(state, t_next);
        fire_event(state, params, rng);
        state.t = t_next;
        ++trace.events_processed;
    }
    state.t = params.horizon;
    trace.final = std::move(state);
    return trace;
}

std::vector<SimTrace> run_replicas(const SimParams& params, std::size_t replicas,
                                   std::size_t threads) {
    params.validate();
    std::vector<SimTrace> out(replicas);
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, replicas);

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto worker = [&] {
        for (std::size_t r; (r = next.fetch_add(1)) < replicas;) {
            try {
                out[r] = run(params, r);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
                return;
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

SteadyStats steady_stats(const SimTrace& trace, double burn_in_fraction, double q1_threshold) {
    if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) {
        throw std::invalid_argument("burn_in_fraction must lie in [0,1)");
    }
    const auto& s = trace.samples;
    if (s.empty()) throw std::invalid_argument("steady_stats: empty trace");

    const double t0 = burn_in_fraction * trace.params.horizon;
    std::size_t first = 0;
    while (first < s.size() && s[first].t < t0 - 1e-12) ++first;
    const std::size_t last = s.size() - 1;
    if (first >= last || s[last].t <= s[first].t) {
        throw std::runtime_error("steady_stats: empty post-burn-in window");
    }

    const SimSample& a = s[first];
    const SimSample& b = s[last];
    const double len = b.t - a.t;
    SteadyStats st;
    st.window_start = a.t;
    st.window_length = len;
    st.mean_q1 = (b.integral_q1 - a.integral_q1) / len;
    st.mean_delta0 = (b.integral_delta0 - a.integral_delta0) / len;
    st.mean_delta1 = (b.integral_delta1 - a.integral_delta1) / len;
    st.mean_u = (b.integral_u - a.integral_u) / len;
    const auto arrivals = b.arrivals - a.arrivals;
    st.p_all_occupied =
        arrivals == 0 ? 0.0
                      : static_cast<double>(b.arrivals_no_green - a.arrivals_no_green) /
                            static_cast<double>(arrivals);
    st.loss_rate = static_cast<double>(b.losses - a.losses) / len;

    st.q1_threshold = q1_threshold;
    double below = 0.0;
    for (std::size_t j = first; j < last; ++j) {
        if (s[j].occupancy.q1() < q1_threshold) below += s[j + 1].t - s[j].t;
    }
    st.p_q1_below = below / len;

    if (trace.params.k_infinite > 0) {
        st.infinite_drift = static_cast<double>(b.infinite_net_flow - a.infinite_net_flow) /
                            (static_cast<double>(trace.params.k_infinite) * len);
    }
    return st;
}

void StatsAccumulator::add(const SteadyStats& s) {
    ++n_;
    sum_.window_start += s.window_start;
    sum_.window_length += s.window_length;
    sum_.mean_q1 += s.mean_q1;
    sum_.mean_delta0 += s.mean_delta0;
    sum_.mean_delta1 += s.mean_delta1;
    sum_.mean_u += s.mean_u;
    sum_.p_all_occupied += s.p_all_occupied;
    sum_.q1_threshold = s.q1_threshold;
    sum_.p_q1_below += s.p_q1_below;
    sum_.loss_rate += s.loss_rate;
    if (s.infinite_drift) {
        ++n_drift_;
        drift_sum_ += *s.infinite_drift;
    }
}

StatsAccumulator& StatsAccumulator::merge(const StatsAccumulator& other) {
    n_ += other.n_;
    n_drift_ += other.n_drift_;
    drift_sum_ += other.drift_sum_;
    sum_.window_start += other.sum_.window_start;
    sum_.window_length += other.sum_.window_length;
    sum_.mean_q1 += other.sum_.mean_q1;
    sum_.mean_delta0 += other.sum_.mean_delta0;
    sum_.mean_delta1 += other.sum_.mean_delta1;
    sum_.mean_u += other.sum_.mean_u;
    sum_.p_all_occupied += other.sum_.p_all_occupied;
    if (other.n_ > 0) sum_.q1_threshold = other.sum_.q1_threshold;
    sum_.p_q1_below += other.sum_.p_q1_below;
    sum_.loss_rate += other.sum_.loss_rate;
    return *this;
}

SteadyStats StatsAccumulator::mean() const {
    if (n_ == 0) throw std::logic_error("StatsAccumulator::mean on empty accumulator");
    const double n = static_cast<double>(n_);
    SteadyStats m = sum_;
    m.window_start /= n;
    m.window_length /= n;
    m.mean_q1 /= n;
    m.mean_delta0 /= n;
    m.mean_delta1 /= n;
    m.mean_u /= n;
    m.p_all_occupied /= n;
    m.p_q1_below /= n;
    m.loss_rate /= n;
    if (n_drift_ > 0) m.infinite_drift = drift_sum_ / static_cast<double>(n_drift_);
    return m;
}

}  // namespace tabs
