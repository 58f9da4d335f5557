#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tabs {

using ServerId = std::uint32_t;

// Token colors at the dispatcher: Busy = yellow, IdleOn = green,
// IdleOff = red, Setup = orange.
enum class ServerMode : std::uint8_t { Busy, IdleOn, IdleOff, Setup };

std::string_view to_string(ServerMode mode);

struct ServerState {
    ServerMode mode = ServerMode::IdleOff;
    std::uint64_t queue_len = 0;  // tasks present, including the one in service
    bool infinite = false;        // queue treated as +inf; server is Busy forever
    std::int64_t net_flow = 0;    // arrivals - departures while infinite

    friend bool operator==(const ServerState&, const ServerState&) = default;
};

// Set of server ids with O(1) insert, erase, membership and uniform pick.
class IndexedSet {
public:
    IndexedSet() = default;
    explicit IndexedSet(std::size_t capacity) { reset(capacity); }

    void reset(std::size_t capacity);
    void insert(ServerId id);
    void erase(ServerId id);
    bool contains(ServerId id) const {
        return id < pos_.size() && pos_[id] != npos;
    }

    std::size_t size() const { return members_.size(); }
    bool empty() const { return members_.empty(); }
    ServerId operator[](std::size_t i) const { return members_[i]; }
    std::span<const ServerId> members() const { return members_; }
    std::size_t capacity() const { return pos_.size(); }

private:
    static constexpr std::uint32_t npos = 0xffffffffu;
    std::vector<ServerId> members_;
    std::vector<std::uint32_t> pos_;
};

// Dispatcher-side messages. Yellow tokens (busy servers) are implicit; the
// system state keeps them indexed separately for uniform selection.
struct TokenPool {
    IndexedSet green;
    IndexedSet red;
    IndexedSet orange;
};

struct SystemState {
    std::vector<ServerState> servers;
    TokenPool tokens;
    IndexedSet busy;
    double t = 0.0;

    std::uint64_t losses = 0;  // includes cap drops
    std::uint64_t setups_initiated = 0;
    std::uint64_t arrivals_total = 0;
    std::uint64_t departures_total = 0;
    std::uint64_t arrivals_without_green = 0;  // arrival epochs with no idle-on server

    // Conservation bookkeeping: every arrival is lost, joins a finite queue,
    // or joins an infinite queue.
    std::uint64_t finite_joins = 0;
    std::uint64_t infinite_joins = 0;
    std::uint64_t finite_departures = 0;
    std::uint64_t infinite_departures = 0;
    std::uint64_t cap_drops = 0;

    std::size_t size() const { return servers.size(); }
    std::size_t count(ServerMode mode) const;

    // Moves a server to `mode`, keeping the token pool and busy index mirrored.
    void set_mode(ServerId id, ServerMode mode);
};

// Builds a consistent SystemState (tokens and busy index derived from modes).
SystemState make_state(std::vector<ServerState> servers);

struct Violation {
    std::string invariant;
    std::optional<ServerId> server;
    std::string detail;
};

// Diagnostic check of every server, token and partition invariant.
std::vector<Violation> validate(const SystemState& state);

// Scaled occupancy (q, delta0, delta1) with infinite-queue floor kappa.
// q[0] holds q_1, q[i-1] holds q_i.
struct OccupancyState {
    std::vector<double> q;
    double delta0 = 0.0;
    double delta1 = 0.0;
    double kappa = 0.0;

    std::size_t depth() const { return q.size(); }
    // 1-based q_i; depths beyond the stored vector read as kappa.
    double q_at(std::size_t i) const {
        return i >= 1 && i <= q.size() ? q[i - 1] : kappa;
    }
    double q1() const { return q_at(1); }
    double u() const { return 1.0 - q1() - delta0 - delta1; }
};

// Membership in E_kappa with slack `tol`; returns the first broken invariant.
std::optional<std::string> check_space(const OccupancyState& occ, double tol);

class TruncationOverflow : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct OccupancySnapshot {
    OccupancyState occupancy;
    std::uint64_t max_queue = 0;  // largest finite queue
    bool truncated = false;       // some finite queue exceeds the depth
};

inline constexpr std::size_t default_occupancy_depth = 64;

// Counts servers per depth. Infinite servers count at every depth.
// Throws TruncationOverflow when `strict` and a finite queue exceeds `depth`.
OccupancySnapshot occupancy_of(const SystemState& state,
                               std::size_t depth = default_occupancy_depth,
                               bool strict = false);

}  // namespace tabs
