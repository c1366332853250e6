#pragma once

#include "tsc/flow.h"
#include "tsc/netmodel.h"

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace tsc {

struct SimConfig {
    int t_duration_s = 15; // action interval / minimum phase duration
    int yellow_s = 3;
    int all_red_s = 2;
    int tick_s = 1;
    double saturation_veh_per_s_per_lane = 0.5;
    double vehicle_gap_m = 7.5;
    int episode_s = 3600;

    int transition_s() const { return yellow_s + all_red_s; }
    // Throws ConfigError naming the offending field.
    void validate() const;
};

using VehicleId = std::size_t; // index into Demand::events()

struct MovingVehicle {
    VehicleId vehicle;
    int arrives_at_s; // tick at which free-flow traversal completes
};

struct LaneState {
    std::deque<MovingVehicle> moving;
    std::deque<VehicleId> queue;
    double discharge_credit = 0.0; // fractional vehicles earned during green

    std::size_t occupancy() const { return moving.size() + queue.size(); }
    std::size_t queue_length() const { return queue.size(); }
};

struct SignalState {
    std::size_t current_phase = 0;
    std::optional<std::size_t> pending_phase;
    int transition_timer_s = 0;

    bool in_transition() const { return transition_timer_s > 0; }
    // Phase the controller has committed to (pending target during a transition).
    std::size_t committed_phase() const { return pending_phase.value_or(current_phase); }
};

struct VehicleRecord {
    double scheduled_s = 0.0;     // enter time from the demand
    std::optional<int> entered_s; // tick the vehicle was injected
    std::optional<int> exited_s;
    std::size_t route_pos = 0;    // index of the current road in the route
};

struct SimState {
    int clock_s = 0;
    std::vector<LaneState> lanes;
    std::vector<SignalState> signals;
    std::size_t next_event = 0;                   // pending-demand cursor
    std::vector<std::deque<VehicleId>> backlog;   // per road: due vehicles waiting to enter
    std::vector<VehicleRecord> vehicles;
    std::size_t entered = 0;
    std::size_t exited = 0;
    std::vector<std::size_t> queue_series;        // total queued vehicles after each tick

    std::size_t in_network() const;
};

struct Observation {
    std::size_t intersection = 0;
    std::vector<int> current_phase_onehot;
    std::vector<int> queue_lengths; // one per incoming lane, canonical order

    bool operator==(const Observation &) const = default;
};

struct Metrics {
    double avg_travel_time_s = 0.0;
    std::size_t throughput = 0; // exited vehicles
    std::size_t entered = 0;
    std::vector<std::size_t> queue_series;

    bool operator==(const Metrics &) const = default;
};

enum class RewardKind { queue, pressure };

SimState initial_state(const RoadNet &net, const Demand &demand);

// Lane capacity in vehicles: max(1, floor(length / jam gap)).
std::size_t lane_capacity(const Lane &lane, const SimConfig &config);
// Free-flow traversal time in whole ticks: max(1, ceil(length / speed)).
int traversal_ticks(const Lane &lane);

// Advances one tick:
//  (a) due demand joins its entry road's backlog; backlog heads are injected
//      while the chosen lane has free capacity (otherwise they wait);
//  (b) moving vehicles whose traversal has elapsed join the queue tail, or
//      leave the network if the lane ends at a boundary sink;
//  (c) at each intersection, queues of lanes permitted by the current phase
//      (none during a transition) and every right-turn lane discharge up to
//      the saturation rate into downstream lanes with free capacity;
//  (d) exits are recorded with the current clock;
//  (e) transition timers count down; the pending phase activates at zero.
// Conservation (entered = exited + in network) is checked every tick and a
// violation throws std::logic_error.
void step(SimState &state, const RoadNet &net, const Demand &demand, const SimConfig &config);

// Requests phase `phase` at intersection `inter`. Only valid on decision ticks
// (clock a multiple of t_duration_s). Re-requesting the committed phase is a
// no-op; otherwise a yellow + all-red transition starts.
void set_phase(SimState &state, const RoadNet &net, const SimConfig &config, std::size_t inter, std::size_t phase);

// Snapshot for one intersection. During a transition the one-hot marks the
// pending (committed) phase.
Observation observe(const SimState &state, const RoadNet &net, std::size_t inter);

int phase_queue_length(const SimState &state, const RoadNet &net, std::size_t inter, std::size_t phase);
int intersection_queue_length(const SimState &state, const RoadNet &net, std::size_t inter);
// Sum over the phase's movements of q(from_lane) - q(to_lane); sinks count as 0.
int pressure(const SimState &state, const RoadNet &net, std::size_t inter, std::size_t phase);
// Sum over every movement of the intersection (right turns included) of
// q(from_lane) - q(to_lane).
int intersection_pressure(const SimState &state, const RoadNet &net, std::size_t inter);
// kind=queue: -intersection_queue_length; kind=pressure: -|intersection_pressure|.
double reward(const SimState &state, const RoadNet &net, std::size_t inter, RewardKind kind);

// Average travel time over vehicles that entered: exited ones contribute
// exit - scheduled enter, the rest clock - scheduled enter.
Metrics collect_metrics(const SimState &state);

// FNV-1a digest of the full dynamic state.
std::uint64_t state_hash(const SimState &state);

using ControllerDecision = std::vector<std::size_t>;

// Read-only view handed to controllers at decision ticks.
struct TrafficView {
    const RoadNet &net;
    const SimState &state;
    const SimConfig &config;
};

class Controller {
public:
    virtual ~Controller() = default;
    virtual std::string name() const = 0;
    virtual void begin_episode(const TrafficView &) {}
    // One phase per intersection, in intersection order.
    virtual ControllerDecision decide(const TrafficView &view) = 0;
    virtual void end_episode(const TrafficView &) {}
};

struct EpisodeHooks {
    std::function<void(const SimState &)> after_tick;
};

// Runs ticks 0 .. episode_s - 1, querying the controller at every multiple of
// t_duration_s (including 0). Throws RuntimeAbort if the controller returns a
// decision of the wrong size or an invalid phase.
Metrics run_episode(const RoadNet &net, const Demand &demand, Controller &controller, const SimConfig &config,
                    const EpisodeHooks &hooks = {});

} // namespace tsc
