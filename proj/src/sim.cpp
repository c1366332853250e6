#include "tsc/sim.h"

#include "tsc/error.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace tsc {

void SimConfig::validate() const {
    auto positive = [](int v, const char *key) {
        if (v <= 0)
            throw ConfigError(key, "must be positive");
    };
    positive(t_duration_s, "t_duration_s");
    positive(yellow_s, "yellow_s");
    positive(all_red_s, "all_red_s");
    positive(episode_s, "episode_s");
    if (tick_s != 1)
        throw ConfigError("tick_s", "only 1-second ticks are supported");
    if (!(saturation_veh_per_s_per_lane > 0.0))
        throw ConfigError("saturation_veh_per_s_per_lane", "must be positive");
    if (!(vehicle_gap_m > 0.0))
        throw ConfigError("vehicle_gap_m", "must be positive");
    if (yellow_s + all_red_s >= t_duration_s)
        throw ConfigError("yellow_s", "yellow_s + all_red_s must be shorter than t_duration_s");
}

std::size_t SimState::in_network() const {
    std::size_t n = 0;
    for (const auto &lane : lanes)
        n += lane.occupancy();
    return n;
}

SimState initial_state(const RoadNet &net, const Demand &demand) {
    SimState s;
    s.lanes.resize(net.lanes().size());
    s.signals.resize(net.intersections().size());
    s.backlog.resize(net.roads().size());
    s.vehicles.resize(demand.size());
    for (std::size_t v = 0; v < demand.size(); ++v)
        s.vehicles[v].scheduled_s = demand.events()[v].enter_time_s;
    return s;
}

std::size_t lane_capacity(const Lane &lane, const SimConfig &config) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(lane.length_m / config.vehicle_gap_m)));
}

int traversal_ticks(const Lane &lane) {
    return std::max(1, static_cast<int>(std::ceil(lane.length_m / lane.speed_mps - 1e-9)));
}

namespace {

// Lane a vehicle takes on route[pos]: the least-occupied lane leading toward
// route[pos + 1] (or draining to a sink when the route ends there); ties go to
// the lane listed first on the road.
std::size_t choose_lane(const SimState &s, const RoadNet &net, const std::vector<std::size_t> &route,
                        std::size_t pos) {
    const Road &road = net.road(route[pos]);
    const bool last = pos + 1 == route.size();
    std::optional<std::size_t> best;
    for (std::size_t l : road.lanes) {
        const Lane &lane = net.lane(l);
        bool ok = last ? !lane.downstream : (lane.downstream && net.lane(*lane.downstream).road == route[pos + 1]);
        if (ok && (!best || s.lanes[l].occupancy() < s.lanes[*best].occupancy()))
            best = l;
    }
    if (!best)
        throw std::logic_error("vehicle route is not drivable on road '" + road.id + "'");
    return *best;
}

void exit_vehicle(SimState &s, VehicleId v) {
    s.vehicles[v].exited_s = s.clock_s;
    ++s.exited;
}

} // namespace

void step(SimState &s, const RoadNet &net, const Demand &demand, const SimConfig &config) {
    const int t = s.clock_s;
    const auto &events = demand.events();

    // (a) injection
    while (s.next_event < events.size() && events[s.next_event].enter_time_s <= static_cast<double>(t)) {
        s.backlog[events[s.next_event].route.front()].push_back(s.next_event);
        ++s.next_event;
    }
    for (auto &waiting : s.backlog) {
        while (!waiting.empty()) {
            VehicleId v = waiting.front();
            const auto &route = events[v].route;
            std::size_t l = choose_lane(s, net, route, 0);
            if (s.lanes[l].occupancy() >= lane_capacity(net.lane(l), config))
                break;
            waiting.pop_front();
            s.lanes[l].moving.push_back({v, t + traversal_ticks(net.lane(l))});
            s.vehicles[v].entered_s = t;
            s.vehicles[v].route_pos = 0;
            ++s.entered;
        }
    }

    // (b) traversal completion
    for (std::size_t l = 0; l < s.lanes.size(); ++l) {
        LaneState &lane = s.lanes[l];
        const bool ends_at_boundary = !net.road(net.lane(l).road).to;
        while (!lane.moving.empty() && lane.moving.front().arrives_at_s <= t) {
            VehicleId v = lane.moving.front().vehicle;
            lane.moving.pop_front();
            if (ends_at_boundary)
                exit_vehicle(s, v);
            else
                lane.queue.push_back(v);
        }
    }

    // (c) discharge
    const double rate = config.saturation_veh_per_s_per_lane;
    const double credit_cap = std::max(1.0, rate);
    for (std::size_t i = 0; i < net.intersections().size(); ++i) {
        const Intersection &inter = net.intersection(i);
        const SignalState &sig = s.signals[i];
        const auto &green = inter.phases[sig.current_phase].incoming_lanes;
        for (std::size_t l : inter.incoming_lanes) {
            const Lane &lane_def = net.lane(l);
            LaneState &lane = s.lanes[l];
            bool permitted = lane_def.turn == Turn::right ||
                             (!sig.in_transition() && std::find(green.begin(), green.end(), l) != green.end());
            if (!permitted) {
                lane.discharge_credit = 0.0;
                continue;
            }
            lane.discharge_credit = std::min(lane.discharge_credit + rate, credit_cap);
            while (lane.discharge_credit >= 1.0 && !lane.queue.empty()) {
                VehicleId v = lane.queue.front();
                VehicleRecord &rec = s.vehicles[v];
                if (!lane_def.downstream) {
                    lane.queue.pop_front();
                    lane.discharge_credit -= 1.0;
                    exit_vehicle(s, v); // (d)
                    continue;
                }
                const auto &route = events[v].route;
                std::size_t target = choose_lane(s, net, route, rec.route_pos + 1);
                if (s.lanes[target].occupancy() >= lane_capacity(net.lane(target), config))
                    break;
                lane.queue.pop_front();
                lane.discharge_credit -= 1.0;
                rec.route_pos += 1;
                s.lanes[target].moving.push_back({v, t + traversal_ticks(net.lane(target))});
            }
        }
    }

    // (e) signal transitions
    for (auto &sig : s.signals) {
        if (!sig.in_transition())
            continue;
        if (--sig.transition_timer_s == 0) {
            sig.current_phase = *sig.pending_phase;
            sig.pending_phase.reset();
        }
    }

    std::size_t queued = 0;
    for (const auto &lane : s.lanes)
        queued += lane.queue.size();
    s.queue_series.push_back(queued);

    if (s.entered != s.exited + s.in_network())
        throw std::logic_error("vehicle conservation violated at t=" + std::to_string(t));
    s.clock_s = t + config.tick_s;
}

void set_phase(SimState &s, const RoadNet &net, const SimConfig &config, std::size_t inter, std::size_t phase) {
    if (s.clock_s % config.t_duration_s != 0)
        throw std::logic_error("set_phase outside a decision tick (t=" + std::to_string(s.clock_s) + ")");
    const Intersection &in = net.intersection(inter);
    if (phase >= in.phases.size())
        throw std::out_of_range("intersection '" + in.id + "' has no phase " + std::to_string(phase));
    SignalState &sig = s.signals.at(inter);
    if (phase == sig.committed_phase())
        return;
    sig.pending_phase = phase;
    sig.transition_timer_s = config.transition_s();
}

Observation observe(const SimState &s, const RoadNet &net, std::size_t inter) {
    const Intersection &in = net.intersection(inter);
    Observation obs;
    obs.intersection = inter;
    obs.current_phase_onehot.assign(in.phases.size(), 0);
    obs.current_phase_onehot[s.signals.at(inter).committed_phase()] = 1;
    obs.queue_lengths.reserve(in.incoming_lanes.size());
    for (std::size_t l : in.incoming_lanes)
        obs.queue_lengths.push_back(static_cast<int>(s.lanes[l].queue_length()));
    return obs;
}

int phase_queue_length(const SimState &s, const RoadNet &net, std::size_t inter, std::size_t phase) {
    int total = 0;
    for (std::size_t l : phase_lanes(net.intersection(inter), phase))
        total += static_cast<int>(s.lanes[l].queue_length());
    return total;
}

int intersection_queue_length(const SimState &s, const RoadNet &net, std::size_t inter) {
    int total = 0;
    for (std::size_t l : net.intersection(inter).incoming_lanes)
        total += static_cast<int>(s.lanes[l].queue_length());
    return total;
}

namespace {

int movement_pressure(const SimState &s, const Movement &m) {
    int up = static_cast<int>(s.lanes[m.from_lane].queue_length());
    int down = m.to_lane ? static_cast<int>(s.lanes[*m.to_lane].queue_length()) : 0;
    return up - down;
}

} // namespace

int pressure(const SimState &s, const RoadNet &net, std::size_t inter, std::size_t phase) {
    const Intersection &in = net.intersection(inter);
    if (phase >= in.phases.size())
        throw std::out_of_range("intersection '" + in.id + "' has no phase " + std::to_string(phase));
    int total = 0;
    for (const auto &m : in.phases[phase].movements)
        total += movement_pressure(s, m);
    return total;
}

int intersection_pressure(const SimState &s, const RoadNet &net, std::size_t inter) {
    int total = 0;
    for (const auto &m : net.intersection(inter).movements)
        total += movement_pressure(s, m);
    return total;
}

double reward(const SimState &s, const RoadNet &net, std::size_t inter, RewardKind kind) {
    if (kind == RewardKind::queue)
        return -static_cast<double>(intersection_queue_length(s, net, inter));
    return -static_cast<double>(std::abs(intersection_pressure(s, net, inter)));
}

Metrics collect_metrics(const SimState &s) {
    Metrics m;
    double total = 0.0;
    for (const auto &v : s.vehicles) {
        if (!v.entered_s)
            continue;
        ++m.entered;
        if (v.exited_s) {
            ++m.throughput;
            total += *v.exited_s - v.scheduled_s;
        } else {
            total += s.clock_s - v.scheduled_s;
        }
    }
    m.avg_travel_time_s = m.entered ? total / static_cast<double>(m.entered) : 0.0;
    m.queue_series = s.queue_series;
    return m;
}

std::uint64_t state_hash(const SimState &s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t x) {
        for (int k = 0; k < 8; ++k) {
            h ^= (x >> (8 * k)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    mix(static_cast<std::uint64_t>(s.clock_s));
    for (const auto &lane : s.lanes) {
        mix(lane.moving.size());
        for (const auto &mv : lane.moving) {
            mix(mv.vehicle);
            mix(static_cast<std::uint64_t>(mv.arrives_at_s));
        }
        mix(lane.queue.size());
        for (VehicleId v : lane.queue)
            mix(v);
        mix(std::bit_cast<std::uint64_t>(lane.discharge_credit));
    }
    for (const auto &sig : s.signals) {
        mix(sig.current_phase);
        mix(sig.pending_phase ? *sig.pending_phase + 1 : 0);
        mix(static_cast<std::uint64_t>(sig.transition_timer_s));
    }
    mix(s.next_event);
    mix(s.entered);
    mix(s.exited);
    return h;
}

Metrics run_episode(const RoadNet &net, const Demand &demand, Controller &controller, const SimConfig &config,
                    const EpisodeHooks &hooks) {
    config.validate();
    SimState state = initial_state(net, demand);
    TrafficView view{net, state, config};
    controller.begin_episode(view);
    const std::size_t n = net.intersections().size();
    for (int t = 0; t < config.episode_s; ++t) {
        if (t % config.t_duration_s == 0) {
            ControllerDecision decision = controller.decide(view);
            if (decision.size() != n)
                throw RuntimeAbort("controller '" + controller.name() + "' returned " +
                                   std::to_string(decision.size()) + " phases for " + std::to_string(n) +
                                   " intersections at t=" + std::to_string(t));
            for (std::size_t i = 0; i < n; ++i) {
                const Intersection &in = net.intersection(i);
                if (decision[i] >= in.phases.size())
                    throw RuntimeAbort("controller '" + controller.name() + "' returned invalid phase " +
                                       std::to_string(decision[i]) + " for intersection '" + in.id + "' (" +
                                       std::to_string(in.phases.size()) + " phases) at t=" + std::to_string(t));
                set_phase(state, net, config, i, decision[i]);
            }
        }
        step(state, net, demand, config);
        if (hooks.after_tick)
            hooks.after_tick(state);
    }
    controller.end_episode(view);
    return collect_metrics(state);
}

} // namespace tsc
