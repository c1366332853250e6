#pragma once

#include "tsc/netmodel.h"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tsc {

struct FlowEvent {
    double enter_time_s = 0.0;
    std::vector<std::size_t> route; // road indices into the bound RoadNet

    bool operator==(const FlowEvent &) const = default;
};

// Vehicle demand bound to one RoadNet. Events are sorted by enter time
// (stable with respect to input order).
class Demand {
public:
    Demand() = default;
    // Validates every route against `net` and stably sorts by enter time.
    Demand(const RoadNet &net, std::vector<FlowEvent> events);

    const std::vector<FlowEvent> &events() const { return events_; }
    std::size_t size() const { return events_.size(); }
    bool empty() const { return events_.empty(); }

    bool operator==(const Demand &) const = default;

private:
    std::vector<FlowEvent> events_;
};

// Throws ValidationError if `event` cannot be driven on `net`: unknown road,
// negative time, route not starting at a boundary entry, consecutive roads
// not connected, last road not draining into a sink.
void validate_event(const RoadNet &net, const FlowEvent &event);

// Flow file: a JSON array of {"time_s": number, "route": [road ids]}.
Demand parse_flow(std::string_view text, const RoadNet &net);
std::string serialize_flow(const Demand &demand, const RoadNet &net);

struct DemandInterval {
    double duration_s = 0.0;
    double vehicles_per_100s = 0.0;
};

// Piecewise-constant synthetic demand. Interval k receives exactly
// round(rate_k * duration_k / 100) vehicles. For each vehicle, in order:
//   t     = start_k + duration_k * u          (u = Rng::uniform01)
//   od    = reachable (entry road, exit road) pair #Rng::below(#pairs)
//   route = a shortest path (by road length) for that pair, drawn uniformly
//           among all shortest paths by walking the shortest-path DAG and
//           picking each successor with probability proportional to the
//           number of shortest completions through it.
// Pairs are enumerated entry-major in road-index order. Rng is seeded with `seed`.
Demand synth_demand(const RoadNet &net, const std::vector<DemandInterval> &pattern, std::uint64_t seed);

} // namespace tsc
