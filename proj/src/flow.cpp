#include "tsc/flow.h"

#include "json_util.h"
#include "tsc/error.h"
#include "tsc/rng.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace tsc {

using detail::json;

void validate_event(const RoadNet &net, const FlowEvent &event) {
    if (!(event.enter_time_s >= 0.0) || !std::isfinite(event.enter_time_s))
        throw ValidationError("flow event has negative or non-finite enter time");
    if (event.route.empty())
        throw ValidationError("flow event has an empty route");
    for (std::size_t r : event.route)
        if (r >= net.roads().size())
            throw ValidationError("flow event route references unknown road index " + std::to_string(r));
    const Road &first = net.road(event.route.front());
    if (first.from)
        throw ValidationError("route starts at road '" + first.id + "' which is not a boundary entry");
    for (std::size_t k = 0; k + 1 < event.route.size(); ++k) {
        const auto &next = net.successors(event.route[k]);
        if (!std::binary_search(next.begin(), next.end(), event.route[k + 1]))
            throw ValidationError("disconnected route: road '" + net.road(event.route[k + 1]).id +
                                  "' is not downstream of road '" + net.road(event.route[k]).id + "'");
    }
    if (net.sink_lanes(event.route.back()).empty())
        throw ValidationError("route ends at road '" + net.road(event.route.back()).id +
                              "' which does not drain into a boundary exit");
}

Demand::Demand(const RoadNet &net, std::vector<FlowEvent> events) : events_(std::move(events)) {
    for (const auto &e : events_)
        validate_event(net, e);
    std::stable_sort(events_.begin(), events_.end(),
                     [](const FlowEvent &a, const FlowEvent &b) { return a.enter_time_s < b.enter_time_s; });
}

Demand parse_flow(std::string_view text, const RoadNet &net) {
    json doc = detail::parse_json(text, "flow file");
    if (!doc.is_array())
        throw ValidationError("flow file: top level must be an array");
    std::vector<FlowEvent> events;
    events.reserve(doc.size());
    for (std::size_t k = 0; k < doc.size(); ++k) {
        const std::string path = "$[" + std::to_string(k) + "]";
        FlowEvent e;
        e.enter_time_s = detail::get_number(doc[k], "time_s", path);
        if (e.enter_time_s < 0.0)
            throw ValidationError(path + ".time_s: negative time");
        const json &route = detail::get_array(doc[k], "route", path);
        for (std::size_t j = 0; j < route.size(); ++j) {
            std::string id = detail::element_string(route[j], path + ".route[" + std::to_string(j) + "]");
            auto road = net.find_road(id);
            if (!road)
                throw ValidationError(path + ".route[" + std::to_string(j) + "]: unknown road '" + id + "'");
            e.route.push_back(*road);
        }
        try {
            validate_event(net, e);
        } catch (const ValidationError &err) {
            throw ValidationError(path + ": " + err.what());
        }
        events.push_back(std::move(e));
    }
    return Demand(net, std::move(events));
}

std::string serialize_flow(const Demand &demand, const RoadNet &net) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto &e : demand.events()) {
        nlohmann::ordered_json j;
        j["time_s"] = e.enter_time_s;
        auto &route = j["route"] = nlohmann::ordered_json::array();
        for (std::size_t r : e.route)
            route.push_back(net.road(r).id);
        doc.push_back(std::move(j));
    }
    return doc.dump(1) + "\n";
}

namespace {

constexpr double length_tolerance = 1e-9;

// Shortest-path structure from one entry road. dist[r] is the length driven
// once road r has been traversed (entry road included).
struct ShortestPaths {
    std::vector<double> dist;
};

ShortestPaths dijkstra(const RoadNet &net, std::size_t source) {
    const std::size_t n = net.roads().size();
    ShortestPaths sp{std::vector<double>(n, std::numeric_limits<double>::infinity())};
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    sp.dist[source] = net.road_length(source);
    heap.emplace(sp.dist[source], source);
    while (!heap.empty()) {
        auto [d, r] = heap.top();
        heap.pop();
        if (d > sp.dist[r])
            continue;
        for (std::size_t next : net.successors(r)) {
            double nd = d + net.road_length(next);
            if (nd < sp.dist[next] - length_tolerance) {
                sp.dist[next] = nd;
                heap.emplace(nd, next);
            }
        }
    }
    return sp;
}

bool on_shortest_edge(const RoadNet &net, const ShortestPaths &sp, std::size_t from, std::size_t to) {
    return std::isfinite(sp.dist[from]) &&
           std::abs(sp.dist[from] + net.road_length(to) - sp.dist[to]) <= length_tolerance;
}

// Number of shortest completions from each road to `target` (as doubles; grid
// path counts stay far below 2^53).
std::vector<double> completions(const RoadNet &net, const ShortestPaths &sp, std::size_t target) {
    const std::size_t n = net.roads().size();
    std::vector<std::size_t> order(n);
    for (std::size_t r = 0; r < n; ++r)
        order[r] = r;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sp.dist[a] > sp.dist[b]; });
    std::vector<double> count(n, 0.0);
    count[target] = 1.0;
    for (std::size_t r : order) {
        if (!std::isfinite(sp.dist[r]) || r == target)
            continue;
        for (std::size_t next : net.successors(r))
            if (on_shortest_edge(net, sp, r, next))
                count[r] += count[next];
    }
    return count;
}

} // namespace

Demand synth_demand(const RoadNet &net, const std::vector<DemandInterval> &pattern, std::uint64_t seed) {
    if (pattern.empty())
        throw ValidationError("synth_demand: empty pattern");
    for (const auto &iv : pattern) {
        if (!(iv.duration_s > 0.0))
            throw ValidationError("synth_demand: interval duration must be > 0");
        if (!(iv.vehicles_per_100s >= 0.0))
            throw ValidationError("synth_demand: rates must be >= 0");
    }

    struct OdPair {
        std::size_t entry, exit, sp_index;
    };
    std::vector<ShortestPaths> trees;
    std::vector<OdPair> pairs;
    for (std::size_t entry : net.entry_roads()) {
        trees.push_back(dijkstra(net, entry));
        for (std::size_t exit : net.exit_roads())
            if (std::isfinite(trees.back().dist[exit]))
                pairs.push_back({entry, exit, trees.size() - 1});
    }
    if (pairs.empty())
        throw ValidationError("synth_demand: network has no reachable entry/exit pair");

    std::vector<std::vector<double>> completion_cache(pairs.size());
    Rng rng(seed);
    std::vector<FlowEvent> events;
    double start = 0.0;
    for (const auto &iv : pattern) {
        const auto count = static_cast<std::size_t>(std::llround(iv.vehicles_per_100s * iv.duration_s / 100.0));
        for (std::size_t v = 0; v < count; ++v) {
            FlowEvent e;
            e.enter_time_s = start + iv.duration_s * rng.uniform01();
            const std::size_t p = rng.below(pairs.size());
            const OdPair &od = pairs[p];
            const ShortestPaths &sp = trees[od.sp_index];
            if (completion_cache[p].empty())
                completion_cache[p] = completions(net, sp, od.exit);
            const auto &paths = completion_cache[p];
            std::size_t at = od.entry;
            e.route.push_back(at);
            while (at != od.exit) {
                std::vector<std::size_t> options;
                double total = 0.0;
                for (std::size_t next : net.successors(at))
                    if (on_shortest_edge(net, sp, at, next) && paths[next] > 0.0) {
                        options.push_back(next);
                        total += paths[next];
                    }
                std::size_t chosen = options.back();
                if (options.size() > 1) {
                    double pick = rng.uniform01() * total;
                    for (std::size_t next : options) {
                        if (pick < paths[next]) {
                            chosen = next;
                            break;
                        }
                        pick -= paths[next];
                    }
                }
                at = chosen;
                e.route.push_back(at);
            }
            events.push_back(std::move(e));
        }
        start += iv.duration_s;
    }
    return Demand(net, std::move(events));
}

} // namespace tsc
