#include "tsc/netmodel.h"

#include "tsc/error.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace tsc {

std::string_view to_string(Turn turn) {
    switch (turn) {
    case Turn::left:
        return "left";
    case Turn::straight:
        return "straight";
    case Turn::right:
        return "right";
    }
    return "?";
}

Turn parse_turn(std::string_view text) {
    if (text == "left")
        return Turn::left;
    if (text == "straight")
        return Turn::straight;
    if (text == "right")
        return Turn::right;
    throw ValidationError("unknown turn '" + std::string(text) + "' (expected left, straight or right)");
}

namespace {

template <typename Map>
std::size_t resolve(const Map &index, const std::string &id, const std::string &context) {
    auto it = index.find(id);
    if (it == index.end())
        throw ValidationError(context + " references unknown id '" + id + "'");
    return it->second;
}

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x)
            x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

} // namespace

RoadNet RoadNet::build(const NetDescription &desc) {
    RoadNet net;

    for (std::size_t i = 0; i < desc.intersections.size(); ++i)
        if (!net.inter_index_.emplace(desc.intersections[i].id, i).second)
            throw ValidationError("duplicate intersection id '" + desc.intersections[i].id + "'");
    for (std::size_t r = 0; r < desc.roads.size(); ++r)
        if (!net.road_index_.emplace(desc.roads[r].id, r).second)
            throw ValidationError("duplicate road id '" + desc.roads[r].id + "'");
    for (std::size_t l = 0; l < desc.lanes.size(); ++l)
        if (!net.lane_index_.emplace(desc.lanes[l].id, l).second)
            throw ValidationError("duplicate lane id '" + desc.lanes[l].id + "'");

    net.lanes_.reserve(desc.lanes.size());
    for (const auto &ld : desc.lanes) {
        Lane lane;
        lane.id = ld.id;
        lane.road = resolve(net.road_index_, ld.road, "lane '" + ld.id + "'");
        if (!(ld.length_m > 0.0) || !std::isfinite(ld.length_m))
            throw ValidationError("lane '" + ld.id + "': length_m must be > 0");
        if (!(ld.speed_mps > 0.0) || !std::isfinite(ld.speed_mps))
            throw ValidationError("lane '" + ld.id + "': speed_mps must be > 0");
        lane.length_m = ld.length_m;
        lane.speed_mps = ld.speed_mps;
        lane.turn = ld.turn;
        if (ld.downstream)
            lane.downstream = resolve(net.lane_index_, *ld.downstream, "lane '" + ld.id + "' downstream");
        net.lanes_.push_back(std::move(lane));
    }

    std::vector<int> lane_owner(net.lanes_.size(), -1);
    net.roads_.reserve(desc.roads.size());
    for (std::size_t r = 0; r < desc.roads.size(); ++r) {
        const auto &rd = desc.roads[r];
        Road road;
        road.id = rd.id;
        if (rd.from)
            road.from = resolve(net.inter_index_, *rd.from, "road '" + rd.id + "' from");
        if (rd.to)
            road.to = resolve(net.inter_index_, *rd.to, "road '" + rd.id + "' to");
        if (road.from && road.to && *road.from == *road.to)
            throw ValidationError("road '" + rd.id + "' starts and ends at the same intersection");
        if (rd.lanes.empty())
            throw ValidationError("road '" + rd.id + "' has no lanes");
        for (const auto &lid : rd.lanes) {
            std::size_t l = resolve(net.lane_index_, lid, "road '" + rd.id + "'");
            if (net.lanes_[l].road != r)
                throw ValidationError("lane '" + lid + "' is listed by road '" + rd.id + "' but names road '" +
                                      desc.roads[net.lanes_[l].road].id + "'");
            if (lane_owner[l] != -1)
                throw ValidationError("lane '" + lid + "' is listed twice");
            lane_owner[l] = static_cast<int>(r);
            road.lanes.push_back(l);
        }
        net.roads_.push_back(std::move(road));
    }
    for (std::size_t l = 0; l < net.lanes_.size(); ++l)
        if (lane_owner[l] == -1)
            throw ValidationError("lane '" + net.lanes_[l].id + "' is not listed by its road");

    for (const auto &lane : net.lanes_) {
        const Road &road = net.roads_[lane.road];
        if (!lane.downstream)
            continue;
        if (!road.to)
            throw ValidationError("lane '" + lane.id + "' ends at the boundary but has a downstream lane");
        const Road &next = net.roads_[net.lanes_[*lane.downstream].road];
        if (next.from != road.to)
            throw ValidationError("lane '" + lane.id + "' downstream '" + net.lanes_[*lane.downstream].id +
                                  "' does not leave the intersection the lane enters");
    }

    net.intersections_.resize(desc.intersections.size());
    for (std::size_t i = 0; i < desc.intersections.size(); ++i) {
        const auto &id = desc.intersections[i];
        Intersection &inter = net.intersections_[i];
        inter.id = id.id;
        const std::string ctx = "intersection '" + id.id + "'";

        auto collect_roads = [&](const std::vector<std::string> &ids, bool incoming) {
            std::vector<std::size_t> out;
            std::set<std::size_t> seen;
            for (const auto &rid : ids) {
                std::size_t r = resolve(net.road_index_, rid, ctx);
                const auto &end = incoming ? net.roads_[r].to : net.roads_[r].from;
                if (end != i)
                    throw ValidationError(ctx + " lists road '" + rid + "' which does not " +
                                          (incoming ? "enter" : "leave") + " it");
                if (!seen.insert(r).second)
                    throw ValidationError(ctx + " lists road '" + rid + "' twice");
                out.push_back(r);
            }
            for (std::size_t r = 0; r < net.roads_.size(); ++r) {
                const auto &end = incoming ? net.roads_[r].to : net.roads_[r].from;
                if (end == i && !seen.count(r))
                    throw ValidationError(ctx + " does not list " + (incoming ? "incoming" : "outgoing") +
                                          " road '" + net.roads_[r].id + "'");
            }
            return out;
        };
        inter.incoming_roads = collect_roads(id.incoming_roads, true);
        inter.outgoing_roads = collect_roads(id.outgoing_roads, false);
        for (std::size_t r : inter.incoming_roads)
            for (std::size_t l : net.roads_[r].lanes)
                inter.incoming_lanes.push_back(l);
        for (std::size_t r : inter.outgoing_roads)
            for (std::size_t l : net.roads_[r].lanes)
                inter.outgoing_lanes.push_back(l);
        for (std::size_t l : inter.incoming_lanes)
            inter.movements.push_back(Movement{l, net.lanes_[l].downstream, net.lanes_[l].turn});

        std::set<std::size_t> neighbors;
        for (std::size_t r : inter.incoming_roads)
            if (net.roads_[r].from)
                neighbors.insert(*net.roads_[r].from);
        for (std::size_t r : inter.outgoing_roads)
            if (net.roads_[r].to)
                neighbors.insert(*net.roads_[r].to);
        inter.neighbors.assign(neighbors.begin(), neighbors.end());

        if (id.phases.empty())
            throw ValidationError(ctx + " has no phases");
        std::vector<std::set<std::size_t>> phase_sets;
        std::set<std::size_t> covered;
        for (std::size_t p = 0; p < id.phases.size(); ++p) {
            const std::string pctx = ctx + " phase " + std::to_string(p);
            if (id.phases[p].empty())
                throw ValidationError(pctx + " has no movements");
            Phase phase;
            std::set<std::size_t> from_lanes;
            for (const auto &[from_id, to_id] : id.phases[p]) {
                auto from = net.find_lane(from_id);
                std::optional<std::size_t> to;
                if (to_id)
                    to = net.find_lane(*to_id);
                std::string pair_text = "[" + from_id + ", " + (to_id ? *to_id : "null") + "]";
                if (!from || (to_id && !to))
                    throw ValidationError(pctx + " references unknown movement " + pair_text);
                auto it = std::find_if(inter.movements.begin(), inter.movements.end(),
                                       [&](const Movement &m) { return m.from_lane == *from; });
                if (it == inter.movements.end() || it->to_lane != to)
                    throw ValidationError(pctx + " references unknown movement " + pair_text);
                if (it->always_permitted())
                    throw ValidationError(pctx + " lists right-turn movement " + pair_text +
                                          "; right turns are always permitted");
                if (!from_lanes.insert(*from).second)
                    throw ValidationError(pctx + " lists movement " + pair_text + " twice");
                phase.movements.push_back(*it);
            }
            for (std::size_t l : inter.incoming_lanes)
                if (from_lanes.count(l))
                    phase.incoming_lanes.push_back(l);
            for (const auto &prev : phase_sets)
                if (prev == from_lanes)
                    throw ValidationError(pctx + " duplicates an earlier phase");
            phase_sets.push_back(from_lanes);
            covered.insert(from_lanes.begin(), from_lanes.end());
            inter.phases.push_back(std::move(phase));
        }
        for (const auto &m : inter.movements)
            if (!m.always_permitted() && !covered.count(m.from_lane))
                throw ValidationError(ctx + ": movement from lane '" + net.lanes_[m.from_lane].id +
                                      "' is not served by any phase");
    }

    // Weak connectivity: intersections joined by internal roads; a road with no
    // intersection at either end is a component of its own.
    {
        std::size_t n = net.intersections_.size();
        UnionFind uf(n + net.roads_.size());
        for (std::size_t r = 0; r < net.roads_.size(); ++r) {
            const Road &road = net.roads_[r];
            if (road.from)
                uf.unite(n + r, *road.from);
            if (road.to)
                uf.unite(n + r, *road.to);
        }
        std::set<std::size_t> roots;
        for (std::size_t k = 0; k < n + net.roads_.size(); ++k)
            roots.insert(uf.find(k));
        if (roots.size() > 1)
            throw ValidationError("road network is not connected (" + std::to_string(roots.size()) + " components)");
    }

    net.successors_.resize(net.roads_.size());
    for (std::size_t r = 0; r < net.roads_.size(); ++r) {
        const Road &road = net.roads_[r];
        std::set<std::size_t> next;
        bool has_sink = false;
        for (std::size_t l : road.lanes) {
            if (net.lanes_[l].downstream)
                next.insert(net.lanes_[*net.lanes_[l].downstream].road);
            else
                has_sink = true;
        }
        net.successors_[r].assign(next.begin(), next.end());
        if (!road.from) {
            net.entry_roads_.push_back(r);
            net.boundary_entries_.insert(net.boundary_entries_.end(), road.lanes.begin(), road.lanes.end());
        }
        if (has_sink)
            net.exit_roads_.push_back(r);
    }
    return net;
}

std::optional<std::size_t> RoadNet::find_lane(std::string_view id) const {
    auto it = lane_index_.find(std::string(id));
    if (it == lane_index_.end())
        return std::nullopt;
    return it->second;
}

std::optional<std::size_t> RoadNet::find_road(std::string_view id) const {
    auto it = road_index_.find(std::string(id));
    if (it == road_index_.end())
        return std::nullopt;
    return it->second;
}

std::optional<std::size_t> RoadNet::find_intersection(std::string_view id) const {
    auto it = inter_index_.find(std::string(id));
    if (it == inter_index_.end())
        return std::nullopt;
    return it->second;
}

std::vector<std::size_t> RoadNet::lanes_toward(std::size_t road, std::size_t next) const {
    std::vector<std::size_t> out;
    for (std::size_t l : roads_.at(road).lanes)
        if (lanes_[l].downstream && lanes_[*lanes_[l].downstream].road == next)
            out.push_back(l);
    return out;
}

std::vector<std::size_t> RoadNet::sink_lanes(std::size_t road) const {
    std::vector<std::size_t> out;
    for (std::size_t l : roads_.at(road).lanes)
        if (!lanes_[l].downstream)
            out.push_back(l);
    return out;
}

std::optional<std::size_t> RoadNet::incoming_position(std::size_t inter, std::size_t lane) const {
    const auto &in = intersections_.at(inter).incoming_lanes;
    auto it = std::find(in.begin(), in.end(), lane);
    if (it == in.end())
        return std::nullopt;
    return static_cast<std::size_t>(it - in.begin());
}

double RoadNet::road_length(std::size_t road) const {
    double len = 0.0;
    for (std::size_t l : roads_.at(road).lanes)
        len = std::max(len, lanes_[l].length_m);
    return len;
}

NetDescription RoadNet::describe() const {
    NetDescription d;
    for (const auto &inter : intersections_) {
        NetDescription::IntersectionDesc id;
        id.id = inter.id;
        for (std::size_t r : inter.incoming_roads)
            id.incoming_roads.push_back(roads_[r].id);
        for (std::size_t r : inter.outgoing_roads)
            id.outgoing_roads.push_back(roads_[r].id);
        for (const auto &phase : inter.phases) {
            NetDescription::PhaseDesc pd;
            for (const auto &m : phase.movements)
                pd.emplace_back(lanes_[m.from_lane].id,
                                m.to_lane ? std::optional<std::string>(lanes_[*m.to_lane].id) : std::nullopt);
            id.phases.push_back(std::move(pd));
        }
        d.intersections.push_back(std::move(id));
    }
    for (const auto &road : roads_) {
        NetDescription::RoadDesc rd;
        rd.id = road.id;
        if (road.from)
            rd.from = intersections_[*road.from].id;
        if (road.to)
            rd.to = intersections_[*road.to].id;
        for (std::size_t l : road.lanes)
            rd.lanes.push_back(lanes_[l].id);
        d.roads.push_back(std::move(rd));
    }
    for (const auto &lane : lanes_) {
        NetDescription::LaneDesc ld;
        ld.id = lane.id;
        ld.road = roads_[lane.road].id;
        ld.length_m = lane.length_m;
        ld.speed_mps = lane.speed_mps;
        ld.turn = lane.turn;
        if (lane.downstream)
            ld.downstream = lanes_[*lane.downstream].id;
        d.lanes.push_back(std::move(ld));
    }
    return d;
}

const std::vector<std::size_t> &phase_lanes(const Intersection &inter, std::size_t phase) {
    if (phase >= inter.phases.size())
        throw std::out_of_range("intersection '" + inter.id + "' has no phase " + std::to_string(phase));
    return inter.phases[phase].incoming_lanes;
}

} // namespace tsc
