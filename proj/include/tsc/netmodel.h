#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tsc {

enum class Turn { left, straight, right };

std::string_view to_string(Turn turn);
Turn parse_turn(std::string_view text);

struct Lane {
    std::string id;
    std::size_t road = 0;
    double length_m = 0.0;
    double speed_mps = 0.0;
    Turn turn = Turn::straight;
    // Lane this one feeds across the downstream intersection. Absent when the
    // lane drains into a boundary sink.
    std::optional<std::size_t> downstream;

    bool operator==(const Lane &) const = default;
};

struct Road {
    std::string id;
    std::optional<std::size_t> from; // absent: boundary source
    std::optional<std::size_t> to;   // absent: boundary sink
    std::vector<std::size_t> lanes;

    bool operator==(const Road &) const = default;
};

struct Movement {
    std::size_t from_lane = 0;
    std::optional<std::size_t> to_lane; // absent: boundary sink
    Turn direction = Turn::straight;

    // Right turns pass regardless of the signal.
    bool always_permitted() const { return direction == Turn::right; }

    bool operator==(const Movement &) const = default;
};

struct Phase {
    std::vector<Movement> movements;
    std::vector<std::size_t> incoming_lanes; // sorted by canonical lane position

    bool operator==(const Phase &) const = default;
};

struct Intersection {
    std::string id;
    std::vector<std::size_t> incoming_roads; // canonical approach order
    std::vector<std::size_t> outgoing_roads;
    std::vector<std::size_t> incoming_lanes; // canonical lane order (observation order)
    std::vector<std::size_t> outgoing_lanes;
    std::vector<Movement> movements;          // one per incoming lane, canonical order
    std::vector<Phase> phases;
    std::vector<std::size_t> neighbors;       // sorted, unique

    bool operator==(const Intersection &) const = default;
};

// String-level description of a network, as it appears in a network file.
// RoadNet::build resolves and validates it.
struct NetDescription {
    struct LaneDesc {
        std::string id;
        std::string road;
        double length_m = 0.0;
        double speed_mps = 0.0;
        Turn turn = Turn::straight;
        std::optional<std::string> downstream;
    };
    struct RoadDesc {
        std::string id;
        std::optional<std::string> from;
        std::optional<std::string> to;
        std::vector<std::string> lanes;
    };
    using PhaseDesc = std::vector<std::pair<std::string, std::optional<std::string>>>;
    struct IntersectionDesc {
        std::string id;
        std::vector<std::string> incoming_roads;
        std::vector<std::string> outgoing_roads;
        std::vector<PhaseDesc> phases;
    };

    std::vector<IntersectionDesc> intersections;
    std::vector<RoadDesc> roads;
    std::vector<LaneDesc> lanes;
};

// Immutable, validated road network. Indices into lanes()/roads()/intersections()
// are stable for the lifetime of the object.
class RoadNet {
public:
    // Throws ValidationError on any broken invariant.
    static RoadNet build(const NetDescription &desc);

    const std::vector<Lane> &lanes() const { return lanes_; }
    const std::vector<Road> &roads() const { return roads_; }
    const std::vector<Intersection> &intersections() const { return intersections_; }

    const Lane &lane(std::size_t index) const { return lanes_.at(index); }
    const Road &road(std::size_t index) const { return roads_.at(index); }
    const Intersection &intersection(std::size_t index) const { return intersections_.at(index); }

    std::optional<std::size_t> find_lane(std::string_view id) const;
    std::optional<std::size_t> find_road(std::string_view id) const;
    std::optional<std::size_t> find_intersection(std::string_view id) const;

    // Lanes of roads that start at the boundary (where demand enters).
    const std::vector<std::size_t> &boundary_entries() const { return boundary_entries_; }
    // Roads that start at the boundary / have at least one lane draining to a sink.
    const std::vector<std::size_t> &entry_roads() const { return entry_roads_; }
    const std::vector<std::size_t> &exit_roads() const { return exit_roads_; }

    // Roads reachable in one hop from `road`, sorted.
    const std::vector<std::size_t> &successors(std::size_t road) const { return successors_.at(road); }
    // Lanes of `road` that lead to `next` across the downstream intersection.
    std::vector<std::size_t> lanes_toward(std::size_t road, std::size_t next) const;
    // Lanes of `road` that drain into a boundary sink.
    std::vector<std::size_t> sink_lanes(std::size_t road) const;

    // Position of `lane` within intersection.incoming_lanes, if it is incoming there.
    std::optional<std::size_t> incoming_position(std::size_t inter, std::size_t lane) const;

    double road_length(std::size_t road) const;

    NetDescription describe() const;

    bool operator==(const RoadNet &other) const {
        return lanes_ == other.lanes_ && roads_ == other.roads_ && intersections_ == other.intersections_;
    }

private:
    std::vector<Lane> lanes_;
    std::vector<Road> roads_;
    std::vector<Intersection> intersections_;
    std::vector<std::size_t> boundary_entries_;
    std::vector<std::size_t> entry_roads_;
    std::vector<std::size_t> exit_roads_;
    std::vector<std::vector<std::size_t>> successors_;
    std::unordered_map<std::string, std::size_t> lane_index_;
    std::unordered_map<std::string, std::size_t> road_index_;
    std::unordered_map<std::string, std::size_t> inter_index_;
};

// Network file (JSON) <-> RoadNet. See README for the schema.
RoadNet parse_roadnet(std::string_view text);
std::string serialize_roadnet(const RoadNet &net);

// rows x cols grid of 4-way intersections. Every road has three lanes
// (left, straight, right); boundary approaches start at sources and end at sinks.
// East-west roads are `ew_length_m` long, north-south roads `ns_length_m`.
RoadNet generate_grid(std::size_t rows, std::size_t cols, double ew_length_m, double ns_length_m,
                      int phase_count, double speed_mps = 10.0);

// Incoming lanes permitted by phase `phase` (right-turn lanes never appear).
// Throws std::out_of_range for an unknown phase.
const std::vector<std::size_t> &phase_lanes(const Intersection &inter, std::size_t phase);

} // namespace tsc
