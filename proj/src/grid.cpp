#include "tsc/netmodel.h"

#include "tsc/error.h"

#include <array>

namespace tsc {

namespace {

// Travel headings, clockwise.
enum Heading { north = 0, east = 1, south = 2, west = 3 };
constexpr std::array<char, 4> heading_code{'N', 'E', 'S', 'W'};
constexpr std::array<int, 4> d_row{-1, 0, 1, 0};
constexpr std::array<int, 4> d_col{0, 1, 0, -1};

// Approach order for incoming roads: from the north, east, south, west
// (i.e. vehicles heading south, west, north, east).
constexpr std::array<int, 4> approach_heading{south, west, north, east};
constexpr std::array<int, 4> outgoing_heading{north, east, south, west};
constexpr std::array<Turn, 3> lane_turns{Turn::left, Turn::straight, Turn::right};

int turned(int heading, Turn turn) {
    switch (turn) {
    case Turn::left:
        return (heading + 3) % 4;
    case Turn::right:
        return (heading + 1) % 4;
    case Turn::straight:
        break;
    }
    return heading;
}

} // namespace

RoadNet generate_grid(std::size_t rows, std::size_t cols, double ew_length_m, double ns_length_m, int phase_count,
                      double speed_mps) {
    if (rows < 1 || cols < 1)
        throw ValidationError("generate_grid: rows and cols must be >= 1");
    if (!(ew_length_m > 0.0) || !(ns_length_m > 0.0))
        throw ValidationError("generate_grid: road lengths must be > 0");
    if (phase_count != 4 && phase_count != 8)
        throw ValidationError("generate_grid: phase_count must be 4 or 8, got " + std::to_string(phase_count));

    const int R = static_cast<int>(rows), C = static_cast<int>(cols);
    auto inside = [&](int r, int c) { return r >= 0 && r < R && c >= 0 && c < C; };
    auto inter_id = [](int r, int c) { return "I_" + std::to_string(r) + "_" + std::to_string(c); };
    // Road leaving intersection (r, c) with heading h.
    auto out_road = [](int r, int c, int h) {
        return "R_" + std::to_string(r) + "_" + std::to_string(c) + "_" + heading_code[h];
    };
    // Boundary road entering intersection (r, c) with heading h.
    auto entry_road = [](int r, int c, int h) {
        return "B_" + std::to_string(r) + "_" + std::to_string(c) + "_" + heading_code[h];
    };
    auto incoming_road = [&](int r, int c, int h) {
        int pr = r - d_row[h], pc = c - d_col[h];
        return inside(pr, pc) ? out_road(pr, pc, h) : entry_road(r, c, h);
    };
    auto lane_id = [](const std::string &road, std::size_t k) { return road + "_" + std::to_string(k); };
    auto length_for = [&](int h) { return (h == east || h == west) ? ew_length_m : ns_length_m; };

    NetDescription desc;
    auto add_road = [&](const std::string &id, std::optional<std::string> from, std::optional<std::string> to, int h,
                        std::optional<std::pair<int, int>> downstream_at) {
        NetDescription::RoadDesc rd{id, std::move(from), std::move(to), {}};
        for (std::size_t k = 0; k < lane_turns.size(); ++k) {
            NetDescription::LaneDesc ld;
            ld.id = lane_id(id, k);
            ld.road = id;
            ld.length_m = length_for(h);
            ld.speed_mps = speed_mps;
            ld.turn = lane_turns[k];
            if (downstream_at) {
                auto [r, c] = *downstream_at;
                ld.downstream = lane_id(out_road(r, c, turned(h, lane_turns[k])), k);
            }
            rd.lanes.push_back(ld.id);
            desc.lanes.push_back(std::move(ld));
        }
        desc.roads.push_back(std::move(rd));
    };

    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c)
            for (int h : outgoing_heading) {
                int nr = r + d_row[h], nc = c + d_col[h];
                if (inside(nr, nc))
                    add_road(out_road(r, c, h), inter_id(r, c), inter_id(nr, nc), h, std::pair{nr, nc});
                else
                    add_road(out_road(r, c, h), inter_id(r, c), std::nullopt, h, std::nullopt);
            }
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c)
            for (int h : outgoing_heading)
                if (!inside(r - d_row[h], c - d_col[h]))
                    add_road(entry_road(r, c, h), std::nullopt, inter_id(r, c), h, std::pair{r, c});

    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) {
            NetDescription::IntersectionDesc id;
            id.id = inter_id(r, c);
            for (int h : approach_heading)
                id.incoming_roads.push_back(incoming_road(r, c, h));
            for (int h : outgoing_heading)
                id.outgoing_roads.push_back(out_road(r, c, h));

            // Movement served by the lane of approach `a` (index into approach_heading) with turn `k`.
            auto movement = [&](int a, std::size_t k) {
                int h = approach_heading[a];
                return std::pair{lane_id(incoming_road(r, c, h), k),
                                 std::optional<std::string>(lane_id(out_road(r, c, turned(h, lane_turns[k])), k))};
            };
            constexpr std::size_t L = 0, T = 1;
            constexpr int from_n = 0, from_e = 1, from_s = 2, from_w = 3;
            id.phases.push_back({movement(from_n, T), movement(from_s, T)}); // A: north-south through
            id.phases.push_back({movement(from_n, L), movement(from_s, L)}); // B: north-south left
            id.phases.push_back({movement(from_e, T), movement(from_w, T)}); // C: east-west through
            id.phases.push_back({movement(from_e, L), movement(from_w, L)}); // D: east-west left
            if (phase_count == 8)
                for (int a : {from_n, from_e, from_s, from_w})
                    id.phases.push_back({movement(a, T), movement(a, L)}); // single-approach through + left
            desc.intersections.push_back(std::move(id));
        }
    return RoadNet::build(desc);
}

} // namespace tsc
