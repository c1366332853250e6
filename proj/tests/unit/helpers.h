#pragma once

#include "tsc/netmodel.h"
#include "tsc/rng.h"
#include "tsc/sim.h"

#include <string>
#include <vector>

namespace tsc::testing {

inline std::size_t road(const RoadNet &net, const std::string &id) { return net.find_road(id).value(); }
inline std::size_t lane(const RoadNet &net, const std::string &id) { return net.find_lane(id).value(); }

// Queue lengths drawn uniformly from [0, max_queue] on every lane; moving
// vehicles untouched. Vehicle ids are placeholders.
inline void randomize_queues(SimState &s, Rng &rng, int max_queue) {
    for (auto &l : s.lanes) {
        l.queue.clear();
        const auto n = rng.below(static_cast<std::uint64_t>(max_queue) + 1);
        for (std::uint64_t k = 0; k < n; ++k)
            l.queue.push_back(0);
    }
}

inline void set_queue(SimState &s, std::size_t lane_index, std::size_t n) {
    s.lanes.at(lane_index).queue.assign(n, 0);
}

} // namespace tsc::testing

#include <json.hpp>

namespace tsc::testing {

// One intersection fed by four boundary roads (approach n, e, s, w) of three
// lanes each; every movement drains straight into a sink.
inline nlohmann::json minimal_network_json(double length_m = 200.0) {
    using nlohmann::json;
    json lanes = json::array(), roads = json::array(), phases = json::array();
    const char *approach[] = {"n", "e", "s", "w"};
    const char *turns[] = {"left", "straight", "right"};
    for (const char *a : approach) {
        std::string rid = std::string("in_") + a;
        json lane_ids = json::array();
        for (int k = 0; k < 3; ++k) {
            std::string lid = rid + "_" + std::to_string(k);
            lanes.push_back({{"id", lid}, {"road", rid}, {"length_m", length_m}, {"speed_mps", 10},
                             {"turn", turns[k]}, {"downstream", nullptr}});
            lane_ids.push_back(lid);
        }
        roads.push_back({{"id", rid}, {"from", nullptr}, {"to", "I"}, {"lanes", lane_ids}});
    }
    auto mv = [](const char *a, int k) { return json::array({std::string("in_") + a + "_" + std::to_string(k), nullptr}); };
    phases.push_back(json::array({mv("n", 1), mv("s", 1)}));
    phases.push_back(json::array({mv("n", 0), mv("s", 0)}));
    phases.push_back(json::array({mv("e", 1), mv("w", 1)}));
    phases.push_back(json::array({mv("e", 0), mv("w", 0)}));
    json inter = {{"id", "I"},
                  {"incoming_roads", {"in_n", "in_e", "in_s", "in_w"}},
                  {"outgoing_roads", json::array()},
                  {"phases", phases}};
    return {{"intersections", {inter}}, {"roads", roads}, {"lanes", lanes}};
}

// Holds one phase everywhere.
class ConstantController : public Controller {
public:
    explicit ConstantController(std::size_t phase) : phase_(phase) {}
    std::string name() const override { return "constant"; }
    ControllerDecision decide(const TrafficView &view) override {
        return ControllerDecision(view.net.intersections().size(), phase_);
    }

private:
    std::size_t phase_;
};

} // namespace tsc::testing
