#include "helpers.h"
#include "tsc/error.h"
#include "tsc/netmodel.h"

#include <doctest.h>
#include <json.hpp>

#include <map>
#include <set>

using namespace tsc;
using tsc::testing::lane;
using tsc::testing::minimal_network_json;
using json = nlohmann::json;

namespace {

std::set<std::size_t> as_set(const std::vector<std::size_t> &v) { return {v.begin(), v.end()}; }

} // namespace

TEST_CASE("minimal single-intersection file parses with four phases") {
    const RoadNet net = parse_roadnet(minimal_network_json().dump());
    REQUIRE(net.intersections().size() == 1);
    CHECK(net.lanes().size() == 12);
    CHECK(net.intersection(0).phases.size() == 4);
    CHECK(net.intersection(0).incoming_lanes.size() == 12);
    CHECK(net.boundary_entries().size() == 12);
}

TEST_CASE("dangling downstream reference is rejected") {
    json doc = minimal_network_json();
    doc["lanes"][1]["downstream"] = "nowhere_0";
    CHECK_THROWS_WITH_AS(parse_roadnet(doc.dump()), doctest::Contains("unknown id 'nowhere_0'"), ValidationError);
}

TEST_CASE("phase naming a movement that does not exist is rejected") {
    json doc = minimal_network_json();
    doc["intersections"][0]["phases"][0][0] = json::array({"in_n_1", "in_e_0"});
    CHECK_THROWS_WITH_AS(parse_roadnet(doc.dump()), doctest::Contains("unknown movement"), ValidationError);
}

TEST_CASE("malformed text reports a byte position") {
    const std::string text = "{\"intersections\": [ }";
    try {
        parse_roadnet(text);
        FAIL("expected a syntax error");
    } catch (const SyntaxError &e) {
        CHECK(e.position() > 0);
        CHECK(e.position() <= text.size());
    }
}

TEST_CASE("structural invariants are enforced") {
    SUBCASE("right turn inside a phase") {
        json doc = minimal_network_json();
        doc["intersections"][0]["phases"][0].push_back(json::array({"in_n_2", nullptr}));
        CHECK_THROWS_AS(parse_roadnet(doc.dump()), ValidationError);
    }
    SUBCASE("duplicate phase") {
        json doc = minimal_network_json();
        doc["intersections"][0]["phases"].push_back(doc["intersections"][0]["phases"][0]);
        CHECK_THROWS_WITH_AS(parse_roadnet(doc.dump()), doctest::Contains("duplicates"), ValidationError);
    }
    SUBCASE("uncovered non-right movement") {
        json doc = minimal_network_json();
        doc["intersections"][0]["phases"].erase(3);
        CHECK_THROWS_AS(parse_roadnet(doc.dump()), ValidationError);
    }
    SUBCASE("non-positive length") {
        json doc = minimal_network_json();
        doc["lanes"][0]["length_m"] = 0;
        CHECK_THROWS_WITH_AS(parse_roadnet(doc.dump()), doctest::Contains("length_m"), ValidationError);
    }
    SUBCASE("unknown turn") {
        json doc = minimal_network_json();
        doc["lanes"][0]["turn"] = "u-turn";
        CHECK_THROWS_AS(parse_roadnet(doc.dump()), ValidationError);
    }
    SUBCASE("duplicate lane id") {
        json doc = minimal_network_json();
        doc["lanes"].push_back(doc["lanes"][0]);
        CHECK_THROWS_WITH_AS(parse_roadnet(doc.dump()), doctest::Contains("duplicate lane"), ValidationError);
    }
    SUBCASE("two disconnected intersections") {
        json a = minimal_network_json(), b = minimal_network_json();
        for (auto &l : b["lanes"]) {
            l["id"] = "b" + l["id"].get<std::string>();
            l["road"] = "b" + l["road"].get<std::string>();
        }
        for (auto &r : b["roads"]) {
            r["id"] = "b" + r["id"].get<std::string>();
            r["to"] = "J";
            for (auto &l : r["lanes"])
                l = "b" + l.get<std::string>();
        }
        json j = b["intersections"][0];
        j["id"] = "J";
        for (auto &r : j["incoming_roads"])
            r = "b" + r.get<std::string>();
        for (auto &p : j["phases"])
            for (auto &m : p)
                m[0] = "b" + m[0].get<std::string>();
        a["intersections"].push_back(j);
        for (auto &x : b["roads"])
            a["roads"].push_back(x);
        for (auto &x : b["lanes"])
            a["lanes"].push_back(x);
        CHECK_THROWS_WITH_AS(parse_roadnet(a.dump()), doctest::Contains("not connected"), ValidationError);
    }
}

TEST_CASE("generate_grid geometry") {
    SUBCASE("3x4 with 400 m east-west and 800 m north-south roads") {
        const RoadNet net = generate_grid(3, 4, 400, 800, 4);
        REQUIRE(net.intersections().size() == 12);
        for (const auto &in : net.intersections()) {
            CHECK(in.incoming_lanes.size() == 12);
            CHECK(in.phases.size() == 4);
        }
        const Lane &ew = net.lane(lane(net, "R_0_0_E_1"));
        const Lane &ns = net.lane(lane(net, "R_0_0_S_1"));
        CHECK(ew.length_m == 400.0);
        CHECK(ns.length_m == 800.0);
    }
    SUBCASE("single intersection with eight phases") {
        const RoadNet net = generate_grid(1, 1, 300, 300, 8);
        REQUIRE(net.intersections().size() == 1);
        CHECK(net.intersection(0).phases.size() == 8);
    }
    SUBCASE("2x2 has eight internal road connections") {
        const RoadNet net = generate_grid(2, 2, 100, 100, 4);
        CHECK(net.intersections().size() == 4);
        std::size_t internal = 0;
        for (const auto &r : net.roads())
            internal += (r.from && r.to) ? 1 : 0;
        // Adjacent pairs on a 2x2 lattice: 2 horizontal + 2 vertical, two directions each.
        CHECK(internal == 8);
        for (const auto &in : net.intersections())
            CHECK(in.neighbors.size() == 2);
    }
    SUBCASE("every road has left, straight and right lanes") {
        const RoadNet net = generate_grid(2, 3, 250, 350, 4);
        for (const auto &r : net.roads()) {
            REQUIRE(r.lanes.size() == 3);
            CHECK(net.lane(r.lanes[0]).turn == Turn::left);
            CHECK(net.lane(r.lanes[1]).turn == Turn::straight);
            CHECK(net.lane(r.lanes[2]).turn == Turn::right);
        }
    }
    SUBCASE("argument errors") {
        CHECK_THROWS_AS(generate_grid(1, 1, 300, 300, 6), ValidationError);
        CHECK_THROWS_AS(generate_grid(0, 1, 300, 300, 4), ValidationError);
        CHECK_THROWS_AS(generate_grid(1, 1, -5, 300, 4), ValidationError);
    }
}

TEST_CASE("grid generation is bit-deterministic and round-trips") {
    const RoadNet a = generate_grid(3, 4, 400, 800, 4);
    const RoadNet b = generate_grid(3, 4, 400, 800, 4);
    CHECK(serialize_roadnet(a) == serialize_roadnet(b));
    const RoadNet back = parse_roadnet(serialize_roadnet(a));
    CHECK(back == a);
    CHECK(serialize_roadnet(back) == serialize_roadnet(a));

    const RoadNet eight = generate_grid(2, 2, 150, 250, 8);
    CHECK(parse_roadnet(serialize_roadnet(eight)) == eight);
}

TEST_CASE("phase_lanes on a 4-phase intersection") {
    const RoadNet net = generate_grid(1, 1, 300, 300, 4);
    const Intersection &in = net.intersection(0);

    // Phase C: straight lanes arriving from the east (heading west) and from the west (heading east).
    CHECK(as_set(phase_lanes(in, 2)) == std::set<std::size_t>{lane(net, "B_0_0_W_1"), lane(net, "B_0_0_E_1")});
    CHECK(as_set(phase_lanes(in, 0)) == std::set<std::size_t>{lane(net, "B_0_0_S_1"), lane(net, "B_0_0_N_1")});

    std::set<std::size_t> all;
    for (std::size_t d = 0; d < 4; ++d)
        for (std::size_t l : phase_lanes(in, d)) {
            CHECK(net.lane(l).turn != Turn::right);
            CHECK(all.insert(l).second); // disjoint
        }
    std::set<std::size_t> non_right;
    for (std::size_t l : in.incoming_lanes)
        if (net.lane(l).turn != Turn::right)
            non_right.insert(l);
    CHECK(non_right.size() == 8);
    CHECK(all == non_right);

    CHECK_THROWS_AS(phase_lanes(in, 4), std::out_of_range);
}

TEST_CASE("every non-right incoming lane sits in exactly one 4-phase entry") {
    const RoadNet net = generate_grid(3, 4, 400, 800, 4);
    for (const auto &in : net.intersections()) {
        std::map<std::size_t, int> seen;
        for (std::size_t d = 0; d < in.phases.size(); ++d)
            for (std::size_t l : phase_lanes(in, d))
                ++seen[l];
        for (std::size_t l : in.incoming_lanes) {
            if (net.lane(l).turn == Turn::right)
                CHECK(seen.count(l) == 0);
            else
                CHECK(seen[l] == 1);
        }
    }
}

TEST_CASE("eight-phase table adds single-approach phases") {
    const RoadNet net = generate_grid(1, 1, 300, 300, 8);
    const Intersection &in = net.intersection(0);
    // Phase 4 serves the north approach (vehicles heading south): through and left.
    CHECK(as_set(phase_lanes(in, 4)) == std::set<std::size_t>{lane(net, "B_0_0_S_0"), lane(net, "B_0_0_S_1")});
    for (std::size_t d = 4; d < 8; ++d)
        CHECK(phase_lanes(in, d).size() == 2);
}

TEST_CASE("no lane is both incoming and outgoing at one intersection") {
    const RoadNet net = generate_grid(3, 3, 200, 200, 4);
    for (const auto &in : net.intersections()) {
        std::set<std::size_t> incoming(in.incoming_lanes.begin(), in.incoming_lanes.end());
        for (std::size_t l : in.outgoing_lanes)
            CHECK(incoming.count(l) == 0);
    }
}
