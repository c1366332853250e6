#include "tsc/netmodel.h"

#include "json_util.h"

namespace tsc {

using detail::json;

RoadNet parse_roadnet(std::string_view text) {
    json doc = detail::parse_json(text, "network file");
    if (!doc.is_object())
        throw ValidationError("network file: top level must be an object");

    NetDescription desc;
    const json &inters = detail::get_array(doc, "intersections", "$");
    for (std::size_t i = 0; i < inters.size(); ++i) {
        const std::string path = "$.intersections[" + std::to_string(i) + "]";
        const json &j = inters[i];
        NetDescription::IntersectionDesc id;
        id.id = detail::get_string(j, "id", path);
        const json &in = detail::get_array(j, "incoming_roads", path);
        for (std::size_t k = 0; k < in.size(); ++k)
            id.incoming_roads.push_back(detail::element_string(in[k], path + ".incoming_roads[" + std::to_string(k) + "]"));
        const json &out = detail::get_array(j, "outgoing_roads", path);
        for (std::size_t k = 0; k < out.size(); ++k)
            id.outgoing_roads.push_back(detail::element_string(out[k], path + ".outgoing_roads[" + std::to_string(k) + "]"));
        const json &phases = detail::get_array(j, "phases", path);
        for (std::size_t p = 0; p < phases.size(); ++p) {
            const std::string ppath = path + ".phases[" + std::to_string(p) + "]";
            if (!phases[p].is_array())
                throw ValidationError(ppath + ": expected an array of [from_lane, to_lane] pairs");
            NetDescription::PhaseDesc pd;
            for (std::size_t m = 0; m < phases[p].size(); ++m) {
                const json &pair = phases[p][m];
                const std::string mpath = ppath + "[" + std::to_string(m) + "]";
                if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() ||
                    !(pair[1].is_string() || pair[1].is_null()))
                    throw ValidationError(mpath + ": expected [from_lane, to_lane or null]");
                pd.emplace_back(pair[0].get<std::string>(),
                                pair[1].is_null() ? std::nullopt : std::optional<std::string>(pair[1].get<std::string>()));
            }
            id.phases.push_back(std::move(pd));
        }
        desc.intersections.push_back(std::move(id));
    }

    const json &roads = detail::get_array(doc, "roads", "$");
    for (std::size_t r = 0; r < roads.size(); ++r) {
        const std::string path = "$.roads[" + std::to_string(r) + "]";
        NetDescription::RoadDesc rd;
        rd.id = detail::get_string(roads[r], "id", path);
        rd.from = detail::get_optional_string(roads[r], "from", path);
        rd.to = detail::get_optional_string(roads[r], "to", path);
        const json &lanes = detail::get_array(roads[r], "lanes", path);
        for (std::size_t k = 0; k < lanes.size(); ++k)
            rd.lanes.push_back(detail::element_string(lanes[k], path + ".lanes[" + std::to_string(k) + "]"));
        desc.roads.push_back(std::move(rd));
    }

    const json &lanes = detail::get_array(doc, "lanes", "$");
    for (std::size_t l = 0; l < lanes.size(); ++l) {
        const std::string path = "$.lanes[" + std::to_string(l) + "]";
        NetDescription::LaneDesc ld;
        ld.id = detail::get_string(lanes[l], "id", path);
        ld.road = detail::get_string(lanes[l], "road", path);
        ld.length_m = detail::get_number(lanes[l], "length_m", path);
        ld.speed_mps = detail::get_number(lanes[l], "speed_mps", path);
        try {
            ld.turn = parse_turn(detail::get_string(lanes[l], "turn", path));
        } catch (const ValidationError &e) {
            throw ValidationError(path + ".turn: " + e.what());
        }
        ld.downstream = detail::get_optional_string(lanes[l], "downstream", path);
        desc.lanes.push_back(std::move(ld));
    }
    return RoadNet::build(desc);
}

std::string serialize_roadnet(const RoadNet &net) {
    using ojson = nlohmann::ordered_json;
    const NetDescription d = net.describe();
    ojson doc;
    doc["intersections"] = ojson::array();
    for (const auto &id : d.intersections) {
        ojson j;
        j["id"] = id.id;
        j["incoming_roads"] = id.incoming_roads;
        j["outgoing_roads"] = id.outgoing_roads;
        j["phases"] = ojson::array();
        for (const auto &phase : id.phases) {
            ojson pj = ojson::array();
            for (const auto &[from, to] : phase)
                pj.push_back(ojson::array({ojson(from), to ? ojson(*to) : ojson(nullptr)}));
            j["phases"].push_back(std::move(pj));
        }
        doc["intersections"].push_back(std::move(j));
    }
    doc["roads"] = ojson::array();
    for (const auto &rd : d.roads) {
        ojson j;
        j["id"] = rd.id;
        j["from"] = rd.from ? ojson(*rd.from) : ojson(nullptr);
        j["to"] = rd.to ? ojson(*rd.to) : ojson(nullptr);
        j["lanes"] = rd.lanes;
        doc["roads"].push_back(std::move(j));
    }
    doc["lanes"] = ojson::array();
    for (const auto &ld : d.lanes) {
        ojson j;
        j["id"] = ld.id;
        j["road"] = ld.road;
        j["length_m"] = ld.length_m;
        j["speed_mps"] = ld.speed_mps;
        j["turn"] = std::string(to_string(ld.turn));
        j["downstream"] = ld.downstream ? ojson(*ld.downstream) : ojson(nullptr);
        doc["lanes"].push_back(std::move(j));
    }
    return doc.dump(2) + "\n";
}

} // namespace tsc
