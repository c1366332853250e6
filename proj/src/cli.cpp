#include "tsc/cli.h"

#include "tsc/checkpoint.h"
#include "tsc/control.h"
#include "tsc/error.h"
#include "tsc/rl.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace tsc {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// ---- flag table ----------------------------------------------------------

enum class Kind { integer, count, number, text, texts, counts };

struct Flag {
    const char *name;
    const char *path; // key in the config document, '.'-separated
    Kind kind;
    const char *help;
};

const std::vector<Flag> grid_flags = {
    {"--rows", "network.rows", Kind::count, "grid rows"},
    {"--cols", "network.cols", Kind::count, "grid columns"},
    {"--ew", "network.ew_m", Kind::number, "east-west road length in meters (default 300)"},
    {"--ns", "network.ns_m", Kind::number, "north-south road length in meters (default 300)"},
    {"--phases", "network.phases", Kind::count, "phases per intersection, 4 or 8 (default 4)"},
    {"--speed", "network.speed_mps", Kind::number, "free-flow speed in m/s (default 10)"},
};
const std::vector<Flag> net_file_flags = {{"--net", "network.file", Kind::text, "network file"}};
const std::vector<Flag> demand_flags = {
    {"--flow", "demand.file", Kind::text, "flow file"},
    {"--pattern", "demand.pattern", Kind::text, "synthetic demand, e.g. 1800:50,1800:150 (seconds:vehicles per 100 s)"},
};
const std::vector<Flag> seed_flags = {{"--seed", "seed", Kind::count, "master seed (default 0)"}};
const std::vector<Flag> sim_flags = {
    {"--t-duration", "sim.t_duration_s", Kind::integer, "action interval in seconds (default 15)"},
    {"--yellow", "sim.yellow_s", Kind::integer, "yellow time in seconds (default 3)"},
    {"--all-red", "sim.all_red_s", Kind::integer, "all-red time in seconds (default 2)"},
    {"--episode-s", "sim.episode_s", Kind::integer, "episode length in seconds (default 3600)"},
    {"--saturation", "sim.saturation_veh_per_s_per_lane", Kind::number, "discharge rate per lane (default 0.5)"},
    {"--gap", "sim.vehicle_gap_m", Kind::number, "jam spacing in meters (default 7.5)"},
};
const std::vector<Flag> model_flags = {
    {"--model", "model.kind", Kind::text, "qldqn or attentionlight"},
    {"--hidden", "model.hidden", Kind::count, "hidden width (default 20)"},
    {"--dims", "model.dims", Kind::count, "AttentionLight feature width (default 32)"},
    {"--heads", "model.heads", Kind::count, "attention heads (default 4)"},
    {"--fusion", "model.fusion", Kind::text, "phase fusion: sum or weighted (default sum)"},
};
const std::vector<Flag> train_flags = {
    {"--episodes", "train.episodes", Kind::count, "training episodes (default 100)"},
    {"--gamma", "train.gamma", Kind::number, "discount factor (default 0.8)"},
    {"--lr", "train.lr", Kind::number, "Adam learning rate (default 1e-3)"},
    {"--batch", "train.batch_size", Kind::count, "batch size (default 32)"},
    {"--memory", "train.memory_capacity", Kind::count, "replay capacity (default 10000)"},
    {"--epochs-per-update", "train.epochs_per_update", Kind::count, "train steps per episode (default 100)"},
    {"--target-sync", "train.target_sync_interval", Kind::count, "target sync interval in steps (default 200)"},
    {"--eps-start", "train.epsilon_start", Kind::number, "initial exploration rate (default 0.8)"},
    {"--eps-end", "train.epsilon_end", Kind::number, "final exploration rate (default 0.05)"},
    {"--eps-decay", "train.epsilon_decay", Kind::number, "exploration decay per episode (default 0.95)"},
    {"--reward", "train.reward", Kind::text, "queue or pressure (default queue)"},
    {"--report-window", "train.report_window", Kind::count, "greedy episodes averaged in the report (default 10)"},
};
const std::vector<Flag> repeat_flags = {{"--repeats", "repeats", Kind::count, "independent repeats (default 1)"}};
const std::vector<Flag> controller_flags = {
    {"--controller", "controller", Kind::text, "fixedtime, maxpressure, mql, qldqn or attentionlight"},
    {"--split", "split_s", Kind::integer, "FixedTime green split in seconds (default 30)"},
};
const std::vector<Flag> checkpoint_flags = {{"--checkpoint", "checkpoint", Kind::text, "checkpoint file"}};
const std::vector<Flag> out_file_flags = {{"--out", "output", Kind::text, "output file (default stdout)"}};
const std::vector<Flag> out_dir_flags = {{"--out", "output", Kind::text, "output directory (default .)"}};
const std::vector<Flag> transfer_flags = {
    {"--checkpoint", "checkpoints", Kind::texts, "trained checkpoint (repeatable; one matrix row each)"},
    {"--target-flow", "target_flows", Kind::texts, "target scenario flow file (repeatable)"},
    {"--target-seed", "target_seeds", Kind::counts, "target scenario: --pattern demand under this seed (repeatable)"},
};

// Sections whose keys are checked individually.
const std::set<std::string> sections = {"network", "demand", "sim", "model", "train"};

json::json_pointer pointer(const std::string &path) {
    std::string p = "/" + path;
    for (char &c : p)
        if (c == '.')
            c = '/';
    return json::json_pointer(p);
}

// ---- config access -------------------------------------------------------

class Config {
public:
    explicit Config(json doc) : doc_(std::move(doc)) {}

    bool has(const std::string &path) const { return doc_.contains(pointer(path)); }
    const json &at(const std::string &path) const { return doc_.at(pointer(path)); }

    std::optional<std::string> text(const std::string &path) const {
        if (!has(path))
            return std::nullopt;
        if (!at(path).is_string())
            throw ConfigError(path, "expected a string");
        return at(path).get<std::string>();
    }
    std::optional<std::uint64_t> count(const std::string &path) const {
        if (!has(path))
            return std::nullopt;
        const json &v = at(path);
        if (v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0))
            return v.get<std::uint64_t>();
        throw ConfigError(path, "expected a non-negative integer");
    }
    std::optional<int> integer(const std::string &path) const {
        if (!has(path))
            return std::nullopt;
        const json &v = at(path);
        if (!v.is_number_integer())
            throw ConfigError(path, "expected an integer");
        return static_cast<int>(v.get<std::int64_t>());
    }
    std::optional<double> number(const std::string &path) const {
        if (!has(path))
            return std::nullopt;
        if (!at(path).is_number())
            throw ConfigError(path, "expected a number");
        return at(path).get<double>();
    }
    std::vector<std::string> texts(const std::string &path) const {
        std::vector<std::string> out;
        if (!has(path))
            return out;
        if (!at(path).is_array())
            throw ConfigError(path, "expected a list of strings");
        for (const auto &v : at(path)) {
            if (!v.is_string())
                throw ConfigError(path, "expected a list of strings");
            out.push_back(v.get<std::string>());
        }
        return out;
    }
    std::vector<std::uint64_t> counts(const std::string &path) const {
        std::vector<std::uint64_t> out;
        if (!has(path))
            return out;
        if (!at(path).is_array())
            throw ConfigError(path, "expected a list of non-negative integers");
        for (const auto &v : at(path)) {
            if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0)))
                throw ConfigError(path, "expected a list of non-negative integers");
            out.push_back(v.get<std::uint64_t>());
        }
        return out;
    }

    std::uint64_t seed() const { return count("seed").value_or(0); }
    std::size_t repeats() const {
        const auto r = count("repeats").value_or(1);
        if (r == 0)
            throw ConfigError("repeats", "must be >= 1");
        return static_cast<std::size_t>(r);
    }

private:
    json doc_;
};

std::string read_file(const std::string &path, const std::string &key) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw ConfigError(key, "cannot read '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const fs::path &path, const std::string &content) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw RuntimeAbort("cannot write " + path.string());
    f << content;
    if (!f)
        throw RuntimeAbort("write failed: " + path.string());
}

// Every key of the document must be one of `allowed` (dotted paths).
void check_keys(const json &doc, const std::set<std::string> &allowed) {
    if (!doc.is_object())
        throw ConfigError("config", "expected a JSON object");
    for (const auto &[key, value] : doc.items()) {
        if (sections.count(key)) {
            bool any = false;
            for (const auto &a : allowed)
                any = any || a.rfind(key + ".", 0) == 0;
            if (!any)
                throw ConfigError(key, "unknown key for this command");
            if (!value.is_object())
                throw ConfigError(key, "expected an object");
            for (const auto &[sub, _] : value.items())
                if (!allowed.count(key + "." + sub))
                    throw ConfigError(key + "." + sub, "unknown key");
        } else if (!allowed.count(key)) {
            throw ConfigError(key, "unknown key");
        }
    }
}

// ---- scenario assembly ---------------------------------------------------

RoadNet load_network(const Config &c) {
    const bool grid = c.has("network.rows") || c.has("network.cols") || c.has("network.ew_m") ||
                      c.has("network.ns_m") || c.has("network.phases") || c.has("network.speed_mps");
    if (auto file = c.text("network.file")) {
        if (grid)
            throw ConfigError("network", "give either a network file or grid parameters, not both");
        return parse_roadnet(read_file(*file, "network.file"));
    }
    if (!c.has("network.rows") || !c.has("network.cols"))
        throw ConfigError("network", "no network source (a network file, or grid rows and cols)");
    const auto phases = c.count("network.phases").value_or(4);
    try {
        return generate_grid(*c.count("network.rows"), *c.count("network.cols"), c.number("network.ew_m").value_or(300.0),
                             c.number("network.ns_m").value_or(300.0), static_cast<int>(phases),
                             c.number("network.speed_mps").value_or(10.0));
    } catch (const ValidationError &e) {
        throw ConfigError("network", e.what());
    }
}

std::vector<DemandInterval> parse_pattern(const Config &c) {
    const json &v = c.at("demand.pattern");
    std::vector<DemandInterval> out;
    auto bad = [] { return ConfigError("demand.pattern", "expected seconds:rate pairs, e.g. 1800:50,1800:150"); };
    if (v.is_string()) {
        std::stringstream ss(v.get<std::string>());
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto colon = item.find(':');
            if (colon == std::string::npos)
                throw bad();
            try {
                std::size_t n1 = 0, n2 = 0;
                const std::string a = item.substr(0, colon), b = item.substr(colon + 1);
                DemandInterval iv{std::stod(a, &n1), std::stod(b, &n2)};
                if (n1 != a.size() || n2 != b.size())
                    throw bad();
                out.push_back(iv);
            } catch (const std::logic_error &) {
                throw bad();
            }
        }
    } else if (v.is_array()) {
        for (const auto &p : v) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
                throw bad();
            out.push_back({p[0].get<double>(), p[1].get<double>()});
        }
    } else {
        throw bad();
    }
    if (out.empty())
        throw bad();
    return out;
}

Demand synth_with_seed(const Config &c, const RoadNet &net, std::uint64_t scenario_seed) {
    const auto pattern = parse_pattern(c);
    try {
        return synth_demand(net, pattern, derive_seed(scenario_seed, seed_stream::demand));
    } catch (const ValidationError &e) {
        throw ConfigError("demand.pattern", e.what());
    }
}

Demand load_demand(const Config &c, const RoadNet &net, std::uint64_t scenario_seed) {
    const bool file = c.has("demand.file"), pattern = c.has("demand.pattern");
    if (file && pattern)
        throw ConfigError("demand", "give either a flow file or a pattern, not both");
    if (file)
        return parse_flow(read_file(*c.text("demand.file"), "demand.file"), net);
    if (pattern)
        return synth_with_seed(c, net, scenario_seed);
    throw ConfigError("demand", "no demand source (a flow file or a pattern)");
}

template <typename F> auto prefixed(const std::string &prefix, F &&f) {
    try {
        return f();
    } catch (const ConfigError &e) {
        const std::string what = e.what();
        throw ConfigError(prefix + e.key(), what.substr(e.key().size() + 2));
    }
}

SimConfig load_sim(const Config &c) {
    SimConfig s;
    s.t_duration_s = c.integer("sim.t_duration_s").value_or(s.t_duration_s);
    s.yellow_s = c.integer("sim.yellow_s").value_or(s.yellow_s);
    s.all_red_s = c.integer("sim.all_red_s").value_or(s.all_red_s);
    s.episode_s = c.integer("sim.episode_s").value_or(s.episode_s);
    s.saturation_veh_per_s_per_lane = c.number("sim.saturation_veh_per_s_per_lane").value_or(s.saturation_veh_per_s_per_lane);
    s.vehicle_gap_m = c.number("sim.vehicle_gap_m").value_or(s.vehicle_gap_m);
    prefixed("sim.", [&] { s.validate(); });
    return s;
}

QNetworkSpec load_model(const Config &c, const RoadNet &net, std::optional<ModelKind> kind) {
    QNetworkSpec base;
    if (auto k = c.text("model.kind"))
        try {
            base.kind = parse_model_kind(*k);
        } catch (const ConfigError &e) {
            throw ConfigError("model.kind", e.what());
        }
    else if (kind)
        base.kind = *kind;
    else
        throw ConfigError("model.kind", "missing (qldqn or attentionlight)");
    if (kind && base.kind != *kind)
        throw ConfigError("model.kind", "conflicts with the controller");
    base.hidden = c.count("model.hidden").value_or(base.hidden);
    base.dims = c.count("model.dims").value_or(base.dims);
    base.heads = c.count("model.heads").value_or(base.heads);
    if (auto f = c.text("model.fusion")) {
        try {
            base.fusion = parse_fusion(*f);
        } catch (const ConfigError &e) {
            throw ConfigError("model.fusion", e.what());
        }
    }
    return prefixed("model.", [&] { return network_spec(net, base); });
}

TrainConfig load_train(const Config &c) {
    TrainConfig t;
    t.episodes = c.count("train.episodes").value_or(t.episodes);
    t.gamma = c.number("train.gamma").value_or(t.gamma);
    t.lr = c.number("train.lr").value_or(t.lr);
    t.batch_size = c.count("train.batch_size").value_or(t.batch_size);
    t.memory_capacity = c.count("train.memory_capacity").value_or(t.memory_capacity);
    t.epochs_per_update = c.count("train.epochs_per_update").value_or(t.epochs_per_update);
    t.target_sync_interval = c.count("train.target_sync_interval").value_or(t.target_sync_interval);
    t.epsilon_start = c.number("train.epsilon_start").value_or(t.epsilon_start);
    t.epsilon_end = c.number("train.epsilon_end").value_or(t.epsilon_end);
    t.epsilon_decay = c.number("train.epsilon_decay").value_or(t.epsilon_decay);
    t.report_window = c.count("train.report_window").value_or(t.report_window);
    if (auto r = c.text("train.reward")) {
        if (*r == "queue")
            t.reward = RewardKind::queue;
        else if (*r == "pressure")
            t.reward = RewardKind::pressure;
        else
            throw ConfigError("train.reward", "unknown reward '" + *r + "' (expected queue or pressure)");
    }
    prefixed("train.", [&] { t.validate(); });
    return t;
}

struct LoadedModel {
    ModelMeta meta;
    ad::ParamStore params;
};

LoadedModel load_model_checkpoint(const std::string &path, const std::string &key, const RoadNet &net) {
    Checkpoint ck = [&] {
        try {
            return decode_checkpoint(read_file(path, key));
        } catch (const SyntaxError &e) {
            throw ConfigError(key, "'" + path + "': " + e.what());
        }
    }();
    LoadedModel m{[&] {
                      try {
                          return decode_model_meta(ck.metadata);
                      } catch (const std::runtime_error &e) {
                          throw ConfigError(key, "'" + path + "': " + e.what());
                      }
                  }(),
                  std::move(ck.params)};
    QNetworkSpec expected;
    try {
        expected = network_spec(net, m.meta.spec);
    } catch (const ConfigError &e) {
        throw ConfigError(key, e.what());
    }
    if (!(expected == m.meta.spec))
        throw ConfigError(key, "'" + path + "' was trained on a network with a different phase/lane layout");
    // Parameter names and shapes must be those of the spec.
    ad::ParamStore fresh;
    init_params(m.meta.spec, fresh, 0);
    bool same = fresh.slots().size() == m.params.slots().size();
    for (std::size_t k = 0; same && k < fresh.slots().size(); ++k)
        same = fresh.slots()[k].name == m.params.slots()[k].name &&
               fresh.slots()[k].value.shape == m.params.slots()[k].value.shape;
    if (!same)
        throw ConfigError(key, "'" + path + "' parameters do not match its network spec");
    return m;
}

// ---- outputs -------------------------------------------------------------

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss << std::setprecision(17) << v;
    return ss.str();
}

struct EpisodeResult {
    std::size_t repeat = 0;
    std::uint64_t demand_seed = 0;
    Metrics metrics;
    std::uint64_t state_hash = 0;
};

EpisodeResult run_one(const RoadNet &net, const Demand &demand, Controller &controller, const SimConfig &sim) {
    EpisodeResult r;
    EpisodeHooks hooks;
    hooks.after_tick = [&](const SimState &s) {
        if (s.clock_s == sim.episode_s)
            r.state_hash = state_hash(s);
    };
    r.metrics = run_episode(net, demand, controller, sim, hooks);
    return r;
}

void write_metrics(const fs::path &dir, const std::string &controller, const std::vector<EpisodeResult> &results,
                   ojson extra = ojson::object()) {
    ojson doc;
    doc["controller"] = controller;
    for (auto &[k, v] : extra.items())
        doc[k] = v;
    doc["episodes"] = ojson::array();
    std::string csv = "repeat,demand_seed,avg_travel_time_s,throughput,entered,state_hash\n";
    std::string queue_csv = "repeat,tick,queue\n";
    double sum = 0.0;
    for (const auto &r : results) {
        ojson e;
        e["repeat"] = r.repeat;
        e["demand_seed"] = r.demand_seed;
        e["avg_travel_time_s"] = r.metrics.avg_travel_time_s;
        e["throughput"] = r.metrics.throughput;
        e["entered"] = r.metrics.entered;
        e["state_hash"] = hex64(r.state_hash);
        e["queue_series"] = r.metrics.queue_series;
        doc["episodes"].push_back(std::move(e));
        csv += std::to_string(r.repeat) + "," + std::to_string(r.demand_seed) + "," + fmt(r.metrics.avg_travel_time_s) +
               "," + std::to_string(r.metrics.throughput) + "," + std::to_string(r.metrics.entered) + "," +
               hex64(r.state_hash) + "\n";
        for (std::size_t t = 0; t < r.metrics.queue_series.size(); ++t)
            queue_csv += std::to_string(r.repeat) + "," + std::to_string(t + 1) + "," +
                         std::to_string(r.metrics.queue_series[t]) + "\n";
        sum += r.metrics.avg_travel_time_s;
    }
    doc["mean_avg_travel_time_s"] = results.empty() ? 0.0 : sum / static_cast<double>(results.size());
    write_file(dir / "metrics.json", doc.dump(2) + "\n");
    write_file(dir / "metrics.csv", csv);
    write_file(dir / "queue.csv", queue_csv);
}

// ---- commands ------------------------------------------------------------

int cmd_gen_grid(const Config &c, std::ostream &out) {
    const RoadNet net = load_network(c);
    const std::string text = serialize_roadnet(net);
    if (auto path = c.text("output"))
        write_file(*path, text);
    else
        out << text;
    return exit_code::ok;
}

int cmd_synth_demand(const Config &c, std::ostream &out) {
    const RoadNet net = load_network(c);
    if (!c.has("demand.pattern"))
        throw ConfigError("demand.pattern", "missing");
    const std::string text = serialize_flow(synth_with_seed(c, net, c.seed()), net);
    if (auto path = c.text("output"))
        write_file(*path, text);
    else
        out << text;
    return exit_code::ok;
}

// Demand seed of repeat k: the scenario seed for k = 0, a derived seed after.
std::uint64_t repeat_seed(std::uint64_t master, std::size_t k) {
    return k == 0 ? master : derive_seed(master, seed_stream::repeat_base + k);
}

int cmd_run(const Config &c, std::ostream &out) {
    const RoadNet net = load_network(c);
    const SimConfig sim = load_sim(c);
    const auto name = c.text("controller");
    if (!name)
        throw ConfigError("controller", "missing (fixedtime, maxpressure, mql, qldqn or attentionlight)");
    const bool learned = *name == "qldqn" || *name == "attentionlight";

    std::unique_ptr<Controller> controller;
    std::optional<LoadedModel> model;
    if (learned) {
        if (auto ck = c.text("checkpoint")) {
            model = load_model_checkpoint(*ck, "checkpoint", net);
            if (model->meta.spec.kind != parse_model_kind(*name))
                throw ConfigError("checkpoint", "holds a " + std::string(to_string(model->meta.spec.kind)) +
                                                    " model, not " + *name);
        } else {
            model.emplace();
            model->meta.spec = load_model(c, net, parse_model_kind(*name));
            init_params(model->meta.spec, model->params, derive_seed(c.seed(), seed_stream::init));
        }
        controller = std::make_unique<QController>(model->meta.spec, model->params, 0.0, 0);
    } else {
        if (c.has("checkpoint"))
            throw ConfigError("checkpoint", "only applies to qldqn and attentionlight");
        const int split = c.integer("split_s").value_or(30);
        try {
            controller = make_classical_controller(*name, split);
        } catch (const ConfigError &) {
            throw ConfigError("controller", "unknown controller '" + *name +
                                                "' (fixedtime, maxpressure, mql, qldqn or attentionlight)");
        }
        if (*name == "fixedtime") {
            const std::size_t phases = net.intersection(0).phases.size();
            default_plan(phases, split).validate(phases, sim.t_duration_s);
        }
    }

    std::vector<EpisodeResult> results;
    for (std::size_t k = 0; k < c.repeats(); ++k) {
        const std::uint64_t seed = repeat_seed(c.seed(), k);
        const Demand demand = load_demand(c, net, seed);
        EpisodeResult r = run_one(net, demand, *controller, sim);
        r.repeat = k;
        r.demand_seed = seed;
        results.push_back(std::move(r));
    }
    const fs::path dir = c.text("output").value_or(".");
    write_metrics(dir, *name, results);
    for (const auto &r : results)
        out << *name << " repeat " << r.repeat << ": avg travel time " << std::fixed << std::setprecision(3)
            << r.metrics.avg_travel_time_s << " s, throughput " << r.metrics.throughput << "\n";
    return exit_code::ok;
}

int cmd_train(const Config &c, std::ostream &out) {
    const RoadNet net = load_network(c);
    const SimConfig sim = load_sim(c);
    const QNetworkSpec spec = load_model(c, net, std::nullopt);
    const TrainConfig train = load_train(c);
    const Demand demand = load_demand(c, net, c.seed());
    const fs::path dir = c.text("output").value_or(".");
    const std::size_t repeats = c.repeats();

    ojson report;
    report["model"] = to_string(spec.kind);
    report["episodes"] = train.episodes;
    report["report_window"] = train.report_window;
    report["repeats"] = ojson::array();
    double sum = 0.0;
    for (std::size_t k = 0; k < repeats; ++k) {
        const std::uint64_t seed = derive_seed(c.seed(), seed_stream::repeat_base + k);
        const fs::path rdir = repeats == 1 ? dir : dir / ("repeat_" + std::to_string(k));
        fs::create_directories(rdir);
        std::string log;
        TrainResult result = train_run(net, demand, spec, train, sim, seed, [&](const EpisodeLog &e) {
            ojson row;
            row["episode"] = e.episode;
            row["epsilon"] = e.epsilon;
            row["mean_loss"] = e.mean_loss ? ojson(*e.mean_loss) : ojson(nullptr);
            row["train_steps"] = e.train_steps;
            row["train_avg_travel_time_s"] = e.train_avg_travel_time_s;
            row["train_throughput"] = e.train_throughput;
            row["avg_travel_time_s"] = e.test_avg_travel_time_s;
            row["throughput"] = e.test_throughput;
            log += row.dump() + "\n";
        });
        write_file(rdir / "train_log.jsonl", log);
        const fs::path ck = rdir / "checkpoint.tsck";
        save_checkpoint(ck.string(), encode_model_meta({spec, result.avg_travel_time_s}), result.params);
        ojson r;
        r["repeat"] = k;
        r["seed"] = seed;
        r["avg_travel_time_s"] = result.avg_travel_time_s;
        r["checkpoint"] = ck.lexically_relative(dir).generic_string();
        report["repeats"].push_back(std::move(r));
        sum += result.avg_travel_time_s;
        out << to_string(spec.kind) << " repeat " << k << ": avg travel time " << std::fixed << std::setprecision(3)
            << result.avg_travel_time_s << " s (last " << std::min(train.report_window, train.episodes)
            << " greedy episodes)\n";
    }
    report["mean_avg_travel_time_s"] = sum / static_cast<double>(repeats);
    write_file(dir / "report.json", report.dump(2) + "\n");
    return exit_code::ok;
}

int cmd_eval(const Config &c, std::ostream &out) {
    const RoadNet net = load_network(c);
    const SimConfig sim = load_sim(c);
    const auto path = c.text("checkpoint");
    if (!path)
        throw ConfigError("checkpoint", "missing");
    const LoadedModel model = load_model_checkpoint(*path, "checkpoint", net);
    const Demand demand = load_demand(c, net, c.seed());
    QController greedy(model.meta.spec, model.params, 0.0, 0);
    EpisodeResult r = run_one(net, demand, greedy, sim);
    r.demand_seed = c.seed();
    const double e = transferability(model.meta.t_train_s, r.metrics.avg_travel_time_s);
    ojson extra;
    extra["checkpoint"] = *path;
    extra["t_train_s"] = model.meta.t_train_s;
    extra["transferability"] = e;
    write_metrics(c.text("output").value_or("."), std::string(to_string(model.meta.spec.kind)), {r}, extra);
    out << to_string(model.meta.spec.kind) << ": avg travel time " << std::fixed << std::setprecision(3)
        << r.metrics.avg_travel_time_s << " s, throughput " << r.metrics.throughput << ", E = " << std::setprecision(4)
        << e << "\n";
    return exit_code::ok;
}

int cmd_transfer(const Config &c, std::ostream &out) {
    const RoadNet net = load_network(c);
    const SimConfig sim = load_sim(c);
    const auto checkpoints = c.texts("checkpoints");
    if (checkpoints.empty())
        throw ConfigError("checkpoints", "need at least one checkpoint");
    struct Target {
        std::string label;
        Demand demand;
    };
    std::vector<Target> targets;
    for (const auto &f : c.texts("target_flows"))
        targets.push_back({f, parse_flow(read_file(f, "target_flows"), net)});
    const auto seeds = c.counts("target_seeds");
    if (!seeds.empty() && !c.has("demand.pattern"))
        throw ConfigError("demand.pattern", "target seeds need a demand pattern");
    for (std::uint64_t s : seeds)
        targets.push_back({"seed:" + std::to_string(s), synth_with_seed(c, net, s)});
    if (targets.empty())
        throw ConfigError("targets", "need at least one target flow or target seed");

    std::vector<LoadedModel> models;
    for (const auto &p : checkpoints)
        models.push_back(load_model_checkpoint(p, "checkpoints", net));

    ojson doc;
    doc["rows"] = ojson::array();
    doc["columns"] = ojson::array();
    for (const auto &t : targets)
        doc["columns"].push_back(t.label);
    ojson t_matrix = ojson::array(), e_matrix = ojson::array();
    std::string csv = "checkpoint,t_train_s";
    for (const auto &t : targets)
        csv += ",t_transfer[" + t.label + "],E[" + t.label + "]";
    csv += "\n";
    for (std::size_t i = 0; i < models.size(); ++i) {
        ojson row;
        row["checkpoint"] = checkpoints[i];
        row["model"] = to_string(models[i].meta.spec.kind);
        row["t_train_s"] = models[i].meta.t_train_s;
        doc["rows"].push_back(row);
        ojson trow = ojson::array(), erow = ojson::array();
        csv += checkpoints[i] + "," + fmt(models[i].meta.t_train_s);
        out << checkpoints[i] << " (t_train " << std::fixed << std::setprecision(3) << models[i].meta.t_train_s << " s):";
        for (const auto &t : targets) {
            const double tt = evaluate_greedy(net, t.demand, models[i].meta.spec, models[i].params, sim).avg_travel_time_s;
            const double e = transferability(models[i].meta.t_train_s, tt);
            trow.push_back(tt);
            erow.push_back(e);
            csv += "," + fmt(tt) + "," + fmt(e);
            out << "  " << t.label << " E=" << std::setprecision(4) << e;
        }
        csv += "\n";
        out << "\n";
        t_matrix.push_back(std::move(trow));
        e_matrix.push_back(std::move(erow));
    }
    doc["t_transfer_s"] = std::move(t_matrix);
    doc["E"] = std::move(e_matrix);
    const fs::path dir = c.text("output").value_or(".");
    write_file(dir / "transfer.json", doc.dump(2) + "\n");
    write_file(dir / "transfer.csv", csv);
    return exit_code::ok;
}

// ---- wiring --------------------------------------------------------------

struct Command {
    const char *name;
    const char *help;
    std::vector<const std::vector<Flag> *> groups;
    int (*run)(const Config &, std::ostream &);
};

const std::vector<Command> &commands() {
    static const std::vector<Command> cmds = {
        {"gen-grid", "write a synthetic grid network file", {&grid_flags, &out_file_flags}, cmd_gen_grid},
        {"synth-demand",
         "write a synthetic flow file",
         {&net_file_flags, &grid_flags, &demand_flags, &seed_flags, &out_file_flags},
         cmd_synth_demand},
        {"run",
         "run one controller for one episode (or --repeats demands)",
         {&net_file_flags, &grid_flags, &demand_flags, &seed_flags, &sim_flags, &controller_flags, &checkpoint_flags,
          &model_flags, &repeat_flags, &out_dir_flags},
         cmd_run},
        {"train",
         "train a Q-network agent",
         {&net_file_flags, &grid_flags, &demand_flags, &seed_flags, &sim_flags, &model_flags, &train_flags,
          &repeat_flags, &out_dir_flags},
         cmd_train},
        {"eval",
         "evaluate a checkpoint greedily",
         {&net_file_flags, &grid_flags, &demand_flags, &seed_flags, &sim_flags, &checkpoint_flags, &out_dir_flags},
         cmd_eval},
        {"transfer",
         "evaluate checkpoints on target scenarios and report the transferability matrix",
         {&net_file_flags, &grid_flags, &demand_flags, &sim_flags, &transfer_flags, &out_dir_flags},
         cmd_transfer},
    };
    return cmds;
}

json flag_value(const Flag &f, const std::vector<std::string> &raw) {
    auto fail = [&](const char *what) { return ConfigError(f.name, std::string("expected ") + what); };
    auto one = [&](const std::string &s) -> json {
        try {
            std::size_t n = 0;
            switch (f.kind) {
            case Kind::integer: {
                const long long v = std::stoll(s, &n);
                if (n != s.size())
                    throw fail("an integer");
                return v;
            }
            case Kind::count:
            case Kind::counts: {
                if (s.empty() || s[0] == '-')
                    throw fail("a non-negative integer");
                const unsigned long long v = std::stoull(s, &n);
                if (n != s.size())
                    throw fail("a non-negative integer");
                return v;
            }
            case Kind::number: {
                const double v = std::stod(s, &n);
                if (n != s.size())
                    throw fail("a number");
                return v;
            }
            case Kind::text:
            case Kind::texts:
                return s;
            }
        } catch (const std::logic_error &) {
            throw fail(f.kind == Kind::number ? "a number" : "an integer");
        }
        return s;
    };
    if (f.kind == Kind::texts || f.kind == Kind::counts) {
        json arr = json::array();
        for (const auto &s : raw)
            arr.push_back(one(s));
        return arr;
    }
    return one(raw.back());
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Traffic-signal-control lab: grid networks, synthetic demand, classical and learned controllers",
                 "tsclab"};
    app.require_subcommand(1);
    struct Bound {
        const Flag *flag;
        CLI::Option *option;
        std::vector<std::string> raw;
    };
    std::map<std::string, std::deque<Bound>> bound;
    std::map<std::string, std::string> config_paths;
    std::map<std::string, CLI::App *> subs;
    for (const auto &cmd : commands()) {
        CLI::App *sub = app.add_subcommand(cmd.name, cmd.help);
        subs[cmd.name] = sub;
        sub->add_option("--config", config_paths[cmd.name], "JSON config file (flags override it)");
        auto &list = bound[cmd.name];
        for (const auto *group : cmd.groups)
            for (const Flag &f : *group) {
                list.push_back(Bound{&f, nullptr, {}});
                Bound &b = list.back();
                b.option = sub->add_option(f.name, b.raw, f.help);
                switch (f.kind) {
                case Kind::integer:
                case Kind::count:
                    b.option->type_name("INT");
                    break;
                case Kind::counts:
                    b.option->type_name("INT");
                    break;
                case Kind::number:
                    b.option->type_name("NUM");
                    break;
                case Kind::text:
                    b.option->type_name("TEXT");
                    break;
                case Kind::texts:
                    b.option->type_name("TEXT");
                    break;
                }
                if (f.kind != Kind::texts && f.kind != Kind::counts)
                    b.option->expected(1)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
            }
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return exit_code::ok;
    } catch (const CLI::ParseError &e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return exit_code::ok;
        }
        err << "config error: " << e.what() << "\n";
        return exit_code::config_error;
    }

    const Command *chosen = nullptr;
    for (const auto &cmd : commands())
        if (subs[cmd.name]->parsed())
            chosen = &cmd;

    try {
        std::set<std::string> allowed;
        for (const auto &b : bound[chosen->name])
            allowed.insert(b.flag->path);
        json doc = json::object();
        if (const auto &path = config_paths[chosen->name]; !path.empty()) {
            const std::string text = read_file(path, "--config");
            try {
                doc = json::parse(text);
            } catch (const json::parse_error &e) {
                throw ConfigError("--config", "'" + path + "' is not valid JSON (at byte " + std::to_string(e.byte) + ")");
            }
            check_keys(doc, allowed);
        }
        for (const auto &b : bound[chosen->name])
            if (b.option->count() > 0)
                doc[pointer(b.flag->path)] = flag_value(*b.flag, b.raw);
        return chosen->run(Config(std::move(doc)), out);
    } catch (const ConfigError &e) {
        err << "config error: " << e.what() << "\n";
        return exit_code::config_error;
    } catch (const SyntaxError &e) {
        err << "config error: " << e.what() << "\n";
        return exit_code::config_error;
    } catch (const ValidationError &e) {
        err << "config error: " << e.what() << "\n";
        return exit_code::config_error;
    } catch (const std::exception &e) {
        err << "runtime abort: " << e.what() << "\n";
        return exit_code::runtime_abort;
    }
}

} // namespace tsc
