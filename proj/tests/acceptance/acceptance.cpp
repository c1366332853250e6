// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.

#include "gradcheck.h"
#include "helpers.h"
#include "tsc/checkpoint.h"
#include "tsc/cli.h"
#include "tsc/control.h"
#include "tsc/rl.h"
#include "tsc/sim.h"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

using namespace tsc;
using namespace tsc::testing;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

Demand scenario(const RoadNet &net, double rate, std::uint64_t seed) {
    return synth_demand(net, {{3600, rate}}, derive_seed(seed, seed_stream::demand));
}

double travel_time(const RoadNet &net, const Demand &d, Controller &c) {
    return run_episode(net, d, c, SimConfig{}).avg_travel_time_s;
}

double mean(const std::vector<double> &v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

// Counts decision ticks where the two queue-based rules disagree; acts on M-QL's choice.
class ComparingController : public Controller {
public:
    std::size_t decisions = 0, mismatches = 0;
    std::string name() const override { return "compare"; }
    ControllerDecision decide(const TrafficView &view) override {
        ControllerDecision out(view.net.intersections().size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = max_queue_decide(view, i);
            mismatches += out[i] != max_pressure_decide(view, i) ? 1 : 0;
            ++decisions;
        }
        return out;
    }
};

Verdict ac1() {
    const RoadNet net = generate_grid(1, 1, 300, 300, 4);
    ComparingController c;
    for (std::uint64_t seed = 1; seed <= 20; ++seed)
        run_episode(net, scenario(net, 20.0 + 10.0 * static_cast<double>(seed % 8), seed), c, SimConfig{});
    return {c.mismatches == 0 && c.decisions == 20 * 240,
            std::to_string(c.mismatches) + " mismatches in " + std::to_string(c.decisions) +
                " decisions over 20 seeded demands (1x1 grid)"};
}

Verdict ac2() {
    const RoadNet net = generate_grid(3, 4, 400, 800, 4);
    std::vector<double> ft, mql;
    double worst = 1.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Demand d = scenario(net, 60, seed);
        FixedTimeController f;
        MaxQueueController m;
        ft.push_back(travel_time(net, d, f));
        mql.push_back(travel_time(net, d, m));
        worst = std::min(worst, 1.0 - mql.back() / ft.back());
    }
    const double gain = 1.0 - mean(mql) / mean(ft);
    return {gain >= 0.10, "3x4 grid 400/800 m, 60 veh/100 s: FixedTime " + fmt("%.2f", mean(ft)) + " s, M-QL " +
                              fmt("%.2f", mean(mql)) + " s, reduction " + fmt("%.1f", 100 * gain) +
                              "% (smallest per-seed " + fmt("%.1f", 100 * worst) + "%, need >= 10%)"};
}

struct Trained {
    QNetworkSpec spec;
    std::vector<TrainResult> runs;
    double seconds = 0.0;
};

// One training scenario shared by the learning and transfer criteria.
struct LearningScenario {
    RoadNet net = generate_grid(1, 1, 300, 300, 4);
    Demand demand = scenario(net, 60, 1);
    double fixed_time = 0.0;
    Trained qldqn, attention;
};

Trained train_three(const LearningScenario &s, ModelKind kind) {
    Trained t;
    QNetworkSpec base;
    base.kind = kind;
    t.spec = network_spec(s.net, base);
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t k = 0; k < 3; ++k)
        t.runs.push_back(train_run(s.net, s.demand, t.spec, TrainConfig{}, SimConfig{},
                                   derive_seed(1, seed_stream::repeat_base + k)));
    t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return t;
}

Verdict ac3(LearningScenario &s) {
    FixedTimeController ft;
    s.fixed_time = travel_time(s.net, s.demand, ft);
    s.qldqn = train_three(s, ModelKind::qldqn);
    s.attention = train_three(s, ModelKind::attentionlight);
    bool pass = true;
    std::string detail = "1x1 grid, 60 veh/100 s, 100 episodes, FixedTime " + fmt("%.2f", s.fixed_time) + " s;";
    for (const Trained *t : {&s.qldqn, &s.attention}) {
        detail += " " + std::string(to_string(t->spec.kind)) + " [";
        for (std::size_t k = 0; k < t->runs.size(); ++k) {
            pass = pass && t->runs[k].avg_travel_time_s <= s.fixed_time;
            detail += (k ? " " : "") + fmt("%.2f", t->runs[k].avg_travel_time_s);
        }
        detail += "] in " + fmt("%.0f", t->seconds) + " s;";
        pass = pass && t->seconds < 30 * 60;
    }
    return {pass, detail};
}

Verdict ac4() {
    std::vector<double> advantage;
    std::string detail = "2x2 grid, 60 veh/100 s, mean (MP - M-QL) over 5 seeds:";
    for (double len : {100.0, 600.0}) {
        const RoadNet net = generate_grid(2, 2, len, len, 4);
        std::vector<double> diff;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const Demand d = scenario(net, 60, seed);
            MaxPressureController mp;
            MaxQueueController mql;
            diff.push_back(travel_time(net, d, mp) - travel_time(net, d, mql));
        }
        advantage.push_back(mean(diff));
        detail += " " + fmt("%.0f", len) + " m " + fmt("%+.3f", advantage.back()) + " s";
    }
    const bool flips = advantage[0] <= 0.0 && advantage[1] > 0.0;
    return {flips || advantage[1] > advantage[0], detail};
}

Verdict ac5() {
    double worst = 0.0;
    std::size_t checks = 0;
    std::string worst_op;
    for (const auto &c : autodiff_op_cases()) {
        Rng rng(c.seed);
        for (int instance = 0; instance < 10; ++instance, ++checks) {
            const double err = gradient_error(c.build, c.make(rng), rng);
            if (err > worst) {
                worst = err;
                worst_op = c.name;
            }
        }
    }
    return {worst < 1e-4, std::to_string(checks) + " instances over " + std::to_string(checks / 10) +
                              " ops, largest relative error " + fmt("%.2e", worst) + " (" + worst_op + ")"};
}

Verdict ac6() {
    const RoadNet net = generate_grid(2, 2, 200, 300, 8);
    const Demand none;
    Rng rng(2024);
    std::size_t integer_mismatch = 0;
    double real_error = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        SimState s = initial_state(net, none);
        randomize_queues(s, rng, 15);
        SimConfig cfg;
        TrafficView view{net, s, cfg};
        for (std::size_t i = 0; i < net.intersections().size(); ++i) {
            const Intersection &in = net.intersection(i);
            int total = 0;
            for (std::size_t l : in.incoming_lanes)
                total += static_cast<int>(s.lanes[l].queue.size());
            integer_mismatch += intersection_queue_length(s, net, i) != total;
            integer_mismatch += reward(s, net, i, RewardKind::queue) != -total;
            int best = -1;
            std::size_t arg = 0;
            for (std::size_t d = 0; d < in.phases.size(); ++d) {
                int q = 0;
                for (const auto &m : in.phases[d].movements)
                    q += static_cast<int>(s.lanes[m.from_lane].queue.size());
                integer_mismatch += phase_queue_length(s, net, i, d) != q;
                if (q > best) {
                    best = q;
                    arg = d;
                }
            }
            integer_mismatch += max_queue_decide(view, i) != arg;
        }
        // Bellman target and transferability on random reals.
        std::vector<double> online(5), target(5);
        for (std::size_t k = 0; k < 5; ++k) {
            online[k] = 20 * rng.uniform01() - 10;
            target[k] = 20 * rng.uniform01() - 10;
        }
        const double r = -30 * rng.uniform01(), gamma = rng.uniform01() * 0.99;
        std::size_t a = 0;
        for (std::size_t k = 1; k < 5; ++k)
            a = online[k] > online[a] ? k : a;
        real_error = std::max(real_error, std::abs(bellman_target(r, gamma, online, target) - (r + gamma * target[a])));
        const double top = *std::max_element(target.begin(), target.end());
        real_error = std::max(real_error, std::abs(bellman_target(r, gamma, target, target) - (r + gamma * top)));
        const double t1 = 50 + 400 * rng.uniform01(), t2 = 50 + 400 * rng.uniform01();
        real_error = std::max(real_error, std::abs(transferability(t1, t2) - (t2 - t1) / t1));
    }
    return {integer_mismatch == 0 && real_error < 1e-12,
            "1000 random states on a 2x2 8-phase grid: " + std::to_string(integer_mismatch) +
                " integer mismatches (phase/intersection queue, argmax, reward), largest real error " +
                fmt("%.1e", real_error) + " (Bellman target, transferability)"};
}

Verdict ac7() {
    const RoadNet net = generate_grid(3, 4, 400, 800, 4);
    const Demand d = scenario(net, 80, 7);
    const QNetworkSpec spec = network_spec(net, QNetworkSpec{});
    ad::ParamStore params;
    init_params(spec, params, 3);
    std::size_t ticks = 0, violations = 0, hash_mismatch = 0, episodes = 0;
    auto trace = [&](Controller &c) {
        std::vector<std::uint64_t> hashes;
        EpisodeHooks hooks;
        hooks.after_tick = [&](const SimState &s) {
            std::size_t inside = 0;
            for (const auto &l : s.lanes)
                inside += l.moving.size() + l.queue.size();
            violations += s.entered != s.exited + inside;
            hashes.push_back(state_hash(s));
            ++ticks;
        };
        run_episode(net, d, c, SimConfig{}, hooks);
        ++episodes;
        return hashes;
    };
    using Factory = std::function<std::unique_ptr<Controller>()>;
    const std::vector<Factory> makers{
        [] { return make_classical_controller("fixedtime"); }, [] { return make_classical_controller("mql"); },
        [] { return make_classical_controller("maxpressure"); },
        [&] { return std::make_unique<QController>(spec, params, 0.0, 1); },
        [&] { return std::make_unique<QController>(spec, params, 0.3, 1); }};
    for (const auto &make : makers) {
        auto a = make(), b = make();
        hash_mismatch += trace(*a) != trace(*b);
    }
    return {violations == 0 && hash_mismatch == 0,
            std::to_string(episodes) + " episodes, " + std::to_string(ticks) + " ticks: " + std::to_string(violations) +
                " conservation violations, " + std::to_string(hash_mismatch) + " rerun hash-trace mismatches"};
}

Verdict ac8() {
    Rng rng(8);
    std::size_t mismatches = 0, values = 0;
    const RoadNet four = generate_grid(1, 1, 300, 300, 4), eight = generate_grid(1, 1, 300, 300, 8);
    for (int trial = 0; trial < 100; ++trial) {
        QNetworkSpec base;
        base.kind = ModelKind::attentionlight;
        base.fusion = trial % 2 ? Fusion::weighted : Fusion::sum;
        const QNetworkSpec spec = network_spec(trial % 3 == 2 ? eight : four, base);
        const std::size_t P = spec.phase_count, L = spec.lane_count;
        ad::ParamStore params;
        init_params(spec, params, rng.next());
        for (auto &slot : params.slots())
            for (auto &v : slot.value.values)
                v += 0.1 * (2 * rng.uniform01() - 1);

        std::vector<std::size_t> perm(P);
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t k = P - 1; k > 0; --k)
            std::swap(perm[k], perm[rng.below(k + 1)]);
        QNetworkSpec permuted = spec;
        ad::ParamStore pparams = params;
        for (std::size_t d = 0; d < P; ++d) {
            permuted.phase_lanes[d] = spec.phase_lanes[perm[d]];
            if (spec.fusion == Fusion::weighted)
                for (std::size_t l = 0; l < L; ++l)
                    pparams.value("fusion_w")[d * L + l] = params.value("fusion_w")[perm[d] * L + l];
        }

        std::vector<EncodedState> states(3), pstates(3);
        for (std::size_t b = 0; b < 3; ++b) {
            states[b].phase_onehot.assign(P, 0.0);
            states[b].phase_onehot[rng.below(P)] = 1.0;
            for (std::size_t l = 0; l < L; ++l)
                states[b].queues.push_back(static_cast<double>(rng.below(12)));
            pstates[b] = states[b];
            for (std::size_t d = 0; d < P; ++d)
                pstates[b].phase_onehot[d] = states[b].phase_onehot[perm[d]];
        }
        const ad::Tensor q = q_values(spec, params, make_batch(states));
        const ad::Tensor qp = q_values(permuted, pparams, make_batch(pstates));
        for (std::size_t b = 0; b < 3; ++b)
            for (std::size_t d = 0; d < P; ++d, ++values)
                mismatches += qp[b * P + d] != q[b * P + perm[d]];
    }
    return {mismatches == 0, "100 (params, input, permutation) triples, " + std::to_string(values) + " Q-values, " +
                                 std::to_string(mismatches) + " not exactly permuted"};
}

std::string slurp(const fs::path &p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Verdict ac9(const LearningScenario &s) {
    bool pass = true;
    std::string detail = "self-transfer |E| on the training demand:";
    for (const Trained *t : {&s.qldqn, &s.attention}) {
        detail += " " + std::string(to_string(t->spec.kind)) + " [";
        for (std::size_t k = 0; k < t->runs.size(); ++k) {
            const TrainResult &r = t->runs[k];
            const Checkpoint ck = decode_checkpoint(encode_checkpoint(encode_model_meta({t->spec, r.avg_travel_time_s}), r.params));
            const ModelMeta meta = decode_model_meta(ck.metadata);
            const double tt = evaluate_greedy(s.net, s.demand, meta.spec, ck.params, SimConfig{}).avg_travel_time_s;
            const double e = transferability(meta.t_train_s, tt);
            pass = pass && std::abs(e) < 0.05;
            detail += (k ? " " : "") + fmt("%.4f", std::abs(e));
        }
        detail += "]";
    }

    // End-to-end 2x2 matrix: checkpoints trained on demands A and B, evaluated on both.
    const fs::path dir = fs::temp_directory_path() / "tsc_acceptance_transfer";
    fs::remove_all(dir);
    std::ostringstream out, err;
    const std::vector<std::string> grid{"--rows", "1", "--cols", "1", "--pattern", "3600:60"};
    auto with_grid = [&](std::vector<std::string> args) {
        args.insert(args.end(), grid.begin(), grid.end());
        return run_cli(args, out, err);
    };
    int code = with_grid({"train", "--model", "qldqn", "--seed", "1", "--out", (dir / "A").string()});
    code = code ? code : with_grid({"train", "--model", "qldqn", "--seed", "2", "--out", (dir / "B").string()});
    code = code ? code
                : with_grid({"transfer", "--checkpoint", (dir / "A/checkpoint.tsck").string(), "--checkpoint",
                             (dir / "B/checkpoint.tsck").string(), "--target-seed", "1", "--target-seed", "2", "--out",
                             (dir / "T").string()});
    if (code != 0)
        return {false, detail + "; cmd_transfer pipeline exited " + std::to_string(code) + ": " + err.str()};
    const auto doc = nlohmann::json::parse(slurp(dir / "T/transfer.json"));
    std::size_t cells = 0;
    double recompute = 0.0;
    for (std::size_t i = 0; i < doc["E"].size(); ++i) {
        const double t_train = doc["rows"][i]["t_train_s"];
        for (std::size_t j = 0; j < doc["E"][i].size(); ++j, ++cells) {
            const double tt = doc["t_transfer_s"][i][j];
            recompute = std::max(recompute, std::abs(doc["E"][i][j].get<double>() - (tt / t_train - 1.0)));
        }
    }
    const bool matrix_ok = cells == 4 && doc["rows"].size() == 2 && recompute < 1e-12;
    fs::remove_all(dir);
    detail += "; cmd_transfer matrix " + std::to_string(doc["rows"].size()) + "x" + std::to_string(doc["columns"].size()) +
              " E = [[" + fmt("%.4f", doc["E"][0][0]) + ", " + fmt("%.4f", doc["E"][0][1]) + "], [" +
              fmt("%.4f", doc["E"][1][0]) + ", " + fmt("%.4f", doc["E"][1][1]) + "]], recomputed within " +
              fmt("%.0e", recompute);
    return {pass && matrix_ok, detail};
}

} // namespace

int main() {
    struct Criterion {
        const char *id;
        const char *title;
        double budget_s;
        std::function<Verdict()> run;
    };
    LearningScenario learning;
    const std::vector<Criterion> criteria{
        {"AC1", "MP and M-QL agree on a single intersection", 60, ac1},
        {"AC2", "M-QL beats FixedTime by >= 10%", 300, ac2},
        {"AC3", "QL-DQN and AttentionLight reach FixedTime or better", 2 * 30 * 60, [&] { return ac3(learning); }},
        {"AC4", "M-QL advantage over MP grows with road length", 300, ac4},
        {"AC5", "autodiff gradients match finite differences", 60, ac5},
        {"AC6", "equations match brute force", 60, ac6},
        {"AC7", "conservation and rerun determinism", 300, ac7},
        {"AC8", "AttentionLight phase-permutation equivariance", 60, ac8},
        {"AC9", "transfer protocol", 600, [&] { return ac9(learning); }},
    };
    std::size_t passed = 0;
    for (const auto &c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception &e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool ok = v.pass && secs < c.budget_s;
        passed += ok ? 1 : 0;
        std::cout << c.id << (ok ? " PASS " : " FAIL ") << c.title << ": " << v.detail << " ["
                  << fmt("%.1f", secs) << " s of " << fmt("%.0f", c.budget_s) << " s]" << std::endl;
    }
    std::cout << passed << "/" << criteria.size() << " criteria passed" << std::endl;
    return passed == criteria.size() ? 0 : 1;
}
