#include "tsc/rl.h"

#include "json_util.h"
#include "tsc/error.h"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace tsc {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0)
        throw ConfigError("memory_capacity", "must be >= 1");
    items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
        return;
    }
    items_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
}

const Transition &ReplayBuffer::oldest(std::size_t k) const {
    if (k >= items_.size())
        throw std::out_of_range("replay index " + std::to_string(k) + " of " + std::to_string(items_.size()));
    return items_[(head_ + k) % items_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample(std::size_t n, Rng &rng) const {
    const std::size_t size = items_.size();
    if (n > size)
        throw std::invalid_argument("cannot sample " + std::to_string(n) + " of " + std::to_string(size));
    std::vector<std::size_t> out;
    out.reserve(n);
    std::unordered_set<std::size_t> taken;
    for (std::size_t j = size - n; j < size; ++j) {
        const std::size_t k = static_cast<std::size_t>(rng.below(j + 1));
        const std::size_t pick = taken.count(k) ? j : k;
        taken.insert(pick);
        out.push_back(pick);
    }
    return out;
}

double TrainConfig::epsilon_for(std::size_t episode) const {
    return std::max(epsilon_end, epsilon_start * std::pow(epsilon_decay, static_cast<double>(episode)));
}

void TrainConfig::validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw ConfigError("gamma", "must lie in [0, 1)");
    if (!(lr > 0.0))
        throw ConfigError("lr", "must be > 0");
    if (batch_size == 0)
        throw ConfigError("batch_size", "must be >= 1");
    if (memory_capacity < batch_size)
        throw ConfigError("memory_capacity", "must be >= batch_size");
    if (target_sync_interval == 0)
        throw ConfigError("target_sync_interval", "must be >= 1");
    for (auto [key, v] : {std::pair{"epsilon_start", epsilon_start}, std::pair{"epsilon_end", epsilon_end},
                          std::pair{"epsilon_decay", epsilon_decay}})
        if (!(v >= 0.0 && v <= 1.0))
            throw ConfigError(key, "must lie in [0, 1]");
    if (report_window == 0)
        throw ConfigError("report_window", "must be >= 1");
}

std::optional<double> train_step(const ReplayBuffer &buffer, const QNetworkSpec &spec, ad::ParamStore &store,
                                 ad::ParamStore &target, const TrainConfig &config, Rng &sampler) {
    if (buffer.size() < config.batch_size)
        return std::nullopt;
    const std::vector<std::size_t> picks = buffer.sample(config.batch_size, sampler);
    std::vector<const EncodedState *> s, s_next;
    for (std::size_t k : picks) {
        s.push_back(&buffer.at(k).s);
        s_next.push_back(&buffer.at(k).s_next);
    }
    const StateBatch now = make_batch(s), next = make_batch(s_next);
    const ad::Tensor online_next = q_values(spec, store, next);
    const ad::Tensor target_next = q_values(spec, target, next);

    const std::size_t B = picks.size(), P = spec.phase_count;
    ad::Tensor y({B, P}), mask({B, P});
    for (std::size_t b = 0; b < B; ++b) {
        const Transition &tr = buffer.at(picks[b]);
        if (tr.a >= P)
            throw std::invalid_argument("transition action " + std::to_string(tr.a) + " out of range");
        std::span<const double> on(online_next.values.data() + b * P, P), tg(target_next.values.data() + b * P, P);
        y[b * P + tr.a] = bellman_target(tr.r, config.gamma, on, tg);
        mask[b * P + tr.a] = 1.0;
    }

    store.zero_grad();
    ad::Tape t;
    ad::Var q = q_forward(t, spec, store, now);
    ad::Var loss = ad::mse_loss(t, q, y, mask);
    t.backward(loss);
    ad::AdamConfig adam;
    adam.lr = config.lr;
    ad::adam_step(store, adam);
    if (store.adam_steps() % config.target_sync_interval == 0)
        target.copy_values_from(store);
    return t.value(loss)[0];
}

QController::QController(QNetworkSpec spec, const ad::ParamStore &store, double epsilon, std::uint64_t seed)
    : spec_(std::move(spec)), store_(&store), epsilon_(epsilon), seed_(seed) {
    spec_.validate();
}

void QController::begin_episode(const TrafficView &view) {
    const std::size_t n = view.net.intersections().size();
    if (agent_rngs_.size() != n) {
        agent_rngs_.clear();
        for (std::size_t i = 0; i < n; ++i)
            agent_rngs_.emplace_back(derive_seed(seed_, i));
    }
    prev_state_.clear();
    prev_action_.clear();
}

void QController::record(const TrafficView &view, const std::vector<EncodedState> &now) {
    if (!buffer_ || prev_state_.empty())
        return;
    for (std::size_t i = 0; i < now.size(); ++i)
        buffer_->push(Transition{prev_state_[i], prev_action_[i], reward(view.state, view.net, i, reward_), now[i]});
}

ControllerDecision QController::decide(const TrafficView &view) {
    const std::size_t n = view.net.intersections().size();
    if (agent_rngs_.size() != n)
        begin_episode(view);
    std::vector<EncodedState> now;
    now.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        now.push_back(encode_state(observe(view.state, view.net, i)));
    record(view, now);

    const ad::Tensor q = q_values(spec_, *store_, make_batch(now));
    const std::size_t P = spec_.phase_count;
    ControllerDecision decision(n);
    for (std::size_t i = 0; i < n; ++i)
        decision[i] = select_action(std::span<const double>(q.values.data() + i * P, P), epsilon_, agent_rngs_[i]);
    prev_state_ = std::move(now);
    prev_action_ = decision;
    return decision;
}

void QController::end_episode(const TrafficView &view) {
    std::vector<EncodedState> now;
    for (std::size_t i = 0; i < view.net.intersections().size(); ++i)
        now.push_back(encode_state(observe(view.state, view.net, i)));
    record(view, now);
    prev_state_.clear();
    prev_action_.clear();
}

Metrics evaluate_greedy(const RoadNet &net, const Demand &demand, const QNetworkSpec &spec,
                        const ad::ParamStore &store, const SimConfig &sim) {
    QController greedy(spec, store, 0.0, 0);
    return run_episode(net, demand, greedy, sim);
}

TrainResult train_run(const RoadNet &net, const Demand &demand, const QNetworkSpec &spec, const TrainConfig &config,
                      const SimConfig &sim, std::uint64_t seed,
                      const std::function<void(const EpisodeLog &)> &on_episode) {
    config.validate();
    spec.validate();
    sim.validate();

    TrainResult result;
    init_params(spec, result.params, derive_seed(seed, seed_stream::init));
    ad::ParamStore target = result.params;
    ReplayBuffer buffer(config.memory_capacity);
    Rng sampler(derive_seed(seed, seed_stream::sampling));
    QController agents(spec, result.params, config.epsilon_start, derive_seed(seed, seed_stream::exploration));
    agents.record_into(&buffer, config.reward);

    for (std::size_t ep = 0; ep < config.episodes; ++ep) {
        EpisodeLog log;
        log.episode = ep;
        log.epsilon = config.epsilon_for(ep);
        agents.set_epsilon(log.epsilon);
        const Metrics rollout = run_episode(net, demand, agents, sim);
        log.train_avg_travel_time_s = rollout.avg_travel_time_s;
        log.train_throughput = rollout.throughput;

        double loss_sum = 0.0;
        for (std::size_t k = 0; k < config.epochs_per_update; ++k)
            if (auto loss = train_step(buffer, spec, result.params, target, config, sampler)) {
                loss_sum += *loss;
                ++log.train_steps;
            }
        if (log.train_steps > 0)
            log.mean_loss = loss_sum / static_cast<double>(log.train_steps);

        const Metrics test = evaluate_greedy(net, demand, spec, result.params, sim);
        log.test_avg_travel_time_s = test.avg_travel_time_s;
        log.test_throughput = test.throughput;
        result.episodes.push_back(log);
        if (on_episode)
            on_episode(log);
    }

    if (result.episodes.empty()) {
        result.avg_travel_time_s = evaluate_greedy(net, demand, spec, result.params, sim).avg_travel_time_s;
    } else {
        const std::size_t n = std::min(config.report_window, result.episodes.size());
        double sum = 0.0;
        for (std::size_t k = result.episodes.size() - n; k < result.episodes.size(); ++k)
            sum += result.episodes[k].test_avg_travel_time_s;
        result.avg_travel_time_s = sum / static_cast<double>(n);
    }
    return result;
}

std::string encode_model_meta(const ModelMeta &meta) {
    nlohmann::ordered_json j;
    j["format"] = "tsc-qnetwork";
    j["kind"] = to_string(meta.spec.kind);
    j["phase_count"] = meta.spec.phase_count;
    j["lane_count"] = meta.spec.lane_count;
    j["hidden"] = meta.spec.hidden;
    j["dims"] = meta.spec.dims;
    j["heads"] = meta.spec.heads;
    j["fusion"] = to_string(meta.spec.fusion);
    j["phase_lanes"] = meta.spec.phase_lanes;
    j["t_train_s"] = meta.t_train_s;
    return j.dump();
}

ModelMeta decode_model_meta(std::string_view text) {
    using detail::json;
    const json j = detail::parse_json(text, "checkpoint metadata");
    const std::string path = "metadata";
    if (detail::get_string(j, "format", path) != "tsc-qnetwork")
        throw ValidationError("checkpoint metadata: unknown format");
    auto count = [&](const char *key) {
        const json &v = detail::member(j, key, path);
        if (!v.is_number_unsigned())
            throw ValidationError(path + "." + key + ": expected a non-negative integer");
        return v.get<std::size_t>();
    };
    ModelMeta meta;
    meta.spec.kind = parse_model_kind(detail::get_string(j, "kind", path));
    meta.spec.phase_count = count("phase_count");
    meta.spec.lane_count = count("lane_count");
    meta.spec.hidden = count("hidden");
    meta.spec.dims = count("dims");
    meta.spec.heads = count("heads");
    meta.spec.fusion = parse_fusion(detail::get_string(j, "fusion", path));
    try {
        meta.spec.phase_lanes = detail::member(j, "phase_lanes", path).get<std::vector<std::vector<std::size_t>>>();
    } catch (const json::exception &) {
        throw ValidationError(path + ".phase_lanes: expected lists of lane positions");
    }
    meta.t_train_s = detail::get_number(j, "t_train_s", path);
    meta.spec.validate();
    return meta;
}

} // namespace tsc
