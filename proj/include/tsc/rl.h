#pragma once

// Queue-length Q-learning agents: QL-DQN and AttentionLight networks, shared
// replay memory, epsilon-greedy selection and double-DQN training.

#include "tsc/autodiff.h"
#include "tsc/rng.h"
#include "tsc/sim.h"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tsc {

struct EncodedState {
    std::vector<double> phase_onehot;
    std::vector<double> queues; // raw counts, incoming-lane order

    bool operator==(const EncodedState &) const = default;
};

EncodedState encode_state(const Observation &obs);

enum class ModelKind { qldqn, attentionlight };
enum class Fusion { sum, weighted };

std::string_view to_string(ModelKind kind);
std::string_view to_string(Fusion fusion);
// Throw ConfigError("model") / ConfigError("fusion").
ModelKind parse_model_kind(std::string_view text);
Fusion parse_fusion(std::string_view text);

struct QNetworkSpec {
    ModelKind kind = ModelKind::qldqn;
    std::size_t phase_count = 4;
    std::size_t lane_count = 12;
    std::size_t hidden = 20; // QL-DQN hidden layer; width of AttentionLight's Q head
    std::size_t dims = 32;   // AttentionLight phase-feature width (queue and signal embeddings get dims/2 each)
    std::size_t heads = 4;
    Fusion fusion = Fusion::sum;
    // For each phase, positions (into the incoming-lane order) of its lanes.
    std::vector<std::vector<std::size_t>> phase_lanes;

    // Throws ConfigError naming the offending field.
    void validate() const;
    bool operator==(const QNetworkSpec &) const = default;
};

// Copies `base` and fills phase_count, lane_count and phase_lanes from `net`.
// Parameter sharing needs every intersection to have the same layout;
// otherwise ConfigError("network").
QNetworkSpec network_spec(const RoadNet &net, QNetworkSpec base);

// Glorot-uniform weights, zero biases (fusion weights start at 1).
void init_params(const QNetworkSpec &spec, ad::ParamStore &store, std::uint64_t seed);

struct StateBatch {
    ad::Tensor onehot; // [B, P]
    ad::Tensor queues; // [B, L]

    std::size_t size() const { return onehot.shape.empty() ? 0 : onehot.shape[0]; }
};

StateBatch make_batch(const std::vector<const EncodedState *> &states);
StateBatch make_batch(const std::vector<EncodedState> &states);

// concat(onehot, queues) -> dense(hidden, relu) -> dense(P). Output [B, P].
ad::Var qldqn_forward(ad::Tape &t, const QNetworkSpec &spec, ad::ParamStore &store, const StateBatch &batch);
// Lane embeddings -> phase fusion -> self-attention over phases -> shared
// three-layer head. Output [B, P]. If `attention` is given it receives the
// per-head attention matrices.
ad::Var attentionlight_forward(ad::Tape &t, const QNetworkSpec &spec, ad::ParamStore &store,
                               const StateBatch &batch, std::vector<ad::Tensor> *attention = nullptr);
ad::Var q_forward(ad::Tape &t, const QNetworkSpec &spec, ad::ParamStore &store, const StateBatch &batch);
// Inference without gradient bookkeeping; same values as q_forward.
ad::Tensor q_values(const QNetworkSpec &spec, const ad::ParamStore &store, const StateBatch &batch);

// With probability epsilon a uniform phase, else argmax (lowest index on ties).
std::size_t select_action(std::span<const double> q, double epsilon, Rng &rng);
std::size_t argmax(std::span<const double> q);

// r + gamma * target_next[argmax online_next].
double bellman_target(double r, double gamma, std::span<const double> online_next,
                      std::span<const double> target_next);

struct Transition {
    EncodedState s;
    std::size_t a = 0;
    double r = 0.0;
    EncodedState s_next;
};

// Fixed-capacity ring; the oldest transition is overwritten first.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Transition t);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    // Storage slot, not age order.
    const Transition &at(std::size_t slot) const { return items_.at(slot); }
    // Oldest first.
    const Transition &oldest(std::size_t k) const;

    // `n` distinct slots drawn uniformly (Floyd's algorithm), in draw order.
    std::vector<std::size_t> sample(std::size_t n, Rng &rng) const;

private:
    std::size_t capacity_;
    std::size_t head_ = 0; // next slot to overwrite once full
    std::vector<Transition> items_;
};

struct TrainConfig {
    double gamma = 0.8;
    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t memory_capacity = 10000;
    std::size_t epochs_per_update = 100; // train steps after each training episode
    std::size_t target_sync_interval = 200;
    double epsilon_start = 0.8;
    double epsilon_end = 0.05;
    double epsilon_decay = 0.95; // per episode
    std::size_t episodes = 100;
    std::size_t report_window = 10; // greedy test episodes averaged for the final report
    RewardKind reward = RewardKind::queue;

    double epsilon_for(std::size_t episode) const;
    // Throws ConfigError naming the offending field.
    void validate() const;
};

// One double-DQN regression step on a uniformly sampled batch: masked MSE
// between Q(s)[a] and the Bellman target, then one Adam step on `store`.
// `target` is hard-synced from `store` whenever the store's Adam step count
// reaches a multiple of target_sync_interval. Returns nullopt (and changes
// nothing) while the buffer holds fewer than batch_size transitions.
std::optional<double> train_step(const ReplayBuffer &buffer, const QNetworkSpec &spec, ad::ParamStore &store,
                                 ad::ParamStore &target, const TrainConfig &config, Rng &sampler);

// Epsilon-greedy agents, one per intersection, all reading one shared store.
// When a replay buffer is attached, each decision after the first pushes the
// transition it completes (reward measured now); end_episode pushes the last.
class QController : public Controller {
public:
    QController(QNetworkSpec spec, const ad::ParamStore &store, double epsilon, std::uint64_t seed);

    std::string name() const override { return std::string(to_string(spec_.kind)); }
    void begin_episode(const TrafficView &view) override;
    ControllerDecision decide(const TrafficView &view) override;
    void end_episode(const TrafficView &view) override;

    void set_epsilon(double epsilon) { epsilon_ = epsilon; }
    void record_into(ReplayBuffer *buffer, RewardKind reward) {
        buffer_ = buffer;
        reward_ = reward;
    }
    const ad::ParamStore *store() const { return store_; }

private:
    void record(const TrafficView &view, const std::vector<EncodedState> &now);

    QNetworkSpec spec_;
    const ad::ParamStore *store_;
    double epsilon_;
    std::uint64_t seed_;
    std::vector<Rng> agent_rngs_;
    ReplayBuffer *buffer_ = nullptr;
    RewardKind reward_ = RewardKind::queue;
    std::vector<EncodedState> prev_state_;
    ControllerDecision prev_action_;
};

Metrics evaluate_greedy(const RoadNet &net, const Demand &demand, const QNetworkSpec &spec,
                        const ad::ParamStore &store, const SimConfig &sim);

struct EpisodeLog {
    std::size_t episode = 0;
    double epsilon = 0.0;
    std::optional<double> mean_loss;
    std::size_t train_steps = 0;
    double train_avg_travel_time_s = 0.0;
    std::size_t train_throughput = 0;
    double test_avg_travel_time_s = 0.0;
    std::size_t test_throughput = 0;
};

struct TrainResult {
    ad::ParamStore params;
    std::vector<EpisodeLog> episodes;
    // Mean of the last report_window greedy test episodes (the greedy
    // evaluation of the initial parameters when no episode was trained).
    double avg_travel_time_s = 0.0;
};

// Each episode: one epsilon-greedy rollout feeding the shared buffer, then
// epochs_per_update train steps, then one greedy test rollout.
// Seeds: init, exploration and sampling streams of `seed`.
TrainResult train_run(const RoadNet &net, const Demand &demand, const QNetworkSpec &spec, const TrainConfig &config,
                      const SimConfig &sim, std::uint64_t seed,
                      const std::function<void(const EpisodeLog &)> &on_episode = {});

// t_transfer / t_train - 1.
double transferability(double t_train, double t_transfer);

// Checkpoint metadata: network spec plus the training-scenario travel time.
struct ModelMeta {
    QNetworkSpec spec;
    double t_train_s = 0.0;
};
std::string encode_model_meta(const ModelMeta &meta);
// Throws SyntaxError / ConfigError on malformed metadata.
ModelMeta decode_model_meta(std::string_view text);

} // namespace tsc
