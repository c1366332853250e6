#include "tsc/rl.h"

#include "tsc/error.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tsc {

using ad::Tape;
using ad::Tensor;
using ad::Var;

EncodedState encode_state(const Observation &obs) {
    EncodedState e;
    e.phase_onehot.assign(obs.current_phase_onehot.begin(), obs.current_phase_onehot.end());
    e.queues.assign(obs.queue_lengths.begin(), obs.queue_lengths.end());
    return e;
}

std::string_view to_string(ModelKind kind) { return kind == ModelKind::qldqn ? "qldqn" : "attentionlight"; }
std::string_view to_string(Fusion fusion) { return fusion == Fusion::sum ? "sum" : "weighted"; }

ModelKind parse_model_kind(std::string_view text) {
    if (text == "qldqn")
        return ModelKind::qldqn;
    if (text == "attentionlight")
        return ModelKind::attentionlight;
    throw ConfigError("model", "unknown model '" + std::string(text) + "' (expected qldqn or attentionlight)");
}

Fusion parse_fusion(std::string_view text) {
    if (text == "sum")
        return Fusion::sum;
    if (text == "weighted")
        return Fusion::weighted;
    throw ConfigError("fusion", "unknown fusion '" + std::string(text) + "' (expected sum or weighted)");
}

void QNetworkSpec::validate() const {
    if (phase_count == 0)
        throw ConfigError("phase_count", "must be >= 1");
    if (lane_count == 0)
        throw ConfigError("lane_count", "must be >= 1");
    if (hidden == 0)
        throw ConfigError("hidden", "must be >= 1");
    if (kind == ModelKind::qldqn)
        return;
    if (dims == 0 || dims % 2 != 0)
        throw ConfigError("dims", "must be a positive even number, got " + std::to_string(dims));
    if (heads == 0 || dims % heads != 0)
        throw ConfigError("heads", "dims " + std::to_string(dims) + " not divisible by " + std::to_string(heads));
    if (phase_lanes.size() != phase_count)
        throw ConfigError("phase_lanes", "need one lane list per phase (" + std::to_string(phase_count) + "), got " +
                                             std::to_string(phase_lanes.size()));
    for (const auto &lanes : phase_lanes) {
        if (lanes.empty())
            throw ConfigError("phase_lanes", "phase with no lanes");
        for (std::size_t l : lanes)
            if (l >= lane_count)
                throw ConfigError("phase_lanes", "lane position " + std::to_string(l) + " out of range");
    }
}

QNetworkSpec network_spec(const RoadNet &net, QNetworkSpec base) {
    if (net.intersections().empty())
        throw ConfigError("network", "no intersections");
    std::optional<std::vector<std::vector<std::size_t>>> layout;
    std::size_t lane_count = 0;
    for (std::size_t i = 0; i < net.intersections().size(); ++i) {
        const Intersection &in = net.intersection(i);
        std::vector<std::vector<std::size_t>> lanes;
        for (std::size_t d = 0; d < in.phases.size(); ++d) {
            std::vector<std::size_t> pos;
            for (std::size_t l : phase_lanes(in, d))
                pos.push_back(*net.incoming_position(i, l));
            lanes.push_back(std::move(pos));
        }
        if (!layout) {
            layout = std::move(lanes);
            lane_count = in.incoming_lanes.size();
        } else if (*layout != lanes || lane_count != in.incoming_lanes.size()) {
            throw ConfigError("network", "intersection " + in.id +
                                             " has a different phase/lane layout; shared parameters need one layout");
        }
    }
    base.phase_count = layout->size();
    base.lane_count = lane_count;
    base.phase_lanes = std::move(*layout);
    base.validate();
    return base;
}

namespace {

void glorot(ad::ParamStore &store, const std::string &name, std::size_t fan_in, std::size_t fan_out, Rng &rng) {
    Tensor w({fan_in, fan_out});
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double &v : w.values)
        v = (2.0 * rng.uniform01() - 1.0) * limit;
    store.add(name, std::move(w));
}

void zeros(ad::ParamStore &store, const std::string &name, std::size_t n) { store.add(name, Tensor({n})); }

void layer(ad::ParamStore &store, const std::string &prefix, std::size_t in, std::size_t out, Rng &rng) {
    glorot(store, prefix + "_w", in, out, rng);
    zeros(store, prefix + "_b", out);
}

// Binds parameters either as trainable (gradients flow into the store) or
// as constants for inference.
struct Binder {
    Tape &t;
    const ad::ParamStore &store;
    ad::ParamStore *trainable;

    Var operator()(const std::string &name) const {
        return trainable ? t.param(*trainable, name) : t.constant(store.value(name));
    }
};

void check_batch(const QNetworkSpec &spec, const StateBatch &batch) {
    const std::size_t B = batch.size();
    if (B == 0 || batch.onehot.shape != ad::Shape{B, spec.phase_count} ||
        batch.queues.shape != ad::Shape{B, spec.lane_count})
        throw std::invalid_argument("state batch " + ad::shape_string(batch.onehot.shape) + " / " +
                                    ad::shape_string(batch.queues.shape) + " does not match network (" +
                                    std::to_string(spec.phase_count) + " phases, " +
                                    std::to_string(spec.lane_count) + " lanes)");
}

Var qldqn(Tape &t, const QNetworkSpec &spec, const Binder &p, const StateBatch &batch) {
    check_batch(spec, batch);
    Var x = ad::concat_last(t, t.constant(batch.onehot), t.constant(batch.queues));
    Var h = ad::dense(t, x, p("fc1_w"), p("fc1_b"), ad::Activation::relu);
    return ad::dense(t, h, p("fc2_w"), p("fc2_b"));
}

Var attentionlight(Tape &t, const QNetworkSpec &spec, const Binder &p, const StateBatch &batch,
                   std::vector<Tensor> *attention) {
    spec.validate();
    check_batch(spec, batch);
    const std::size_t B = batch.size(), P = spec.phase_count, L = spec.lane_count;

    // A lane's signal bit is 1 when the current phase permits it.
    Tensor bits({B, L, 1});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t d = 0; d < P; ++d)
            if (batch.onehot[b * P + d] != 0.0)
                for (std::size_t l : spec.phase_lanes[d])
                    bits[b * L + l] = 1.0;
    Tensor queues({B, L, 1}, batch.queues.values);

    Var eq = ad::embed(t, t.constant(std::move(queues)), p("emb_queue_w"), p("emb_queue_b"));
    Var es = ad::embed(t, t.constant(std::move(bits)), p("emb_signal_w"), p("emb_signal_b"));
    Var lanes = ad::concat_last(t, eq, es); // [B, L, dims]

    Tensor mask({P, L});
    for (std::size_t d = 0; d < P; ++d)
        for (std::size_t l : spec.phase_lanes[d])
            mask[d * L + l] = 1.0;
    Var m = t.constant(std::move(mask));
    if (spec.fusion == Fusion::weighted)
        m = ad::hadamard(t, p("fusion_w"), m);
    Var phases = ad::mix(t, m, lanes); // [B, P, dims]

    ad::AttentionParams ap{p("att_wq"), p("att_bq"), p("att_wk"), p("att_bk"),
                           p("att_wv"), p("att_bv"), p("att_wo"), p("att_bo")};
    Var c = ad::add(t, phases, ad::multi_head_self_attention(t, phases, ap, spec.heads, attention));

    Var h = ad::dense(t, c, p("head1_w"), p("head1_b"), ad::Activation::relu);
    h = ad::dense(t, h, p("head2_w"), p("head2_b"), ad::Activation::relu);
    Var q = ad::dense(t, h, p("head3_w"), p("head3_b")); // [B, P, 1]
    return ad::reshape(t, q, {B, P});
}

} // namespace

void init_params(const QNetworkSpec &spec, ad::ParamStore &store, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    const std::size_t P = spec.phase_count, L = spec.lane_count, H = spec.hidden;
    if (spec.kind == ModelKind::qldqn) {
        layer(store, "fc1", P + L, H, rng);
        layer(store, "fc2", H, P, rng);
        return;
    }
    const std::size_t D = spec.dims, E = D / 2;
    layer(store, "emb_queue", 1, E, rng);
    layer(store, "emb_signal", 1, E, rng);
    if (spec.fusion == Fusion::weighted)
        store.add("fusion_w", Tensor({P, L}, std::vector<double>(P * L, 1.0)));
    for (const char *k : {"q", "k", "v", "o"}) {
        glorot(store, std::string("att_w") + k, D, D, rng);
        zeros(store, std::string("att_b") + k, D);
    }
    layer(store, "head1", D, H, rng);
    layer(store, "head2", H, H, rng);
    layer(store, "head3", H, 1, rng);
}

StateBatch make_batch(const std::vector<const EncodedState *> &states) {
    if (states.empty())
        throw std::invalid_argument("make_batch: no states");
    const std::size_t B = states.size(), P = states[0]->phase_onehot.size(), L = states[0]->queues.size();
    StateBatch batch{Tensor({B, P}), Tensor({B, L})};
    for (std::size_t b = 0; b < B; ++b) {
        if (states[b]->phase_onehot.size() != P || states[b]->queues.size() != L)
            throw std::invalid_argument("make_batch: states of different sizes");
        std::copy(states[b]->phase_onehot.begin(), states[b]->phase_onehot.end(), batch.onehot.values.begin() + b * P);
        std::copy(states[b]->queues.begin(), states[b]->queues.end(), batch.queues.values.begin() + b * L);
    }
    return batch;
}

StateBatch make_batch(const std::vector<EncodedState> &states) {
    std::vector<const EncodedState *> ptrs;
    ptrs.reserve(states.size());
    for (const auto &s : states)
        ptrs.push_back(&s);
    return make_batch(ptrs);
}

Var qldqn_forward(Tape &t, const QNetworkSpec &spec, ad::ParamStore &store, const StateBatch &batch) {
    return qldqn(t, spec, Binder{t, store, &store}, batch);
}

Var attentionlight_forward(Tape &t, const QNetworkSpec &spec, ad::ParamStore &store, const StateBatch &batch,
                           std::vector<Tensor> *attention) {
    return attentionlight(t, spec, Binder{t, store, &store}, batch, attention);
}

Var q_forward(Tape &t, const QNetworkSpec &spec, ad::ParamStore &store, const StateBatch &batch) {
    return spec.kind == ModelKind::qldqn ? qldqn_forward(t, spec, store, batch)
                                         : attentionlight_forward(t, spec, store, batch);
}

Tensor q_values(const QNetworkSpec &spec, const ad::ParamStore &store, const StateBatch &batch) {
    Tape t;
    Binder p{t, store, nullptr};
    Var q = spec.kind == ModelKind::qldqn ? qldqn(t, spec, p, batch) : attentionlight(t, spec, p, batch, nullptr);
    return t.value(q);
}

std::size_t argmax(std::span<const double> q) {
    if (q.empty())
        throw std::invalid_argument("argmax of an empty row");
    return static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
}

std::size_t select_action(std::span<const double> q, double epsilon, Rng &rng) {
    if (q.empty())
        throw std::invalid_argument("select_action: empty Q row");
    if (epsilon > 0.0 && rng.uniform01() < epsilon)
        return static_cast<std::size_t>(rng.below(q.size()));
    return argmax(q);
}

double bellman_target(double r, double gamma, std::span<const double> online_next,
                      std::span<const double> target_next) {
    if (online_next.size() != target_next.size())
        throw std::invalid_argument("bellman_target: Q rows differ in length");
    return r + gamma * target_next[argmax(online_next)];
}

double transferability(double t_train, double t_transfer) {
    if (!(t_train > 0.0))
        throw std::invalid_argument("transferability: t_train must be > 0");
    return t_transfer / t_train - 1.0;
}

} // namespace tsc
