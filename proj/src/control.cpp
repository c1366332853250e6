#include "tsc/control.h"

#include "tsc/error.h"

#include <algorithm>
#include <numeric>

namespace tsc {

void FixedTimePlan::validate(std::size_t phase_count, int t_duration_s) const {
    std::vector<std::size_t> sorted = phase_order;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    if (sorted.size() != phase_count || (!sorted.empty() && sorted.back() != phase_count - 1))
        throw ConfigError("phase_order", "fixed-time plan must cover every phase exactly");
    if (split_s < t_duration_s || split_s % t_duration_s != 0)
        throw ConfigError("split_s", "must be a multiple of t_duration_s (" + std::to_string(t_duration_s) + ")");
}

FixedTimePlan default_plan(std::size_t phase_count, int split_s) {
    FixedTimePlan plan;
    plan.phase_order.resize(phase_count);
    std::iota(plan.phase_order.begin(), plan.phase_order.end(), std::size_t{0});
    plan.split_s = split_s;
    return plan;
}

std::size_t fixed_time_decide(const FixedTimePlan &plan, int clock_s) {
    const auto slot = static_cast<std::size_t>(clock_s / plan.split_s);
    return plan.phase_order[slot % plan.phase_order.size()];
}

std::size_t max_queue_decide(const TrafficView &view, std::size_t inter) {
    const auto &phases = view.net.intersection(inter).phases;
    std::size_t best = 0;
    int best_q = phase_queue_length(view.state, view.net, inter, 0);
    for (std::size_t d = 1; d < phases.size(); ++d) {
        int q = phase_queue_length(view.state, view.net, inter, d);
        if (q > best_q) {
            best_q = q;
            best = d;
        }
    }
    return best;
}

std::size_t max_pressure_decide(const TrafficView &view, std::size_t inter) {
    const auto &phases = view.net.intersection(inter).phases;
    std::size_t best = 0;
    int best_p = pressure(view.state, view.net, inter, 0);
    for (std::size_t d = 1; d < phases.size(); ++d) {
        int p = pressure(view.state, view.net, inter, d);
        if (p > best_p) {
            best_p = p;
            best = d;
        }
    }
    return best;
}

ControllerDecision FixedTimeController::decide(const TrafficView &view) {
    ControllerDecision out(view.net.intersections().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        FixedTimePlan plan = default_plan(view.net.intersection(i).phases.size(), split_s_);
        plan.validate(plan.phase_order.size(), view.config.t_duration_s);
        out[i] = fixed_time_decide(plan, view.state.clock_s);
    }
    return out;
}

ControllerDecision MaxQueueController::decide(const TrafficView &view) {
    ControllerDecision out(view.net.intersections().size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = max_queue_decide(view, i);
    return out;
}

ControllerDecision MaxPressureController::decide(const TrafficView &view) {
    ControllerDecision out(view.net.intersections().size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = max_pressure_decide(view, i);
    return out;
}

std::unique_ptr<Controller> make_classical_controller(const std::string &name, int fixedtime_split_s) {
    if (name == "fixedtime")
        return std::make_unique<FixedTimeController>(fixedtime_split_s);
    if (name == "mql")
        return std::make_unique<MaxQueueController>();
    if (name == "maxpressure")
        return std::make_unique<MaxPressureController>();
    throw ConfigError("controller", "unknown controller '" + name + "'");
}

} // namespace tsc
