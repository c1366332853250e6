#pragma once

#include "tsc/sim.h"

#include <memory>
#include <string>
#include <vector>

namespace tsc {

struct FixedTimePlan {
    std::vector<std::size_t> phase_order; // cyclic
    int split_s = 30;                     // green time per phase, multiple of t_duration_s

    // Throws ConfigError unless the plan covers phases 0..phase_count-1 and
    // split_s is a positive multiple of t_duration_s.
    void validate(std::size_t phase_count, int t_duration_s) const;
};

FixedTimePlan default_plan(std::size_t phase_count, int split_s = 30);

// phase_order[(clock_s / split_s) mod |phase_order|]
std::size_t fixed_time_decide(const FixedTimePlan &plan, int clock_s);

// argmax over phases of the phase queue length; lowest index wins ties.
std::size_t max_queue_decide(const TrafficView &view, std::size_t inter);
// argmax over phases of the phase pressure; lowest index wins ties.
std::size_t max_pressure_decide(const TrafficView &view, std::size_t inter);

class FixedTimeController : public Controller {
public:
    explicit FixedTimeController(int split_s = 30) : split_s_(split_s) {}
    std::string name() const override { return "fixedtime"; }
    ControllerDecision decide(const TrafficView &view) override;

private:
    int split_s_;
};

class MaxQueueController : public Controller {
public:
    std::string name() const override { return "mql"; }
    ControllerDecision decide(const TrafficView &view) override;
};

class MaxPressureController : public Controller {
public:
    std::string name() const override { return "maxpressure"; }
    ControllerDecision decide(const TrafficView &view) override;
};

// Classical controllers by name: fixedtime, maxpressure, mql.
// Throws ConfigError("controller", ...) for anything else.
std::unique_ptr<Controller> make_classical_controller(const std::string &name, int fixedtime_split_s = 30);

} // namespace tsc
