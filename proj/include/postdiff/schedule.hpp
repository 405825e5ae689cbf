#pragma once

#include <string>
#include <vector>

#include "postdiff/grid.hpp"
#include "postdiff/rng.hpp"

namespace postdiff {

enum class ScheduleKind { LinearBeta, Cosine };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& name);  // "linear" | "cosine"

// Cumulative signal-retention table alpha_bar[t], t = 0..T, alpha_bar[0] == 1.
class NoiseSchedule {
public:
    NoiseSchedule(ScheduleKind kind, std::vector<double> alpha_bar);

    ScheduleKind kind() const { return kind_; }
    int steps() const { return static_cast<int>(alpha_bar_.size()) - 1; }
    double alpha_bar(int t) const;
    const std::vector<double>& table() const { return alpha_bar_; }

    // Timestep processed by sampling-loop iteration i (i = 1 is t = T).
    int timestep_of_iteration(int i) const { return steps() - i + 1; }

private:
    ScheduleKind kind_;
    std::vector<double> alpha_bar_;
};

// Number of virtual training steps the linear-beta table is re-spaced from.
inline constexpr int kTrainSteps = 1000;

NoiseSchedule make_schedule(ScheduleKind kind, int steps);

struct GuidancePair {
    LatentGrid eps_uncond;
    LatentGrid eps_cond;
};

// (x_t - sqrt(1 - a) * eps) / sqrt(a)
LatentGrid predict_x0(const LatentGrid& x_t, const LatentGrid& eps, double alpha_bar_t);

// Deterministic DDIM update from timestep t to t - 1.
LatentGrid ddim_step(const LatentGrid& x_t, const LatentGrid& eps, const NoiseSchedule& sched, int t);

// sqrt(a) * x0 + sqrt(1 - a) * fresh noise from rng.
LatentGrid renoise(const LatentGrid& x0, double alpha_bar_t, SeededRng& rng);

// eps_uncond + w * (eps_cond - eps_uncond)
LatentGrid cfg_combine(const GuidancePair& pair, double w);

}  // namespace postdiff
