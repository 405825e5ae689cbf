#include "postdiff/schedule.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace postdiff {

std::string to_string(ScheduleKind kind) {
    return kind == ScheduleKind::LinearBeta ? "linear" : "cosine";
}

ScheduleKind parse_schedule_kind(const std::string& name) {
    if (name == "linear") return ScheduleKind::LinearBeta;
    if (name == "cosine") return ScheduleKind::Cosine;
    throw std::invalid_argument("unknown schedule '" + name + "' (expected linear|cosine)");
}

NoiseSchedule::NoiseSchedule(ScheduleKind kind, std::vector<double> alpha_bar)
    : kind_(kind), alpha_bar_(std::move(alpha_bar)) {
    if (alpha_bar_.size() < 2) throw std::invalid_argument("noise schedule needs at least one step");
    if (alpha_bar_[0] != 1.0) throw std::invalid_argument("noise schedule must start at alpha_bar[0] = 1");
    for (size_t t = 1; t < alpha_bar_.size(); ++t) {
        if (!(alpha_bar_[t] < alpha_bar_[t - 1]) || !(alpha_bar_[t] > 0.0)) {
            throw std::invalid_argument("noise schedule must be strictly decreasing and positive at t = " +
                                        std::to_string(t));
        }
    }
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > steps()) {
        throw std::invalid_argument("timestep " + std::to_string(t) + " outside [0, " + std::to_string(steps()) + "]");
    }
    return alpha_bar_[t];
}

NoiseSchedule make_schedule(ScheduleKind kind, int steps) {
    if (steps < 1) throw std::invalid_argument("schedule needs T >= 1");
    std::vector<double> ab(steps + 1);
    ab[0] = 1.0;
    if (kind == ScheduleKind::LinearBeta) {
        if (steps > kTrainSteps) {
            throw std::invalid_argument("linear schedule supports T <= " + std::to_string(kTrainSteps));
        }
        std::vector<double> train(kTrainSteps + 1);
        train[0] = 1.0;
        for (int j = 1; j <= kTrainSteps; ++j) {
            const double beta = 1e-4 + (2e-2 - 1e-4) * (j - 1) / (kTrainSteps - 1);
            train[j]          = train[j - 1] * (1.0 - beta);
        }
        for (int t = 1; t <= steps; ++t) {
            // uniform re-spacing; the last sampling step lands on the last training step
            const long tau = std::lround(static_cast<double>(t) * kTrainSteps / steps);
            ab[t]          = train[tau];
        }
    } else {
        auto f = [steps](int t) {
            const double c = std::cos(((static_cast<double>(t) / steps + 0.008) / 1.008) * std::numbers::pi / 2.0);
            return c * c;
        };
        const double f0 = f(0);
        for (int t = 1; t <= steps; ++t) ab[t] = f(t) / f0;
    }
    return NoiseSchedule(kind, std::move(ab));
}

LatentGrid predict_x0(const LatentGrid& x_t, const LatentGrid& eps, double alpha_bar_t) {
    require_same_shape(x_t, eps, "predict_x0");
    if (!(alpha_bar_t > 0.0) || alpha_bar_t > 1.0) {
        throw std::invalid_argument("predict_x0: alpha_bar must be in (0, 1]");
    }
    const double s_noise = std::sqrt(1.0 - alpha_bar_t);
    const double inv     = 1.0 / std::sqrt(alpha_bar_t);
    LatentGrid out(x_t.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - s_noise * eps[i]) * inv;
    return out;
}

LatentGrid ddim_step(const LatentGrid& x_t, const LatentGrid& eps, const NoiseSchedule& sched, int t) {
    if (t < 1 || t > sched.steps()) {
        throw std::invalid_argument("ddim_step: t = " + std::to_string(t) + " outside [1, " +
                                    std::to_string(sched.steps()) + "]");
    }
    const LatentGrid x0 = predict_x0(x_t, eps, sched.alpha_bar(t));
    const double prev   = sched.alpha_bar(t - 1);
    return axpby(std::sqrt(prev), x0, std::sqrt(1.0 - prev), eps);
}

LatentGrid renoise(const LatentGrid& x0, double alpha_bar_t, SeededRng& rng) {
    if (!(alpha_bar_t > 0.0) || alpha_bar_t > 1.0) {
        throw std::invalid_argument("renoise: alpha_bar must be in (0, 1]");
    }
    if (alpha_bar_t == 1.0) return x0;
    const LatentGrid noise = make_noise_grid(x0.shape(), rng);
    return axpby(std::sqrt(alpha_bar_t), x0, std::sqrt(1.0 - alpha_bar_t), noise);
}

LatentGrid cfg_combine(const GuidancePair& pair, double w) {
    require_same_shape(pair.eps_uncond, pair.eps_cond, "cfg_combine");
    // the endpoints are returned as is; u + 1 * (c - u) need not round to c
    if (w == 1.0) return pair.eps_cond;
    if (w == 0.0) return pair.eps_uncond;
    LatentGrid out(pair.eps_cond.shape());
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = pair.eps_uncond[i] + w * (pair.eps_cond[i] - pair.eps_uncond[i]);
    }
    return out;
}

}  // namespace postdiff
