#include "postdiff/sampler.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "postdiff/grid.hpp"

namespace postdiff {

namespace {

constexpr double kRoundTol = 1e-9;

int scaled_dim(double beta, int dim) {
    const double v = beta * dim;
    const double r = std::round(v);
    if (std::abs(v - r) > kRoundTol || r < 1.0) {
        throw std::invalid_argument("beta = " + std::to_string(beta) + " does not give an integer dimension for " +
                                    std::to_string(dim));
    }
    return static_cast<int>(r);
}

}  // namespace

void SamplerConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("T must be >= 1");
    if (!(s >= 0.0) || !(s < 1.0)) throw std::invalid_argument("s must be in [0, 1)");
    if (!(beta > 0.0) || !(beta <= 1.0)) throw std::invalid_argument("beta must be in (0, 1]");
    scaled_dim(beta, full_shape.width);
    scaled_dim(beta, full_shape.height);
    policy.validate(steps);
    if (low_iterations() >= steps) {
        throw std::invalid_argument("ceil(s * T) = " + std::to_string(low_iterations()) +
                                    " leaves no full-resolution iterations");
    }
}

int SamplerConfig::low_iterations() const {
    if (s <= 0.0 || beta >= 1.0) return 0;
    return static_cast<int>(std::ceil(s * steps - kRoundTol));
}

GridShape SamplerConfig::low_shape() const {
    return GridShape(scaled_dim(beta, full_shape.width), scaled_dim(beta, full_shape.height), full_shape.channels);
}

LatentGrid transition(const LatentGrid& x_low, int t, const NoiseSchedule& sched, const GridShape& full_shape,
                      const LatentGrid& eps_low, SeededRng& rng) {
    require_same_shape(x_low, eps_low, "transition");
    const double a      = sched.alpha_bar(t);
    const LatentGrid x0 = predict_x0(x_low, eps_low, a);
    return renoise(bilinear_upsample(x0, full_shape), a, rng);
}

namespace {

struct PassOutcome {
    LatentGrid eps;
    ExecLog log;
};

// One denoiser pass. Denoisers without a module graph get their cache
// decisions simulated over the cost model's modules so the accounting is
// identical either way.
PassOutcome run_pass(const Denoiser& den, CacheController& ctrl, const std::vector<ModuleSpec>& cost_modules,
                     const LatentGrid& x, int i, int t, const NoiseSchedule& sched, const Condition& cond,
                     Branch branch) {
    ctrl.begin_pass(i, branch, x.shape());
    if (den.has_modules()) {
        Prediction p = den.predict(x, t, sched, cond, &ctrl);
        return {std::move(p.eps), std::move(p.exec_log)};
    }
    Prediction p = den.predict(x, t, sched, cond, nullptr);
    const GridShape placeholder(x.shape().width, x.shape().height, 1);
    for (const auto& node : cost_modules) {
        const Decision d = ctrl.decide(node, x.shape());
        if (d == Decision::ExecuteAndStore) ctrl.store(node, LatentGrid(placeholder));
        if (d == Decision::Reuse) ctrl.reuse(node, placeholder);
    }
    return {std::move(p.eps), ctrl.pass_log()};
}

}  // namespace

GenerationResult generate(const SamplerConfig& cfg, const Denoiser& denoiser_low, const Denoiser& denoiser_full,
                          const CostModel& cost, const GenerateOptions& options) {
    cfg.validate();
    const int n_low           = cfg.low_iterations();
    const GridShape low_shape = n_low > 0 ? cfg.low_shape() : cfg.full_shape;
    if (n_low > 0 && !denoiser_low.supports(low_shape)) {
        throw std::invalid_argument("low-resolution denoiser does not support " + low_shape.str());
    }
    if (!denoiser_full.supports(cfg.full_shape)) {
        throw std::invalid_argument("full-resolution denoiser does not support " + cfg.full_shape.str());
    }

    const NoiseSchedule sched = make_schedule(cfg.schedule, cfg.steps);
    const SeededRng root(cfg.seed);
    SeededRng init_rng  = root.substream(streams::init_noise);
    SeededRng trans_rng = root.substream(streams::transition_noise);

    CachePolicy policy = cfg.policy;
    policy.w           = cfg.w;
    CacheController ctrl(policy);
    const auto cost_modules = cost.modules();

    LatentGrid x = make_noise_grid(low_shape, init_rng);
    GenerationTrace trace;
    trace.steps.reserve(cfg.steps);

    for (int i = 1; i <= cfg.steps; ++i) {
        const int t             = sched.timestep_of_iteration(i);
        const Denoiser& den     = i <= n_low ? denoiser_low : denoiser_full;
        const int passes        = cfg_passes(policy, i);
        const double pixels     = cost.modeled_pixels(x.shape(), cfg.full_shape);

        StepRecord rec;
        rec.i          = i;
        rec.t          = t;
        rec.shape      = x.shape();
        rec.cfg_passes = passes;

        LatentGrid eps;
        if (passes == 2) {
            PassOutcome un = run_pass(den, ctrl, cost_modules, x, i, t, sched, Condition::null(), Branch::Uncond);
            rec.flops += step_flops(cost, pixels, un.log, 1);
            PassOutcome co = run_pass(den, ctrl, cost_modules, x, i, t, sched, cfg.cond, Branch::Cond);
            rec.flops += step_flops(cost, pixels, co.log, 1);
            eps           = cfg_combine({std::move(un.eps), std::move(co.eps)}, cfg.w);
            rec.decisions = std::move(co.log);
        } else {
            PassOutcome co = run_pass(den, ctrl, cost_modules, x, i, t, sched, cfg.cond, Branch::Cond);
            rec.flops += step_flops(cost, pixels, co.log, 1);
            eps           = std::move(co.eps);
            rec.decisions = std::move(co.log);
        }
        if (!eps.all_finite()) throw std::runtime_error("non-finite noise prediction at iteration " + std::to_string(i));

        LatentGrid x0   = predict_x0(x, eps, sched.alpha_bar(t));
        rec.lf_fraction = low_frequency_fraction(radial_spectrum(x0, options.spectrum_bins), options.lf_cutoff_bin);
        rec.x0_fidelity = den.fidelity(x0, cfg.cond);
        if (options.keep_x0) rec.x0 = std::move(x0);

        for (const auto& d : rec.decisions) {
            if (executes(d.decision)) trace.executions[d.tag] += 1;
        }
        trace.total_flops += rec.flops;
        trace.total_passes += passes;
        trace.steps.push_back(std::move(rec));

        x = ddim_step(x, eps, sched, t);
        if (i == n_low) x = transition(x, t - 1, sched, cfg.full_shape, eps, trans_rng);
    }
    return {std::move(x), std::move(trace)};
}

namespace {

class ZeroDenoiser final : public Denoiser {
public:
    bool supports(const GridShape&) const override { return true; }
    Prediction predict(const LatentGrid& x, int, const NoiseSchedule&, const Condition&, CacheHook*) const override {
        return {LatentGrid(x.shape()), {}};
    }
};

}  // namespace

GenerationTrace simulate_schedule(const SamplerConfig& cfg, const CostModel& cost) {
    const ZeroDenoiser zero;
    return generate(cfg, zero, zero, cost).trace;
}

uint64_t sample_seed(uint64_t base, uint64_t j) { return mix64(base ^ mix64(j + 0x2545f4914f6cdd1dULL)); }

std::vector<GenerationResult> generate_batch(const SamplerConfig& cfg, const std::vector<uint64_t>& seeds,
                                             const Denoiser& denoiser_low, const Denoiser& denoiser_full,
                                             const CostModel& cost, int jobs, const GenerateOptions& options) {
    cfg.validate();
    std::vector<std::optional<GenerationResult>> slots(seeds.size());
    std::atomic<size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;

    auto worker = [&] {
        for (size_t j = next++; j < seeds.size(); j = next++) {
            try {
                SamplerConfig c = cfg;
                c.seed          = seeds[j];
                slots[j]        = generate(c, denoiser_low, denoiser_full, cost, options);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(seeds.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int k = 0; k < n_threads; ++k) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<GenerationResult> out;
    out.reserve(seeds.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

std::pair<std::shared_ptr<const Denoiser>, std::shared_ptr<const Denoiser>> make_gm_denoisers(
    const GaussianMixture& gm, const SamplerConfig& cfg) {
    auto full = std::make_shared<GmDenoiser>(gm);
    if (cfg.low_iterations() == 0) return {full, full};
    const double inv = 1.0 / cfg.beta;
    const double r   = std::round(inv);
    if (std::abs(inv - r) > kRoundTol) {
        throw std::invalid_argument("analytic low-resolution denoiser needs 1/beta to be an integer, beta = " +
                                    std::to_string(cfg.beta));
    }
    auto low = std::make_shared<GmDenoiser>(gm_pushforward(gm, static_cast<int>(r), gm.ref_shape));
    return {low, full};
}

}  // namespace postdiff
