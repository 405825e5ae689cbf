#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "postdiff/cache.hpp"
#include "postdiff/cost.hpp"
#include "postdiff/denoise.hpp"
#include "postdiff/schedule.hpp"

namespace postdiff {

struct SamplerConfig {
    int steps             = 20;
    double s              = 0.0;  // fraction of iterations at low resolution
    double beta           = 1.0;  // low-resolution scale
    double w              = 1.0;  // guidance scale
    CachePolicy policy    = CachePolicy::uncached(20);
    ScheduleKind schedule = ScheduleKind::LinearBeta;
    GridShape full_shape  = GridShape(16, 16, 1);
    Condition cond;
    uint64_t seed = 0;

    // Throws std::invalid_argument.
    void validate() const;

    // Iterations run at low resolution; 0 when s == 0 or beta == 1.
    int low_iterations() const;
    GridShape low_shape() const;
};

struct StepRecord {
    int i          = 0;
    int t          = 0;
    GridShape shape;
    int cfg_passes = 1;
    ExecLog decisions;  // conditional pass
    double flops   = 0.0;
    std::optional<double> x0_fidelity;
    double lf_fraction = 0.0;
    std::optional<LatentGrid> x0;  // kept when GenerateOptions::keep_x0
};

struct GenerationTrace {
    std::vector<StepRecord> steps;
    double total_flops = 0.0;
    // Executed nodes per tag, counted on the conditional pass of each iteration.
    std::map<NodeTag, int> executions;
    int total_passes = 0;
};

struct GenerationResult {
    LatentGrid sample;
    GenerationTrace trace;
};

struct GenerateOptions {
    bool keep_x0       = false;
    int spectrum_bins  = 8;
    int lf_cutoff_bin  = 3;
};

// Mixed-resolution DDIM generation with CFG and module caching. The
// low-resolution denoiser is only consulted when low_iterations() > 0.
GenerationResult generate(const SamplerConfig& cfg, const Denoiser& denoiser_low, const Denoiser& denoiser_full,
                          const CostModel& cost, const GenerateOptions& options = {});

// Upsamples the clean prediction of a low-resolution latent at timestep t and
// re-noises it to the same level at full resolution.
LatentGrid transition(const LatentGrid& x_low, int t, const NoiseSchedule& sched, const GridShape& full_shape,
                      const LatentGrid& eps_low, SeededRng& rng);

// Cost accounting for cfg without sampling (zero denoiser, same schedule).
GenerationTrace simulate_schedule(const SamplerConfig& cfg, const CostModel& cost);

// One generation per seed, run on up to `jobs` threads; results in seed order.
std::vector<GenerationResult> generate_batch(const SamplerConfig& cfg, const std::vector<uint64_t>& seeds,
                                             const Denoiser& denoiser_low, const Denoiser& denoiser_full,
                                             const CostModel& cost, int jobs, const GenerateOptions& options = {});

// Seed of sample j in a run with base seed `base`.
uint64_t sample_seed(uint64_t base, uint64_t j);

// Analytic denoisers for cfg: the full mixture and its area pushforward at
// factor 1/beta. Throws std::invalid_argument if 1/beta is not an integer.
std::pair<std::shared_ptr<const Denoiser>, std::shared_ptr<const Denoiser>> make_gm_denoisers(
    const GaussianMixture& gm, const SamplerConfig& cfg);

}  // namespace postdiff
