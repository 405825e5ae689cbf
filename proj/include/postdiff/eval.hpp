#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "postdiff/cost.hpp"
#include "postdiff/denoise.hpp"
#include "postdiff/modular.hpp"
#include "postdiff/sampler.hpp"

namespace postdiff {

// Mean posterior probability (clean law) that each sample belongs to the
// target class.
double mode_fidelity(const GaussianMixture& gm, const std::vector<LatentGrid>& samples, const Condition& target);

// Index of the component with the smallest Mahalanobis distance; ties go to
// the lower index.
size_t nearest_mode(const GaussianMixture& gm, std::span<const double> x);

// Exact W1 between two 1-D empirical distributions (sizes may differ).
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

// Mean 1-D W1 over n_projections seeded unit directions.
double sliced_wasserstein(const std::vector<LatentGrid>& a, const std::vector<LatentGrid>& b, int n_projections,
                          uint64_t seed);

struct EvalReport {
    size_t n_samples = 0;
    std::vector<double> assigned_fraction;
    double weight_l1 = 0.0;
    std::vector<double> mode_mean_error;  // L2; 0 for modes with no samples
    double mean_err  = 0.0;               // assignment-weighted mode_mean_error
    double sliced_w  = 0.0;
    std::optional<double> fidelity;
    double tflops = 0.0;
};

struct EvalOptions {
    int n_projections       = 64;
    uint64_t projection_seed = 0x5eed;
    size_t reference_n      = 8192;
    uint64_t reference_seed = 0xbeef;
};

// Distribution-level errors of samples against the mixture law. Fidelity is
// filled in when target is a class.
EvalReport distribution_error(const GaussianMixture& gm, const std::vector<LatentGrid>& samples,
                              const Condition& target = Condition::null(), const EvalOptions& options = {});

struct DriftCurve {
    std::vector<double> mean_drift;       // per consecutive pair
    std::vector<int> degenerate_count;    // pairs with a zero-norm denominator
};

// Relative L1 change of each node's features between consecutive latents,
// averaged over trajectories. Each trajectory holds (x_t, t) for successive
// steps; pair k compares F(x_{t_k}, t_k) and F(x_{t_{k+1}}, t_{k+1}).
std::map<std::string, DriftCurve> module_drift(
    const ModuleGraph& graph, const std::vector<std::vector<std::pair<LatentGrid, int>>>& trajectories,
    const NoiseSchedule& sched, const Condition& cond);

// Low-frequency energy fraction of each step's x0 snapshot.
std::vector<double> frequency_evolution(const GenerationTrace& trace, int cutoff_bin, int n_bins = 8);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct SweepAxis {
    std::string field;  // T, s, beta, w, m, k, ca_choice
    std::vector<std::string> values;
};

struct SweepSpec {
    SamplerConfig base;
    std::vector<SweepAxis> axes;
    size_t samples = 64;
    uint64_t seed  = 0;
    std::optional<size_t> calibration_n;
    std::optional<size_t> evaluation_n;
};

using DenoiserPair = std::pair<std::shared_ptr<const Denoiser>, std::shared_ptr<const Denoiser>>;
using DenoiserFactory = std::function<DenoiserPair(const SamplerConfig&)>;

struct SweepRow {
    SamplerConfig config;
    size_t n = 0;
    EvalReport report;
    std::string error;
    std::optional<double> calibration_fidelity;
    std::optional<double> evaluation_fidelity;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::optional<double> calibration_spearman;
    std::string csv() const;
};

// Applies one axis value to a config; throws ConfigError on bad input.
void apply_axis_value(SamplerConfig& cfg, const std::string& field, const std::string& value);

// Cartesian product of the axes in declaration order (last axis fastest).
std::vector<SamplerConfig> expand_sweep(const SweepSpec& spec);

SweepResult sweep(const SweepSpec& spec, const DenoiserFactory& factory, const GaussianMixture& gm,
                  const CostModel& cost, int jobs, const EvalOptions& options = {});

std::vector<std::string> sweep_csv_columns();

}  // namespace postdiff
