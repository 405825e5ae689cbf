#pragma once

#include <optional>
#include <string>
#include <vector>

#include "postdiff/grid.hpp"
#include "postdiff/module_types.hpp"
#include "postdiff/schedule.hpp"

namespace postdiff {

struct Condition {
    std::optional<int> label;  // empty = null condition

    static Condition null() { return {}; }
    static Condition cls(int c) { return Condition{c}; }
    bool is_null() const { return !label.has_value(); }
    std::string str() const { return label ? std::to_string(*label) : "null"; }
    bool operator==(const Condition&) const = default;
};

// Diagonal-covariance Gaussian mixture over grids of ref_shape.
struct GaussianMixture {
    GridShape ref_shape;
    std::vector<double> weights;
    std::vector<std::vector<double>> means;
    std::vector<std::vector<double>> variances;
    std::vector<int> class_of;

    size_t dim() const { return ref_shape.size(); }
    size_t n_components() const { return weights.size(); }
    int n_classes() const;

    // Throws std::invalid_argument on any violated invariant.
    void validate() const;
};

// Log-space responsibilities of the noised marginal at level alpha_bar,
// restricted to the condition's class when it is not null.
std::vector<double> responsibilities(const GaussianMixture& gm, std::span<const double> x, double alpha_bar,
                                     const Condition& cond);

// Posterior mass of components belonging to `label` under the clean law.
double class_posterior(const GaussianMixture& gm, std::span<const double> x, int label);

// Optimal noise predictor -sqrt(1 - a) * grad log p_t(x).
LatentGrid analytic_gm_eps(const GaussianMixture& gm, const LatentGrid& x, int t, const NoiseSchedule& sched,
                           const Condition& cond);

// Law of area_downsample(x, factor) for x ~ gm.
GaussianMixture gm_pushforward(const GaussianMixture& gm, int pool_factor, const GridShape& ref_shape);

struct NodeDecision {
    std::string node;
    NodeTag tag;
    Decision decision;
};
using ExecLog = std::vector<NodeDecision>;

struct Prediction {
    LatentGrid eps;
    ExecLog exec_log;  // empty for denoisers without a module graph
};

class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual bool supports(const GridShape& shape) const = 0;
    // hook == nullptr executes every module.
    virtual Prediction predict(const LatentGrid& x, int t, const NoiseSchedule& sched, const Condition& cond,
                               CacheHook* hook) const = 0;
    // Modules whose execution decisions depend on the cache hook.
    virtual bool has_modules() const { return false; }
    // Condition-adherence of a clean prediction, when the denoiser knows its data law.
    virtual std::optional<double> fidelity(const LatentGrid&, const Condition&) const { return std::nullopt; }
};

class GmDenoiser final : public Denoiser {
public:
    explicit GmDenoiser(GaussianMixture gm);

    const GaussianMixture& mixture() const { return gm_; }
    bool supports(const GridShape& shape) const override { return shape == gm_.ref_shape; }
    Prediction predict(const LatentGrid& x, int t, const NoiseSchedule& sched, const Condition& cond,
                       CacheHook* hook) const override;
    std::optional<double> fidelity(const LatentGrid& x0, const Condition& cond) const override;

private:
    GaussianMixture gm_;
};

}  // namespace postdiff
