#include "postdiff/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace postdiff {

int GaussianMixture::n_classes() const {
    if (class_of.empty()) return 0;
    return *std::max_element(class_of.begin(), class_of.end()) + 1;
}

void GaussianMixture::validate() const {
    const size_t k = weights.size();
    if (k == 0) throw std::invalid_argument("mixture needs at least one component");
    if (means.size() != k || variances.size() != k || class_of.size() != k) {
        throw std::invalid_argument("mixture weights/means/variances/class_of lengths differ");
    }
    double total = 0.0;
    for (double w : weights) {
        if (!(w > 0.0)) throw std::invalid_argument("mixture weights must be positive");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("mixture weights must sum to 1");
    const size_t d = dim();
    for (size_t i = 0; i < k; ++i) {
        if (means[i].size() != d || variances[i].size() != d) {
            throw std::invalid_argument("component " + std::to_string(i) + " dimension differs from ref_shape " +
                                        ref_shape.str());
        }
        for (double v : variances[i]) {
            if (!(v >= 1e-8)) throw std::invalid_argument("mixture variances must be >= 1e-8");
        }
        for (double m : means[i]) {
            if (!std::isfinite(m)) throw std::invalid_argument("mixture means must be finite");
        }
        if (class_of[i] < 0) throw std::invalid_argument("class labels must be non-negative");
    }
}

std::vector<double> responsibilities(const GaussianMixture& gm, std::span<const double> x, double alpha_bar,
                                     const Condition& cond) {
    if (x.size() != gm.dim()) {
        throw std::invalid_argument("input dimension " + std::to_string(x.size()) + " != mixture dimension " +
                                    std::to_string(gm.dim()));
    }
    if (cond.label && (*cond.label < 0 || *cond.label >= gm.n_classes())) {
        throw std::invalid_argument("condition class " + cond.str() + " outside mixture classes");
    }
    const double sa = std::sqrt(alpha_bar);
    const size_t k  = gm.n_components();
    std::vector<double> logp(k, -std::numeric_limits<double>::infinity());
    bool any = false;
    for (size_t i = 0; i < k; ++i) {
        if (cond.label && gm.class_of[i] != *cond.label) continue;
        any      = true;
        double l = std::log(gm.weights[i]);
        for (size_t j = 0; j < x.size(); ++j) {
            const double c = alpha_bar * gm.variances[i][j] + (1.0 - alpha_bar);
            const double r = x[j] - sa * gm.means[i][j];
            l -= 0.5 * (r * r / c + std::log(2.0 * std::numbers::pi * c));
        }
        logp[i] = l;
    }
    if (!any) throw std::invalid_argument("condition class " + cond.str() + " has no mixture components");

    const double top = *std::max_element(logp.begin(), logp.end());
    std::vector<double> r(k, 0.0);
    double total = 0.0;
    for (size_t i = 0; i < k; ++i) {
        if (std::isinf(logp[i])) continue;
        r[i] = std::exp(logp[i] - top);
        total += r[i];
    }
    total = std::max(total, 1e-300);
    for (double& v : r) v /= total;
    return r;
}

double class_posterior(const GaussianMixture& gm, std::span<const double> x, int label) {
    const auto r = responsibilities(gm, x, 1.0, Condition::null());
    double p     = 0.0;
    for (size_t i = 0; i < r.size(); ++i) {
        if (gm.class_of[i] == label) p += r[i];
    }
    return std::clamp(p, 0.0, 1.0);
}

LatentGrid analytic_gm_eps(const GaussianMixture& gm, const LatentGrid& x, int t, const NoiseSchedule& sched,
                           const Condition& cond) {
    if (x.shape() != gm.ref_shape) {
        throw std::invalid_argument("analytic_gm_eps: grid " + x.shape().str() + " does not match mixture shape " +
                                    gm.ref_shape.str());
    }
    if (t < 1 || t > sched.steps()) throw std::invalid_argument("analytic_gm_eps: timestep out of range");
    const double a  = sched.alpha_bar(t);
    const double sa = std::sqrt(a);
    const auto r    = responsibilities(gm, x.data(), a, cond);

    LatentGrid eps(x.shape());
    for (size_t i = 0; i < r.size(); ++i) {
        if (r[i] == 0.0) continue;
        for (size_t j = 0; j < x.size(); ++j) {
            const double c = a * gm.variances[i][j] + (1.0 - a);
            eps[j] += r[i] * (x[j] - sa * gm.means[i][j]) / c;
        }
    }
    const double scale = std::sqrt(1.0 - a);
    for (double& v : eps.data()) v *= scale;
    return eps;
}

GaussianMixture gm_pushforward(const GaussianMixture& gm, int pool_factor, const GridShape& ref_shape) {
    if (ref_shape != gm.ref_shape) {
        throw std::invalid_argument("gm_pushforward: ref_shape " + ref_shape.str() + " != mixture shape " +
                                    gm.ref_shape.str());
    }
    const AreaPoolMap map(ref_shape, pool_factor);
    const double inv = 1.0 / map.block_size();

    GaussianMixture out;
    out.ref_shape = map.output_shape();
    out.weights   = gm.weights;
    out.class_of  = gm.class_of;
    const size_t d_out = out.ref_shape.size();
    for (size_t i = 0; i < gm.n_components(); ++i) {
        std::vector<double> mu(d_out), var(d_out);
        for (size_t j = 0; j < d_out; ++j) {
            double sm = 0.0, sv = 0.0;
            for (size_t src : map.sources(j)) {
                sm += gm.means[i][src];
                sv += gm.variances[i][src];
            }
            mu[j] = sm * inv;
            // Var(mean of n independent) = (mean variance) / n
            var[j] = sv * inv * inv;
        }
        out.means.push_back(std::move(mu));
        out.variances.push_back(std::move(var));
    }
    return out;
}

GmDenoiser::GmDenoiser(GaussianMixture gm) : gm_(std::move(gm)) { gm_.validate(); }

Prediction GmDenoiser::predict(const LatentGrid& x, int t, const NoiseSchedule& sched, const Condition& cond,
                               CacheHook*) const {
    return {analytic_gm_eps(gm_, x, t, sched, cond), {}};
}

std::optional<double> GmDenoiser::fidelity(const LatentGrid& x0, const Condition& cond) const {
    if (cond.is_null() || x0.shape() != gm_.ref_shape) return std::nullopt;
    return class_posterior(gm_, x0.data(), *cond.label);
}

}  // namespace postdiff
