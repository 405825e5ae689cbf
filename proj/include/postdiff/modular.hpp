#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "postdiff/denoise.hpp"

namespace postdiff {

// Handcrafted, untrained denoiser with a fixed skip-connection topology:
//
//   stem (other)        h = tanh(Ws x + bs + temb_s(t))
//   cross_attn (CA)     a = tanh(Wa h + e(cond))
//   deep (deep skip)    g = tanh(Wd blur3(h + a) + bd + temb_d(t))
//   head (other)        eps = sqrt(1 - abar_t) x + gain * (Wh (h + a + g) + bh)
//
// Every map is per-pixel except the 3x3 box blur, so one weight set serves
// every grid shape with the graph's channel count.
class ModuleGraph {
public:
    static constexpr double kHeadGain = 0.3;

    ModuleGraph(uint64_t seed, int channels, int features = 8);

    uint64_t seed() const { return seed_; }
    int channels() const { return channels_; }
    int features() const { return features_; }
    const std::vector<ModuleSpec>& nodes() const { return nodes_; }
    const ModuleSpec& node(const std::string& name) const;

    bool supports(const GridShape& shape) const { return shape.channels == channels_; }

    // Upper bound on ||eps(g1) - eps(g2)||_2 / ||g1 - g2||_2 for the head map
    // with respect to the deep features alone.
    double head_lipschitz_bound() const;

    struct Weights {
        std::vector<double> stem_w, stem_b, stem_amp, stem_freq, stem_phase;
        std::vector<double> attn_w;
        std::vector<double> deep_w, deep_b, deep_amp, deep_freq, deep_phase;
        std::vector<double> head_w, head_b;
    };
    const Weights& weights() const { return w_; }
    std::vector<double> class_embedding(const Condition& cond) const;

private:
    uint64_t seed_;
    int channels_;
    int features_;
    std::vector<ModuleSpec> nodes_;
    Weights w_;
};

// One forward pass. Cacheable nodes are routed through the hook.
Prediction modular_forward(const ModuleGraph& graph, const LatentGrid& x, int t, const NoiseSchedule& sched,
                           const Condition& cond, CacheHook& hook);

// Every node's output features with all nodes executed (head yields eps).
std::map<std::string, LatentGrid> modular_features(const ModuleGraph& graph, const LatentGrid& x, int t,
                                                   const NoiseSchedule& sched, const Condition& cond);

class ModularDenoiser final : public Denoiser {
public:
    explicit ModularDenoiser(ModuleGraph graph) : graph_(std::move(graph)) {}

    const ModuleGraph& graph() const { return graph_; }
    bool supports(const GridShape& shape) const override { return graph_.supports(shape); }
    Prediction predict(const LatentGrid& x, int t, const NoiseSchedule& sched, const Condition& cond,
                       CacheHook* hook) const override;
    bool has_modules() const override { return true; }

private:
    ModuleGraph graph_;
};

}  // namespace postdiff
