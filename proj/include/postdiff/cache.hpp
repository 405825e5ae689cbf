#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>

#include "postdiff/denoise.hpp"
#include "postdiff/module_types.hpp"

namespace postdiff {

enum class CaChoice { Ave, Cond, Uncond, Cfg, Off };

std::string to_string(CaChoice c);
CaChoice parse_ca_choice(const std::string& name);  // ave|cond|uncond|cfg|off

struct CachePolicy {
    int k             = 2;      // deep-cache refresh interval, iterations
    int m             = 0;      // last iteration with CFG; CA store iteration
    CaChoice ca_choice = CaChoice::Off;
    bool deep_enabled = true;
    double w          = 1.0;    // guidance scale, used by CaChoice::Cfg

    // Throws std::invalid_argument. CA caching needs m >= 1 so that a stored
    // value exists before the first reuse.
    void validate(int steps) const;

    // Every node executes on every pass; CFG for all iterations.
    static CachePolicy uncached(int steps, double w = 1.0);
};

struct StoredFeatures {
    LatentGrid features;
    int stored_at = 0;
    GridShape latent_shape;
};

struct CaEntry {
    std::optional<LatentGrid> cond;
    std::optional<LatentGrid> uncond;
    std::optional<LatentGrid> combined;
    int stored_at = 0;
    GridShape latent_shape;
};

struct CacheState {
    std::map<std::pair<std::string, Branch>, StoredFeatures> deep_store;
    std::map<std::string, CaEntry> ca_store;
};

// Execute/store/reuse decision for one node on one pass of iteration i.
Decision decide(const CachePolicy& policy, const CacheState& state, int i, const ModuleSpec& node, Branch branch,
                const GridShape& latent_shape);

LatentGrid combine_ca_cache(CaChoice choice, const LatentGrid& ca_cond, const LatentGrid& ca_uncond, double w);

// CFG (two passes) is active through iteration m inclusive.
bool cfg_active(const CachePolicy& policy, int i);
inline int cfg_passes(const CachePolicy& policy, int i) { return cfg_active(policy, i) ? 2 : 1; }

// CacheHook owning the state of one generation. Call begin_pass before each
// denoiser pass; the decisions of the pass are collected in pass_log().
class CacheController final : public CacheHook {
public:
    explicit CacheController(CachePolicy policy) : policy_(policy) {}

    const CachePolicy& policy() const { return policy_; }
    const CacheState& state() const { return state_; }

    void begin_pass(int i, Branch branch, const GridShape& latent_shape);
    const ExecLog& pass_log() const { return log_; }

    Decision decide(const ModuleSpec& node, const GridShape& latent_shape) override;
    LatentGrid reuse(const ModuleSpec& node, const GridShape& feature_shape) override;
    void store(const ModuleSpec& node, const LatentGrid& features) override;

private:
    CachePolicy policy_;
    CacheState state_;
    int iteration_   = 0;
    Branch branch_   = Branch::Cond;
    GridShape shape_;
    ExecLog log_;
};

}  // namespace postdiff
