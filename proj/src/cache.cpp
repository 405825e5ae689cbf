#include "postdiff/cache.hpp"

#include <stdexcept>

#include "postdiff/schedule.hpp"

namespace postdiff {

std::string to_string(CaChoice c) {
    switch (c) {
        case CaChoice::Ave: return "ave";
        case CaChoice::Cond: return "cond";
        case CaChoice::Uncond: return "uncond";
        case CaChoice::Cfg: return "cfg";
        case CaChoice::Off: return "off";
    }
    return "off";
}

CaChoice parse_ca_choice(const std::string& name) {
    if (name == "ave") return CaChoice::Ave;
    if (name == "cond") return CaChoice::Cond;
    if (name == "uncond") return CaChoice::Uncond;
    if (name == "cfg") return CaChoice::Cfg;
    if (name == "off") return CaChoice::Off;
    throw std::invalid_argument("unknown ca_choice '" + name + "' (expected ave|cond|uncond|cfg|off)");
}

void CachePolicy::validate(int steps) const {
    if (k < 1) throw std::invalid_argument("cache k must be >= 1");
    if (m < 0 || m > steps) {
        throw std::invalid_argument("cache m must be in [0, " + std::to_string(steps) + "]");
    }
    if (ca_choice != CaChoice::Off && m < 1) {
        throw std::invalid_argument("cross-attention caching needs m >= 1");
    }
}

CachePolicy CachePolicy::uncached(int steps, double w) {
    CachePolicy p;
    p.k            = 1;
    p.m            = steps;
    p.ca_choice    = CaChoice::Off;
    p.deep_enabled = false;
    p.w            = w;
    return p;
}

bool cfg_active(const CachePolicy& policy, int i) { return i <= policy.m; }

Decision decide(const CachePolicy& policy, const CacheState& state, int i, const ModuleSpec& node, Branch branch,
                const GridShape& latent_shape) {
    if (i < 1) throw std::invalid_argument("cache decision for iteration < 1");
    switch (node.tag) {
        case NodeTag::DeepSkip: {
            if (!policy.deep_enabled) return Decision::ExecuteOnly;
            const auto it = state.deep_store.find({node.name, branch});
            if (it == state.deep_store.end()) return Decision::ExecuteAndStore;
            const StoredFeatures& s = it->second;
            if (s.latent_shape != latent_shape || i - s.stored_at >= policy.k) return Decision::ExecuteAndStore;
            return Decision::Reuse;
        }
        case NodeTag::CrossAttn: {
            if (policy.ca_choice == CaChoice::Off) return Decision::ExecuteOnly;
            if (i < policy.m) return Decision::ExecuteOnly;
            if (i == policy.m) return Decision::ExecuteAndStore;
            if (!state.ca_store.contains(node.name)) {
                throw std::logic_error("cross-attention reuse at iteration " + std::to_string(i) +
                                       " with nothing stored for '" + node.name + "'");
            }
            return Decision::Reuse;
        }
        case NodeTag::Other: return Decision::ExecuteOnly;
    }
    return Decision::ExecuteOnly;
}

LatentGrid combine_ca_cache(CaChoice choice, const LatentGrid& ca_cond, const LatentGrid& ca_uncond, double w) {
    require_same_shape(ca_cond, ca_uncond, "combine_ca_cache");
    switch (choice) {
        case CaChoice::Cond: return ca_cond;
        case CaChoice::Uncond: return ca_uncond;
        case CaChoice::Ave: {
            LatentGrid out(ca_cond.shape());
            for (size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (ca_cond[i] + ca_uncond[i]);
            return out;
        }
        case CaChoice::Cfg: return cfg_combine({ca_uncond, ca_cond}, w);
        case CaChoice::Off: break;
    }
    throw std::invalid_argument("combine_ca_cache: caching is off");
}

void CacheController::begin_pass(int i, Branch branch, const GridShape& latent_shape) {
    iteration_ = i;
    branch_    = branch;
    shape_     = latent_shape;
    log_.clear();
}

Decision CacheController::decide(const ModuleSpec& node, const GridShape& latent_shape) {
    const Decision d = postdiff::decide(policy_, state_, iteration_, node, branch_, latent_shape);
    log_.push_back({node.name, node.tag, d});
    return d;
}

LatentGrid CacheController::reuse(const ModuleSpec& node, const GridShape& feature_shape) {
    if (node.tag == NodeTag::DeepSkip) {
        const auto it = state_.deep_store.find({node.name, branch_});
        if (it == state_.deep_store.end()) {
            throw std::logic_error("deep reuse with nothing stored for '" + node.name + "'");
        }
        return it->second.features;
    }
    if (node.tag == NodeTag::CrossAttn) {
        const auto it = state_.ca_store.find(node.name);
        if (it == state_.ca_store.end()) {
            throw std::logic_error("cross-attention reuse with nothing stored for '" + node.name + "'");
        }
        CaEntry& e = it->second;
        if (!e.combined) {
            // a CFG-active store iteration fills both branches
            if (!e.cond || !e.uncond) {
                throw std::logic_error("cross-attention cache for '" + node.name + "' is missing a branch");
            }
            e.combined = combine_ca_cache(policy_.ca_choice, *e.cond, *e.uncond, policy_.w);
        }
        const LatentGrid& v = *e.combined;
        if (v.shape() == feature_shape) return v;
        if (v.shape().width <= feature_shape.width && v.shape().height <= feature_shape.height) {
            return bilinear_upsample(v, feature_shape);
        }
        throw std::logic_error("cached cross-attention features " + v.shape().str() + " cannot serve " +
                               feature_shape.str());
    }
    throw std::logic_error("node '" + node.name + "' is not cacheable");
}

void CacheController::store(const ModuleSpec& node, const LatentGrid& features) {
    if (node.tag == NodeTag::DeepSkip) {
        state_.deep_store[{node.name, branch_}] = StoredFeatures{features, iteration_, shape_};
        return;
    }
    if (node.tag == NodeTag::CrossAttn) {
        CaEntry& e = state_.ca_store[node.name];
        if (e.stored_at != iteration_) e = CaEntry{};
        (branch_ == Branch::Cond ? e.cond : e.uncond) = features;
        e.combined     = std::nullopt;
        e.stored_at    = iteration_;
        e.latent_shape = shape_;
        return;
    }
    throw std::logic_error("node '" + node.name + "' is not cacheable");
}

}  // namespace postdiff
