#pragma once

#include <string>

#include "postdiff/grid.hpp"

namespace postdiff {

enum class NodeTag { DeepSkip, CrossAttn, Other };
enum class Decision { ExecuteAndStore, Reuse, ExecuteOnly };
enum class Branch { Cond, Uncond };

std::string to_string(NodeTag tag);
std::string to_string(Decision d);
NodeTag parse_node_tag(const std::string& name);

inline bool executes(Decision d) { return d != Decision::Reuse; }

struct ModuleSpec {
    std::string name;
    NodeTag tag          = NodeTag::Other;
    bool cond_dependent  = false;
};

// Interface between a modular denoiser and whoever owns the feature cache.
// The denoiser asks for a decision per node, then either computes features
// (and calls store on ExecuteAndStore) or fetches them via reuse.
class CacheHook {
public:
    virtual ~CacheHook() = default;
    virtual Decision decide(const ModuleSpec& node, const GridShape& shape) = 0;
    // Stored features for the node, adapted to feature_shape. Throws
    // std::logic_error if nothing compatible is stored.
    virtual LatentGrid reuse(const ModuleSpec& node, const GridShape& feature_shape) = 0;
    virtual void store(const ModuleSpec& node, const LatentGrid& features) = 0;
};

// Executes every node, stores nothing.
class NoCacheHook final : public CacheHook {
public:
    Decision decide(const ModuleSpec&, const GridShape&) override { return Decision::ExecuteOnly; }
    LatentGrid reuse(const ModuleSpec& node, const GridShape&) override;
    void store(const ModuleSpec&, const LatentGrid&) override {}
};

}  // namespace postdiff
