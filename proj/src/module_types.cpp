#include "postdiff/module_types.hpp"

#include <stdexcept>

namespace postdiff {

std::string to_string(NodeTag tag) {
    switch (tag) {
        case NodeTag::DeepSkip: return "deep_skip";
        case NodeTag::CrossAttn: return "cross_attn";
        case NodeTag::Other: return "other";
    }
    return "other";
}

std::string to_string(Decision d) {
    switch (d) {
        case Decision::ExecuteAndStore: return "execute_and_store";
        case Decision::Reuse: return "reuse";
        case Decision::ExecuteOnly: return "execute_only";
    }
    return "execute_only";
}

NodeTag parse_node_tag(const std::string& name) {
    if (name == "deep_skip") return NodeTag::DeepSkip;
    if (name == "cross_attn") return NodeTag::CrossAttn;
    if (name == "other") return NodeTag::Other;
    throw std::invalid_argument("unknown node tag '" + name + "' (expected deep_skip|cross_attn|other)");
}

LatentGrid NoCacheHook::reuse(const ModuleSpec& node, const GridShape&) {
    throw std::logic_error("reuse requested for node '" + node.name + "' with caching disabled");
}

}  // namespace postdiff
