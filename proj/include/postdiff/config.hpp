#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "postdiff/cost.hpp"
#include "postdiff/eval.hpp"
#include "postdiff/sampler.hpp"

namespace postdiff {

enum class DenoiserKind { Analytic, Modular };

// Raw "section.key" -> value table of a run configuration. Every known key
// always has a value (defaults are filled in), so the formatted text is a
// complete effective configuration.
class RunConfig {
public:
    RunConfig();  // defaults

    static RunConfig from_text(const std::string& text, const std::string& base_dir = ".");
    static RunConfig from_file(const std::string& path);
    static RunConfig preset(const std::string& name);
    static std::vector<std::string> preset_names();

    // "section.key=value"; throws ConfigError naming the key.
    void apply_override(const std::string& assignment);
    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;

    std::string format() const;

    static const std::vector<std::string>& known_keys();

private:
    std::map<std::string, std::string> values_;
};

struct ResolvedRun {
    SamplerConfig sampler;
    GaussianMixture mixture;
    DenoiserKind denoiser = DenoiserKind::Analytic;
    uint64_t graph_seed   = 0;
    std::shared_ptr<const CostModel> cost;
    size_t n_samples = 64;
    std::string out_dir;
    std::vector<SweepAxis> axes;
    std::optional<size_t> calibration_n;
    std::optional<size_t> evaluation_n;

    DenoiserPair make_denoisers(const SamplerConfig& cfg) const;
};

// Typed view with every invariant re-validated; throws ConfigError.
ResolvedRun resolve(const RunConfig& cfg);

// "s=0.1,0.2;k=1,2" -> axes. Throws ConfigError on malformed text.
std::vector<SweepAxis> parse_axes(const std::string& text);

// Named axis presets (s-grid, beta-grid, k-ablation, m-ablation) for a run of
// `steps` iterations.
std::string axes_preset(const std::string& name, int steps);

}  // namespace postdiff
