#pragma once

#include <string>
#include <vector>

#include "postdiff/denoise.hpp"

namespace postdiff {

// Node cost at modeled pixel count P: linear * P + quadratic * P^2 FLOPs.
struct CostTerm {
    std::string name;
    NodeTag tag       = NodeTag::Other;
    double linear     = 0.0;  // FLOPs per pixel
    double quadratic  = 0.0;  // FLOPs per pixel^2

    double flops(double pixels) const { return linear * pixels + quadratic * pixels * pixels; }
};

class CostModel {
public:
    CostModel(std::string name, GridShape ref_shape, std::vector<CostTerm> terms);

    const std::string& name() const { return name_; }
    const GridShape& ref_shape() const { return ref_shape_; }
    const std::vector<CostTerm>& terms() const { return terms_; }
    const CostTerm& term(const std::string& node) const;

    // The modules this model accounts for, in order; used to simulate cache
    // decisions for denoisers that have no module graph of their own.
    std::vector<ModuleSpec> modules() const;

    // Pixel count the model charges for a grid of `shape` in a run whose
    // full-resolution grid is `full_shape` (full_shape maps to ref_shape).
    double modeled_pixels(const GridShape& shape, const GridShape& full_shape) const;

    // One full pass, every node executed.
    double pass_flops(double pixels) const;

private:
    std::string name_;
    GridShape ref_shape_;
    std::vector<CostTerm> terms_;
};

inline constexpr double kTera = 1e12;

// Sum over executed nodes of term(node).flops(pixels), times cfg_passes.
double step_flops(const CostModel& model, double pixels, const ExecLog& log, int cfg_passes);
double step_flops(const CostModel& model, const GridShape& shape, const ExecLog& log, int cfg_passes);

// Builtin presets by name; currently "sd15-like".
CostModel builtin_cost_model(const std::string& name);
std::vector<std::string> builtin_cost_model_names();

// Key-value cost model file (see configs/sd15-like.cost).
CostModel parse_cost_model(const std::string& text, const std::string& name);
std::string format_cost_model(const CostModel& model);

}  // namespace postdiff
