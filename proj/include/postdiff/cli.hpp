#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "postdiff/config.hpp"

namespace postdiff {

struct CliArgs {
    std::optional<std::string> config;
    std::optional<std::string> preset;
    std::vector<std::string> sets;  // "section.key=value", applied in order
    std::optional<std::string> out;
    std::optional<uint64_t> seed;
    int jobs          = 0;  // 0: POSTDIFF_JOBS or hardware concurrency
    bool dump_latents = false;
    std::vector<std::string> axes;  // sweep: "field=v1,v2"
    std::optional<std::string> axes_preset;
};

// Exit codes shared by every command.
inline constexpr int kExitOk       = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig   = 2;

// Base config (file, preset or defaults) with --set/--out/--seed applied.
RunConfig load_config(const CliArgs& args);

int cmd_generate(const CliArgs& args, std::ostream& out, std::ostream& err);
int cmd_sweep(const CliArgs& args, std::ostream& out, std::ostream& err);
int cmd_flops(const CliArgs& args, std::ostream& out, std::ostream& err);

struct FlopsRow {
    std::string label;
    int m = 0;
    int k = 0;
    std::string ca_choice;
    double s    = 0.0;
    double beta = 1.0;
    double tflops = 0.0;
};

// Caching-ablation accounting rows for a resolved run: Original,
// Original w/o CFG, DC, DC+CA for m in {5, 10, 15} and every choice, then the
// mixed-resolution run without caching and the configured run itself.
std::vector<FlopsRow> flops_table(const ResolvedRun& run);

// Whole command line: "generate" | "sweep" | "flops" plus flags.
int cli_main(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace postdiff
