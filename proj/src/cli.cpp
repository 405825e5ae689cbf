#include "postdiff/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "postdiff/grid_io.hpp"
#include "postdiff/kv_text.hpp"

namespace postdiff {

namespace {

namespace fs = std::filesystem;

constexpr const char* kEffectiveConfig = "effective-config.ini";

int resolve_jobs(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("POSTDIFF_JOBS")) {
        const long long v = parse_int(env, "POSTDIFF_JOBS");
        if (v < 1) throw ConfigError("POSTDIFF_JOBS", "must be >= 1");
        return static_cast<int>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Whole-file replace: write a sibling temporary, then rename over the target.
void write_atomic(const fs::path& path, const std::string& bytes) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + tmp.string());
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

fs::path prepare_out(const RunConfig& cfg) {
    const fs::path dir(cfg.get("run.out"));
    fs::create_directories(dir);
    return dir;
}

// The effective config names its own directory as the output, so re-running
// from it (with or without --out) writes the same bytes.
std::string effective_config_text(RunConfig cfg) {
    cfg.set("run.out", ".");
    return cfg.format();
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string fmt3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

std::string axes_text(const std::vector<SweepAxis>& axes) {
    std::string out;
    for (size_t a = 0; a < axes.size(); ++a) {
        if (a) out += ";";
        out += axes[a].field + "=";
        for (size_t v = 0; v < axes[a].values.size(); ++v) out += (v ? "," : "") + axes[a].values[v];
    }
    return out;
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitInternal;
    }
}

nlohmann::ordered_json step_json(const StepRecord& r) {
    nlohmann::ordered_json j;
    j["i"]          = r.i;
    j["t"]          = r.t;
    j["width"]      = r.shape.width;
    j["height"]     = r.shape.height;
    j["cfg_passes"] = r.cfg_passes;
    j["flops"]      = r.flops;
    auto decisions  = nlohmann::ordered_json::array();
    for (const auto& d : r.decisions) {
        decisions.push_back({{"node", d.node}, {"decision", to_string(d.decision)}});
    }
    j["decisions"]   = decisions;
    j["x0_fidelity"] = r.x0_fidelity ? nlohmann::ordered_json(*r.x0_fidelity) : nlohmann::ordered_json(nullptr);
    j["lf_fraction"] = r.lf_fraction;
    return j;
}

std::string trace_jsonl(const GenerationTrace& trace, const GridShape& full_shape) {
    std::string out;
    int low = 0, full = 0;
    for (const auto& r : trace.steps) {
        out += step_json(r).dump() + "\n";
        (r.shape == full_shape ? full : low) += 1;
    }
    nlohmann::ordered_json totals;
    totals["low_res_steps"]  = low;
    totals["full_res_steps"] = full;
    totals["total_passes"]   = trace.total_passes;
    totals["total_flops"]    = trace.total_flops;
    totals["tflops"]         = trace.total_flops / kTera;
    nlohmann::ordered_json ex;
    for (NodeTag tag : {NodeTag::DeepSkip, NodeTag::CrossAttn, NodeTag::Other}) {
        const auto it = trace.executions.find(tag);
        ex[to_string(tag)] = it == trace.executions.end() ? 0 : it->second;
    }
    totals["executions"] = ex;
    out += nlohmann::ordered_json{{"totals", totals}}.dump() + "\n";
    return out;
}

}  // namespace

RunConfig load_config(const CliArgs& args) {
    if (args.config && args.preset) throw ConfigError("--preset", "give either --config or --preset, not both");
    RunConfig cfg = args.config ? RunConfig::from_file(*args.config)
                    : args.preset ? RunConfig::preset(*args.preset)
                                  : RunConfig();
    for (const auto& s : args.sets) cfg.apply_override(s);
    if (args.out) cfg.set("run.out", fs::absolute(*args.out).lexically_normal().string());
    if (args.seed) cfg.set("run.seed", std::to_string(*args.seed));
    return cfg;
}

int cmd_generate(const CliArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const RunConfig cfg   = load_config(args);
        const ResolvedRun run = resolve(cfg);
        if (run.n_samples < 2) throw ConfigError("run.n_samples", "generate needs at least 2 samples for its report");
        const int jobs = resolve_jobs(args.jobs);

        std::vector<uint64_t> seeds(run.n_samples);
        for (size_t j = 0; j < seeds.size(); ++j) seeds[j] = sample_seed(run.sampler.seed, j);
        const DenoiserPair dens = run.make_denoisers(run.sampler);
        GenerateOptions opts;
        opts.keep_x0 = args.dump_latents;
        auto results = generate_batch(run.sampler, seeds, *dens.first, *dens.second, *run.cost, jobs, opts);

        std::vector<LatentGrid> samples;
        std::ostringstream bin;
        for (const auto& r : results) {
            write_grid(bin, r.sample);
            samples.push_back(r.sample);
        }
        SweepResult report;
        SweepRow row;
        row.config        = run.sampler;
        row.n             = run.n_samples;
        row.report        = distribution_error(run.mixture, samples, run.sampler.cond);
        row.report.tflops = results.front().trace.total_flops / kTera;
        report.rows.push_back(row);

        const fs::path dir = prepare_out(cfg);
        write_atomic(dir / "samples.bin", bin.str());
        write_atomic(dir / "trace.jsonl", trace_jsonl(results.front().trace, run.sampler.full_shape));
        write_atomic(dir / "report.csv", report.csv());
        if (args.dump_latents) {
            std::ostringstream x0s;
            for (const auto& st : results.front().trace.steps) write_grid(x0s, *st.x0);
            write_atomic(dir / "x0_steps.bin", x0s.str());
        }
        write_atomic(dir / kEffectiveConfig, effective_config_text(cfg));
        out << "generated " << run.n_samples << " samples, " << fmt3(row.report.tflops) << " TFLOPs each, into "
            << dir.string() << "\n";
        return kExitOk;
    });
}

int cmd_sweep(const CliArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        RunConfig cfg = load_config(args);
        const int steps = static_cast<int>(parse_int(cfg.get("sampler.T"), "sampler.T"));
        std::vector<std::string> parts;
        if (args.axes_preset) parts.push_back(axes_preset(*args.axes_preset, steps));
        for (const auto& a : args.axes) parts.push_back(a);
        if (!parts.empty()) {
            std::string joined;
            for (const auto& p : parts) joined += (joined.empty() ? "" : ";") + p;
            cfg.set("sweep.axes", axes_text(parse_axes(joined)));
        }
        const ResolvedRun run = resolve(cfg);
        if (run.axes.empty()) throw ConfigError("sweep.axes", "no sweep axes given");

        SweepSpec spec;
        spec.base          = run.sampler;
        spec.axes          = run.axes;
        spec.samples       = run.n_samples;
        spec.seed          = run.sampler.seed;
        spec.calibration_n = run.calibration_n;
        spec.evaluation_n  = run.evaluation_n;
        const auto factory = [&run](const SamplerConfig& c) { return run.make_denoisers(c); };
        const SweepResult result = sweep(spec, factory, run.mixture, *run.cost, resolve_jobs(args.jobs));

        const fs::path dir = prepare_out(cfg);
        write_atomic(dir / "report.csv", result.csv());
        if (spec.calibration_n && spec.evaluation_n) {
            nlohmann::ordered_json cal;
            cal["calibration_n"] = *spec.calibration_n;
            cal["evaluation_n"]  = *spec.evaluation_n;
            cal["spearman"] = result.calibration_spearman ? nlohmann::ordered_json(*result.calibration_spearman)
                                                          : nlohmann::ordered_json(nullptr);
            auto rows = nlohmann::ordered_json::array();
            for (const auto& r : result.rows) {
                nlohmann::ordered_json j;
                j["s"]    = r.config.s;
                j["beta"] = r.config.beta;
                j["T"]    = r.config.steps;
                j["m"]    = r.config.policy.m;
                j["k"]    = r.config.policy.k;
                j["w"]    = r.config.w;
                j["ca_choice"] = to_string(r.config.policy.ca_choice);
                j["calibration_fidelity"] =
                    r.calibration_fidelity ? nlohmann::ordered_json(*r.calibration_fidelity) : nullptr;
                j["evaluation_fidelity"] =
                    r.evaluation_fidelity ? nlohmann::ordered_json(*r.evaluation_fidelity) : nullptr;
                j["error"] = r.error;
                rows.push_back(j);
            }
            cal["rows"] = rows;
            write_atomic(dir / "calibration.json", cal.dump(2) + "\n");
        }
        write_atomic(dir / kEffectiveConfig, effective_config_text(cfg));
        size_t failed = 0;
        for (const auto& r : result.rows) failed += !r.error.empty();
        out << result.rows.size() << " sweep points (" << failed << " failed) into " << dir.string() << "\n";
        if (result.calibration_spearman) out << "calibration spearman " << fmt6(*result.calibration_spearman) << "\n";
        return kExitOk;
    });
}

std::vector<FlopsRow> flops_table(const ResolvedRun& run) {
    const SamplerConfig& base = run.sampler;
    const int T               = base.steps;
    std::vector<FlopsRow> rows;

    auto add = [&](std::string label, double s, double beta, const CachePolicy& policy) {
        SamplerConfig c = base;
        c.s             = s;
        c.beta          = beta;
        c.policy        = policy;
        c.policy.w      = c.w;
        const GenerationTrace tr = simulate_schedule(c, *run.cost);
        rows.push_back({std::move(label), policy.m, policy.k, to_string(policy.ca_choice), s, beta,
                        tr.total_flops / kTera});
    };

    CachePolicy original = CachePolicy::uncached(T, base.w);
    original.deep_enabled = false;
    original.ca_choice    = CaChoice::Off;
    original.m            = T;
    add("Original", 0.0, 1.0, original);

    CachePolicy no_cfg = original;
    no_cfg.m           = 0;
    add("Original w/o CFG", 0.0, 1.0, no_cfg);

    CachePolicy dc  = original;
    dc.deep_enabled = true;
    dc.k            = base.policy.k;
    add("DC", 0.0, 1.0, dc);

    for (int m : {5, 10, 15}) {
        if (m > T) continue;
        for (CaChoice ch : {CaChoice::Ave, CaChoice::Cond, CaChoice::Uncond, CaChoice::Cfg}) {
            CachePolicy p = dc;
            p.m           = m;
            p.ca_choice   = ch;
            add("DC+CA", 0.0, 1.0, p);
        }
    }
    add("Mixed", base.s, base.beta, original);
    add("Config", base.s, base.beta, base.policy);
    return rows;
}

int cmd_flops(const CliArgs& args, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const RunConfig cfg   = load_config(args);
        const ResolvedRun run = resolve(cfg);
        const auto rows       = flops_table(run);

        out << "cost model " << run.cost->name() << ", T = " << run.sampler.steps << "\n";
        char line[160];
        std::snprintf(line, sizeof(line), "%-18s %4s %3s %-8s %6s %6s %10s\n", "row", "m", "k", "ca", "s", "beta",
                      "TFLOPs");
        out << line;
        std::string csv = "row,m,k,ca_choice,s,beta,tflops\n";
        for (const auto& r : rows) {
            std::snprintf(line, sizeof(line), "%-18s %4d %3d %-8s %6.3g %6.3g %10.3f\n", r.label.c_str(), r.m, r.k,
                          r.ca_choice.c_str(), r.s, r.beta, r.tflops);
            out << line;
            csv += r.label + "," + std::to_string(r.m) + "," + std::to_string(r.k) + "," + r.ca_choice + "," +
                   fmt6(r.s) + "," + fmt6(r.beta) + "," + fmt6(r.tflops) + "\n";
        }
        if (args.out) {
            const fs::path dir = prepare_out(cfg);
            write_atomic(dir / "flops.csv", csv);
            write_atomic(dir / kEffectiveConfig, effective_config_text(cfg));
        }
        return kExitOk;
    });
}

int cli_main(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Mixed-resolution diffusion sampling with module caching", "postdiff"};
    app.require_subcommand(1);
    CliArgs args;

    auto common = [&args](CLI::App* sub) {
        sub->add_option("--config", args.config, "run configuration file");
        sub->add_option("--preset", args.preset, "builtin run preset (sd15-pd, lcm-pd, sdxl-pd, pixart-pd)");
        sub->add_option("--set", args.sets, "override, section.key=value (repeatable)")->take_all();
        sub->add_option("--out", args.out, "output directory");
        sub->add_option("--seed", args.seed, "base seed");
        sub->add_option("--jobs", args.jobs, "worker threads (default: POSTDIFF_JOBS or all cores)");
    };
    CLI::App* gen = app.add_subcommand("generate", "sample a batch and write samples, trace and report");
    common(gen);
    gen->add_flag("--dump-latents", args.dump_latents, "also write the per-step x0 predictions of sample 0");
    CLI::App* swp = app.add_subcommand("sweep", "evaluate a grid of configurations");
    common(swp);
    swp->add_option("--axis", args.axes, "field=v1,v2,... (repeatable)")->take_all();
    swp->add_option("--axes", args.axes_preset, "axes preset: s-grid, beta-grid, k-ablation, m-ablation");
    CLI::App* flp = app.add_subcommand("flops", "modeled FLOPs of the caching strategies, no sampling");
    common(flp);

    std::vector<std::string> rev(argv.rbegin(), argv.rend() - (argv.empty() ? 0 : 1));
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitConfig;
    }
    if (gen->parsed()) return cmd_generate(args, out, err);
    if (swp->parsed()) return cmd_sweep(args, out, err);
    return cmd_flops(args, out, err);
}

}  // namespace postdiff
