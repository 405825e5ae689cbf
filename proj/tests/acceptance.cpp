// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "postdiff/cli.hpp"
#include "postdiff/eval.hpp"
#include "postdiff/mixtures.hpp"

using namespace postdiff;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), f, a, b, c, d);
    return buf;
}

const CostModel& sd15() {
    static const CostModel m = builtin_cost_model("sd15-like");
    return m;
}

std::vector<uint64_t> seeds_from(uint64_t base, size_t n) {
    std::vector<uint64_t> s(n);
    for (size_t j = 0; j < n; ++j) s[j] = sample_seed(base, j);
    return s;
}

std::vector<LatentGrid> run_batch(const SamplerConfig& cfg, const Denoiser& lo, const Denoiser& hi, size_t n,
                                  uint64_t base = 0) {
    std::vector<LatentGrid> out;
    for (auto& r : generate_batch(cfg, seeds_from(base, n), lo, hi, sd15(), 0 + 1)) out.push_back(std::move(r.sample));
    return out;
}

SamplerConfig plain(int T, const GridShape& shape) {
    SamplerConfig c;
    c.steps      = T;
    c.full_shape = shape;
    c.policy     = CachePolicy::uncached(T);
    return c;
}

// 1. Optimal-denoiser DDIM recovers the data law.
Outcome ddim_correctness() {
    const auto gm = builtin_mixture("single");
    auto cfg      = plain(50, gm.ref_shape);
    cfg.policy.m  = 0;  // w = 1: a single conditional pass is the same predictor
    const auto den = make_gm_denoisers(gm, cfg);
    const auto samples = run_batch(cfg, *den.first, *den.second, 4096);

    const size_t D = gm.dim();
    double worst_mean = 0.0, worst_var = 0.0;
    for (size_t d = 0; d < D; ++d) {
        double m = 0.0, q = 0.0;
        for (const auto& s : samples) m += s[d];
        m /= samples.size();
        for (const auto& s : samples) q += (s[d] - m) * (s[d] - m);
        q /= samples.size() - 1;
        worst_mean = std::max(worst_mean, std::abs(m - gm.means[0][d]));
        worst_var  = std::max(worst_var, std::abs(q / gm.variances[0][d] - 1.0));
    }
    double mean_var = 0.0;
    for (size_t d = 0; d < D; ++d) {
        double m = 0.0, q = 0.0;
        for (const auto& s : samples) m += s[d];
        m /= samples.size();
        for (const auto& s : samples) q += (s[d] - m) * (s[d] - m);
        mean_var += (q / (samples.size() - 1)) / gm.variances[0][d] / D;
    }
    // Exact variance of eta = 0 DDIM with the optimal eps on N(mu, v): each step scales
    // x - sqrt(a) mu by (sqrt(a' a) v + sqrt((1 - a')(1 - a))) / (a v + 1 - a).
    const auto sched = make_schedule(cfg.schedule, cfg.steps);
    const double v   = gm.variances[0][0];
    double g         = 1.0;
    for (int t = cfg.steps; t >= 1; --t) {
        const double a = sched.alpha_bar(t), ap = t > 1 ? sched.alpha_bar(t - 1) : 1.0;
        g *= (std::sqrt(ap * a) * v + std::sqrt((1.0 - ap) * (1.0 - a))) / (a * v + 1.0 - a);
    }
    return {worst_mean <= 0.05 && worst_var <= 0.10,
            fmt("max |mean - mu| = %.4f (<= 0.05), max var rel err = %.4f (<= 0.10); ", worst_mean, worst_var) +
                fmt("mean var ratio %.4f, exact T=%g DDIM ratio %.4f", mean_var, cfg.steps, g * g / v)};
}

// log p_t(x) by direct log-sum-exp over components.
double log_density(const GaussianMixture& gm, const std::vector<double>& x, double a) {
    std::vector<double> logs;
    for (size_t i = 0; i < gm.n_components(); ++i) {
        double l = std::log(gm.weights[i]);
        for (size_t d = 0; d < x.size(); ++d) {
            const double c = a * gm.variances[i][d] + 1.0 - a;
            const double r = x[d] - std::sqrt(a) * gm.means[i][d];
            l -= 0.5 * (r * r / c + std::log(2.0 * std::numbers::pi * c));
        }
        logs.push_back(l);
    }
    const double mx = *std::max_element(logs.begin(), logs.end());
    double s = 0.0;
    for (double l : logs) s += std::exp(l - mx);
    return mx + std::log(s);
}

// 2. analytic eps against central differences of log p_t.
Outcome score_oracle() {
    SeededRng rng(2024);
    GaussianMixture gm;
    gm.ref_shape = GridShape(4, 4, 1);
    double wsum  = 0.0;
    for (int i = 0; i < 3; ++i) {
        gm.weights.push_back(0.2 + rng.next_uniform());
        wsum += gm.weights.back();
        std::vector<double> mu(16), var(16);
        for (auto& v : mu) v = 1.5 * rng.next_normal();
        for (auto& v : var) v = 0.05 + rng.next_uniform();
        gm.means.push_back(mu);
        gm.variances.push_back(var);
        gm.class_of.push_back(i);
    }
    for (auto& w : gm.weights) w /= wsum;

    const auto sched = make_schedule(ScheduleKind::LinearBeta, 50);
    const double h   = 1e-5;
    double worst     = 0.0;
    for (int p = 0; p < 200; ++p) {
        const int t    = 1 + static_cast<int>(rng.next_u64() % 50);
        const double a = sched.alpha_bar(t);
        LatentGrid x(gm.ref_shape);
        for (double& v : x.data()) v = 2.0 * rng.next_normal();
        const auto eps = analytic_gm_eps(gm, x, t, sched, Condition::null());
        for (size_t d = 0; d < 16; ++d) {
            auto xp = x.values(), xm = x.values();
            xp[d] += h;
            xm[d] -= h;
            const double grad = (log_density(gm, xp, a) - log_density(gm, xm, a)) / (2.0 * h);
            worst             = std::max(worst, std::abs(eps[d] + std::sqrt(1.0 - a) * grad));
        }
    }
    return {worst <= 1e-5, fmt("max abs error %.3g over 200 points (<= 1e-5)", worst)};
}

// 3. Mixed resolution: bounded distribution error for a large FLOPs cut.
Outcome mixed_resolution_fidelity() {
    const auto gm = builtin_mixture("grid4");
    double sw[2], fl[2];
    for (int k = 0; k < 2; ++k) {
        auto cfg = plain(20, gm.ref_shape);
        cfg.beta = 0.5;
        cfg.s    = 0.5 * k;
        const auto den = make_gm_denoisers(gm, cfg);
        sw[k] = distribution_error(gm, run_batch(cfg, *den.first, *den.second, 1024)).sliced_w;
        fl[k] = simulate_schedule(cfg, sd15()).total_flops;
    }
    const double ratio = sw[1] / sw[0], drop = 1.0 - fl[1] / fl[0];
    return {ratio <= 1.25 && drop >= 0.30,
            fmt("sliced-W %.4f vs %.4f, ratio %.3f (<= 1.25); FLOPs drop %.1f%% (>= 30%%)", sw[1], sw[0], ratio,
                100 * drop)};
}

// 4. Savings of s = 1/2, beta = 1/2 without caching.
Outcome savings_claim() {
    auto cfg = plain(20, GridShape(16, 16, 1));
    const double full = simulate_schedule(cfg, sd15()).total_flops;
    cfg.s    = 0.5;
    cfg.beta = 0.5;
    const double mixed = simulate_schedule(cfg, sd15()).total_flops;
    const double saved = 1.0 - mixed / full;
    return {saved >= 0.33 && saved <= 0.40, fmt("saving %.2f%% (in [33%%, 40%%])", 100 * saved)};
}

// 5. Caching-ablation accounting against the published row values.
Outcome ablation_rows() {
    const auto run  = resolve(RunConfig::preset("sd15-pd"));
    const auto rows = flops_table(run);
    auto find = [&](const std::string& label, int m) {
        for (const auto& r : rows)
            if (r.label == label && (m < 0 || r.m == m)) return r.tflops;
        return std::nan("");
    };
    const double orig = find("Original", -1), nocfg = find("Original w/o CFG", -1), dc = find("DC", -1);
    const double ca5 = find("DC+CA", 5), ca10 = find("DC+CA", 10), ca15 = find("DC+CA", 15);
    auto rel = [](double v, double ref) { return v / ref - 1.0; };
    bool ok = std::abs(rel(orig, 30.420)) <= 0.01 && nocfg == orig / 2 && std::abs(rel(dc, 17.787)) <= 0.02 &&
              std::abs(rel(ca5, 11.610)) <= 0.10 && std::abs(rel(ca10, 15.061)) <= 0.10 &&
              std::abs(rel(ca15, 16.360)) <= 0.10 && ca5 < ca10 && ca10 < ca15;
    // every CA choice costs the same
    for (const auto& r : rows)
        if (r.label == "DC+CA") ok = ok && r.tflops == find("DC+CA", r.m);
    std::ostringstream d;
    d << fmt("Original %.3f (%+.2f%%), w/o CFG %.3f (half)", orig, 100 * rel(orig, 30.420), nocfg)
      << fmt(", DC %.3f (%+.2f%%)", dc, 100 * rel(dc, 17.787))
      << fmt(", DC+CA m=5/10/15 %.3f/%.3f/%.3f", ca5, ca10, ca15)
      << fmt(" (%+.2f%%/%+.2f%%/%+.2f%%)", 100 * rel(ca5, 11.610), 100 * rel(ca10, 15.061), 100 * rel(ca15, 16.360));
    return {ok, d.str()};
}

// 6. Cache transparency and the closed-form deep execution count.
Outcome cache_transparency() {
    const ModularDenoiser mod(ModuleGraph(0, 1));
    const auto gm = builtin_mixture("grid4");
    int mismatches = 0;
    for (uint64_t seed = 0; seed < 32; ++seed) {
        auto base  = plain(20, gm.ref_shape);
        base.seed  = seed;
        base.w     = 4.5;
        base.cond  = Condition::cls(static_cast<int>(seed % 4));
        auto cached = base;
        cached.policy.k            = 1;
        cached.policy.m            = base.steps;
        cached.policy.ca_choice    = CaChoice::Off;
        cached.policy.deep_enabled = true;
        if (generate(base, mod, mod, sd15()).sample != generate(cached, mod, mod, sd15()).sample) ++mismatches;
        const auto den = make_gm_denoisers(gm, base);
        if (generate(base, *den.first, *den.second, sd15()).sample !=
            generate(cached, *den.first, *den.second, sd15()).sample)
            ++mismatches;
    }

    bool counts_ok = true;
    std::string counts;
    for (double s : {0.0, 0.5}) {
        auto cfg                = plain(20, gm.ref_shape);
        cfg.s                   = s;
        cfg.beta                = 0.5;
        cfg.policy.k            = 2;
        cfg.policy.deep_enabled = true;
        const auto tr           = generate(cfg, mod, mod, sd15()).trace;
        // per same-shape segment: ceil(len / k)
        std::vector<int> per_segment;
        GridShape cur;
        for (const auto& st : tr.steps) {
            if (per_segment.empty() || st.shape != cur) per_segment.push_back(0), cur = st.shape;
            for (const auto& d : st.decisions)
                if (d.tag == NodeTag::DeepSkip && executes(d.decision)) ++per_segment.back();
        }
        const int n_low = cfg.low_iterations();
        const std::vector<int> expect =
            n_low > 0 ? std::vector<int>{(n_low + 1) / 2, (20 - n_low + 1) / 2} : std::vector<int>{10};
        counts_ok = counts_ok && per_segment == expect;
        if (!counts.empty()) counts += " | ";
        for (size_t j = 0; j < per_segment.size(); ++j) counts += (j ? " " : "") + std::to_string(per_segment[j]);
    }
    return {mismatches == 0 && counts_ok,
            std::to_string(mismatches) + " of 64 runs differ bit-wise (32 seeds x 2 denoisers); deep executions per "
            "segment (s=0 | s=0.5): " + counts};
}

// 7. CA-choice algebra.
Outcome ca_algebra() {
    SeededRng rng(7);
    long bad = 0, checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const GridShape s(1 + trial % 7, 1 + trial % 5, 1 + trial % 3);
        LatentGrid c = make_noise_grid(s, rng), u = make_noise_grid(s, rng);
        const double w = 10.0 * rng.next_uniform();
        const auto rc = combine_ca_cache(CaChoice::Cond, c, u, w);
        const auto ru = combine_ca_cache(CaChoice::Uncond, c, u, w);
        const auto ra = combine_ca_cache(CaChoice::Ave, c, u, w);
        const auto rf = combine_ca_cache(CaChoice::Cfg, c, u, w);
        const auto r1 = combine_ca_cache(CaChoice::Cfg, c, u, 1.0);
        for (size_t i = 0; i < c.size(); ++i) {
            checked += 5;
            bad += std::abs(rc[i] - c[i]) > 1e-15;
            bad += std::abs(ru[i] - u[i]) > 1e-15;
            bad += std::abs(ra[i] - (c[i] + u[i]) / 2.0) > 1e-15;
            bad += std::abs(rf[i] - (u[i] + w * (c[i] - u[i]))) > 1e-15;
            bad += r1[i] != c[i];
        }
    }
    return {bad == 0, std::to_string(bad) + " of " + std::to_string(checked) + " element checks off by > 1e-15"};
}

// 8. Low-frequency share of x0 early vs late on the structured toy.
Outcome frequency_evolution_claim() {
    const auto gm = builtin_mixture("structured");
    const auto cfg = plain(20, gm.ref_shape);
    const auto den = make_gm_denoisers(gm, cfg);
    GenerateOptions opt;
    opt.keep_x0 = true;
    double first = 0.0, last = 0.0;
    const auto results = generate_batch(cfg, seeds_from(0, 64), *den.first, *den.second, sd15(), 1, opt);
    for (const auto& r : results) {
        const auto lf = frequency_evolution(r.trace, opt.lf_cutoff_bin, opt.spectrum_bins);
        first += lf.front();
        last += lf.back();
    }
    first /= results.size();
    last /= results.size();
    return {first > last, fmt("mean LF fraction iteration 1 = %.4f, iteration T = %.4f", first, last)};
}

// 9. Calibration-size rank correlation on the s-grid.
Outcome calibration_correlation() {
    const auto gm = builtin_mixture("structured-overlap");
    SweepSpec spec;
    spec.base                  = plain(20, gm.ref_shape);
    spec.base.beta             = 0.5;
    spec.base.w                = 3.0;
    spec.base.policy.w         = 3.0;
    spec.base.cond             = Condition::cls(0);
    spec.axes                  = parse_axes(axes_preset("s-grid", 20));
    spec.samples               = 2;
    spec.calibration_n         = 500;
    spec.evaluation_n          = 5000;
    const DenoiserFactory fac  = [&gm](const SamplerConfig& c) { return make_gm_denoisers(gm, c); };
    const auto res             = sweep(spec, fac, gm, sd15(), 1);
    const double rho           = res.calibration_spearman.value_or(NAN);
    std::string d              = fmt("spearman %.3f (>= 0.8); fidelity n=500 / n=5000:", rho);
    for (const auto& r : res.rows) {
        d += fmt(" s=%.1f %.4f/%.4f", r.config.s, r.calibration_fidelity.value_or(NAN),
                 r.evaluation_fidelity.value_or(NAN));
    }
    return {rho >= 0.8, d};
}

// 10. k/m ablation directions on the modular denoiser.
Outcome km_ablation() {
    const ModularDenoiser mod(ModuleGraph(0, 1));
    auto base = plain(20, GridShape(16, 16, 1));
    base.w    = 5.0;
    base.cond = Condition::cls(0);
    base.seed = 0;
    const auto ref = generate(base, mod, mod, sd15()).sample;

    std::vector<double> dev, flops_k;
    for (int k = 1; k <= 5; ++k) {
        auto c                = base;
        c.policy.k            = k;
        c.policy.deep_enabled = true;
        dev.push_back(l2_distance(generate(c, mod, mod, sd15()).sample, ref));
        flops_k.push_back(simulate_schedule(c, sd15()).total_flops);
    }
    std::vector<double> flops_m;
    for (int m : {9, 12, 15, 18}) {
        auto c                = base;
        c.policy.k            = 2;
        c.policy.deep_enabled = true;
        c.policy.m            = m;
        c.policy.ca_choice    = CaChoice::Cond;
        flops_m.push_back(simulate_schedule(c, sd15()).total_flops);
    }
    bool ok = true;
    for (size_t i = 1; i < dev.size(); ++i) ok = ok && dev[i] >= dev[i - 1] && flops_k[i] <= flops_k[i - 1];
    for (size_t i = 1; i < flops_m.size(); ++i) ok = ok && flops_m[i] >= flops_m[i - 1];
    std::string d = "deviation k=1..5:";
    for (double v : dev) d += fmt(" %.4f", v);
    d += "; TFLOPs k=1..5:";
    for (double v : flops_k) d += fmt(" %.3f", v / kTera);
    d += "; TFLOPs m=9,12,15,18:";
    for (double v : flops_m) d += fmt(" %.3f", v / kTera);
    return {ok, d};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int shell(const std::string& cmd) {
    const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// 11. Re-running from the effective config reproduces every output byte.
Outcome determinism() {
    const std::string bin = POSTDIFF_CLI;
    const fs::path root   = fs::temp_directory_path() / "postdiff-acceptance";
    fs::remove_all(root);
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"generate", "generate --preset sd15-pd --set run.n_samples=16 --dump-latents"},
        {"generate-modular", "generate --preset sdxl-pd --set run.n_samples=8"},
        {"sweep", "sweep --preset lcm-pd --axis s=0.25,0.5 --axis ca_choice=ave,cfg --set run.n_samples=8 "
                  "--set sweep.calibration_n=8 --set sweep.evaluation_n=16"},
        {"flops", "flops --preset pixart-pd"},
    };
    int identical = 0, total = 0;
    std::string failures;
    for (const auto& [name, cmd] : commands) {
        const fs::path a = root / (name + "-a"), b = root / (name + "-b");
        const bool dump  = cmd.find("--dump-latents") != std::string::npos;
        if (shell(bin + " " + cmd + " --out " + a.string()) != 0) {
            failures += " " + name + ":run";
            continue;
        }
        const std::string rerun = bin + " " + cmd.substr(0, cmd.find(' ')) + " --config " +
                                  (a / "effective-config.ini").string() + (dump ? " --dump-latents" : "");
        if (shell(rerun + " --out " + b.string()) != 0) {
            failures += " " + name + ":rerun";
            continue;
        }
        std::map<std::string, std::string> first;
        for (const auto& e : fs::directory_iterator(a)) first[e.path().filename().string()] = slurp(e.path());
        // in place as well
        for (const auto& [file, bytes] : first)
            if (file != "effective-config.ini") fs::remove(a / file);
        if (shell(rerun + " --out " + a.string()) != 0) failures += " " + name + ":inplace";
        for (const auto& [file, bytes] : first) {
            total += 2;
            if (slurp(b / file) == bytes) ++identical; else failures += " " + name + "/" + file;
            if (slurp(a / file) == bytes) ++identical; else failures += " " + name + "/" + file + "(in place)";
        }
        for (const auto& e : fs::directory_iterator(b)) {
            if (!first.contains(e.path().filename().string())) failures += " extra:" + e.path().string();
        }
    }
    return {failures.empty() && total > 0,
            std::to_string(identical) + " of " + std::to_string(total) + " files byte-identical" +
                (failures.empty() ? "" : "; mismatches:" + failures)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"DDIM correctness", ddim_correctness},
        {"score-oracle equivalence", score_oracle},
        {"mixed-resolution fidelity", mixed_resolution_fidelity},
        {"mixed-resolution savings", savings_claim},
        {"caching-ablation accounting", ablation_rows},
        {"cache transparency", cache_transparency},
        {"CA-choice algebra", ca_algebra},
        {"frequency evolution", frequency_evolution_claim},
        {"calibration correlation", calibration_correlation},
        {"k/m ablation direction", km_ablation},
        {"determinism", determinism},
    };
    int failed = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::printf("criterion %2zu %s  %s: %s [%.1fs]\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
