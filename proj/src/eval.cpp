#include "postdiff/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "postdiff/kv_text.hpp"
#include "postdiff/mixtures.hpp"

namespace postdiff {

double mode_fidelity(const GaussianMixture& gm, const std::vector<LatentGrid>& samples, const Condition& target) {
    if (target.is_null()) throw std::invalid_argument("mode_fidelity needs a class target");
    if (samples.empty()) throw std::invalid_argument("mode_fidelity needs samples");
    double s = 0.0;
    for (const auto& x : samples) s += class_posterior(gm, x.data(), *target.label);
    return s / static_cast<double>(samples.size());
}

size_t nearest_mode(const GaussianMixture& gm, std::span<const double> x) {
    if (x.size() != gm.dim()) throw std::invalid_argument("nearest_mode: dimension mismatch");
    size_t best   = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < gm.n_components(); ++i) {
        double d = 0.0;
        for (size_t j = 0; j < x.size(); ++j) {
            const double r = x[j] - gm.means[i][j];
            d += r * r / gm.variances[i][j];
        }
        if (d < best_d) {
            best_d = d;
            best   = i;
        }
    }
    return best;
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("wasserstein_1d needs non-empty sets");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    // integrate |F_a - F_b| over the merged support
    size_t ia = 0, ib = 0;
    double prev = std::min(a.front(), b.front());
    double w    = 0.0;
    while (ia < a.size() || ib < b.size()) {
        double x;
        if (ib >= b.size() || (ia < a.size() && a[ia] <= b[ib])) {
            x = a[ia];
        } else {
            x = b[ib];
        }
        w += std::abs(ia / na - ib / nb) * (x - prev);
        prev = x;
        while (ia < a.size() && a[ia] == x) ++ia;
        while (ib < b.size() && b[ib] == x) ++ib;
    }
    return w;
}

double sliced_wasserstein(const std::vector<LatentGrid>& a, const std::vector<LatentGrid>& b, int n_projections,
                          uint64_t seed) {
    if (a.empty() || b.empty()) throw std::invalid_argument("sliced_wasserstein needs non-empty sets");
    const size_t d = a.front().size();
    for (const auto& g : a) {
        if (g.size() != d) throw std::invalid_argument("sliced_wasserstein: mixed dimensions");
    }
    for (const auto& g : b) {
        if (g.size() != d) throw std::invalid_argument("sliced_wasserstein: mixed dimensions");
    }
    SeededRng rng(seed);
    std::vector<double> dir(d), pa(a.size()), pb(b.size());
    double total = 0.0;
    for (int p = 0; p < n_projections; ++p) {
        double norm = 0.0;
        for (double& v : dir) {
            v = rng.next_normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : dir) v /= norm;
        auto project = [&](const LatentGrid& g) {
            double s = 0.0;
            for (size_t j = 0; j < d; ++j) s += dir[j] * g[j];
            return s;
        };
        std::transform(a.begin(), a.end(), pa.begin(), project);
        std::transform(b.begin(), b.end(), pb.begin(), project);
        total += wasserstein_1d(pa, pb);
    }
    return total / n_projections;
}

EvalReport distribution_error(const GaussianMixture& gm, const std::vector<LatentGrid>& samples,
                              const Condition& target, const EvalOptions& options) {
    if (samples.size() < 2) throw std::invalid_argument("distribution_error needs at least 2 samples");
    const size_t k = gm.n_components();
    EvalReport r;
    r.n_samples = samples.size();
    r.assigned_fraction.assign(k, 0.0);
    std::vector<std::vector<double>> sums(k, std::vector<double>(gm.dim(), 0.0));
    std::vector<size_t> counts(k, 0);
    for (const auto& x : samples) {
        const size_t m = nearest_mode(gm, x.data());
        counts[m] += 1;
        for (size_t j = 0; j < x.size(); ++j) sums[m][j] += x[j];
    }
    const double n = static_cast<double>(samples.size());
    r.mode_mean_error.assign(k, 0.0);
    for (size_t i = 0; i < k; ++i) {
        r.assigned_fraction[i] = counts[i] / n;
        r.weight_l1 += std::abs(r.assigned_fraction[i] - gm.weights[i]);
        if (counts[i] == 0) continue;
        double e = 0.0;
        for (size_t j = 0; j < gm.dim(); ++j) {
            const double diff = sums[i][j] / counts[i] - gm.means[i][j];
            e += diff * diff;
        }
        r.mode_mean_error[i] = std::sqrt(e);
        r.mean_err += r.assigned_fraction[i] * r.mode_mean_error[i];
    }
    const auto reference = sample_mixture(gm, options.reference_n, options.reference_seed);
    r.sliced_w           = sliced_wasserstein(samples, reference, options.n_projections, options.projection_seed);
    if (!target.is_null()) r.fidelity = mode_fidelity(gm, samples, target);
    return r;
}

namespace {

double l1(const LatentGrid& g) {
    double s = 0.0;
    for (double v : g.data()) s += std::abs(v);
    return s;
}

}  // namespace

std::map<std::string, DriftCurve> module_drift(
    const ModuleGraph& graph, const std::vector<std::vector<std::pair<LatentGrid, int>>>& trajectories,
    const NoiseSchedule& sched, const Condition& cond) {
    if (trajectories.empty()) throw std::invalid_argument("module_drift needs at least one trajectory");
    const size_t n_pairs = trajectories.front().size() - 1;
    std::map<std::string, DriftCurve> out;
    for (const auto& node : graph.nodes()) {
        out[node.name] = DriftCurve{std::vector<double>(n_pairs, 0.0), std::vector<int>(n_pairs, 0)};
    }
    for (const auto& traj : trajectories) {
        if (traj.size() != n_pairs + 1) throw std::invalid_argument("module_drift: trajectories differ in length");
        std::map<std::string, LatentGrid> prev = modular_features(graph, traj[0].first, traj[0].second, sched, cond);
        for (size_t k = 0; k < n_pairs; ++k) {
            auto cur = modular_features(graph, traj[k + 1].first, traj[k + 1].second, sched, cond);
            for (const auto& node : graph.nodes()) {
                const LatentGrid& a = prev.at(node.name);
                const LatentGrid& b = cur.at(node.name);
                const double denom  = l1(a);
                DriftCurve& curve   = out[node.name];
                if (denom == 0.0 || a.shape() != b.shape()) {
                    curve.degenerate_count[k] += 1;
                    continue;
                }
                curve.mean_drift[k] += l1(a - b) / denom;
            }
            prev = std::move(cur);
        }
    }
    for (auto& [name, curve] : out) {
        for (double& v : curve.mean_drift) v /= static_cast<double>(trajectories.size());
    }
    return out;
}

std::vector<double> frequency_evolution(const GenerationTrace& trace, int cutoff_bin, int n_bins) {
    std::vector<double> out;
    out.reserve(trace.steps.size());
    for (const auto& step : trace.steps) {
        if (!step.x0) throw std::invalid_argument("frequency_evolution needs x0 snapshots in the trace");
        out.push_back(low_frequency_fraction(radial_spectrum(*step.x0, n_bins), cutoff_bin));
    }
    return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(v.size());
    for (size_t i = 0; i < idx.size();) {
        size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (size_t k = i; k <= j; ++k) rank[idx[k]] = r;
        i = j + 1;
    }
    return rank;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman needs two equal-length series");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

void apply_axis_value(SamplerConfig& cfg, const std::string& field, const std::string& value) {
    const std::string key = "axis " + field;
    if (field == "T") {
        const long long v = parse_int(value, key);
        if (v < 1) throw ConfigError(key, "T must be >= 1");
        cfg.steps = static_cast<int>(v);
    } else if (field == "s") {
        cfg.s = parse_double(value, key);
    } else if (field == "beta") {
        cfg.beta = parse_double(value, key);
    } else if (field == "w") {
        cfg.w        = parse_double(value, key);
        cfg.policy.w = cfg.w;
    } else if (field == "m") {
        cfg.policy.m = static_cast<int>(parse_int(value, key));
    } else if (field == "k") {
        cfg.policy.k = static_cast<int>(parse_int(value, key));
    } else if (field == "ca_choice") {
        try {
            cfg.policy.ca_choice = parse_ca_choice(value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(key, e.what());
        }
    } else {
        throw ConfigError(key, "unknown sweep axis (expected T|s|beta|w|m|k|ca_choice)");
    }
}

std::vector<SamplerConfig> expand_sweep(const SweepSpec& spec) {
    if (spec.axes.empty()) throw ConfigError("axes", "sweep needs at least one axis");
    for (const auto& ax : spec.axes) {
        if (ax.values.empty()) throw ConfigError("axis " + ax.field, "axis has no values");
    }
    std::vector<SamplerConfig> out{spec.base};
    for (const auto& ax : spec.axes) {
        std::vector<SamplerConfig> next;
        for (const auto& cfg : out) {
            for (const auto& v : ax.values) {
                SamplerConfig c = cfg;
                apply_axis_value(c, ax.field, v);
                next.push_back(c);
            }
        }
        out = std::move(next);
    }
    return out;
}

namespace {

std::vector<uint64_t> seeds_for(uint64_t base, size_t n) {
    std::vector<uint64_t> s(n);
    for (size_t j = 0; j < n; ++j) s[j] = sample_seed(base, j);
    return s;
}

std::vector<LatentGrid> run_samples(const SamplerConfig& cfg, const DenoiserPair& dens, const CostModel& cost,
                                    const std::vector<uint64_t>& seeds, int jobs, double* tflops) {
    auto results = generate_batch(cfg, seeds, *dens.first, *dens.second, cost, jobs);
    std::vector<LatentGrid> samples;
    samples.reserve(results.size());
    for (auto& r : results) samples.push_back(std::move(r.sample));
    if (tflops && !results.empty()) *tflops = results.front().trace.total_flops / kTera;
    return samples;
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

}  // namespace

SweepResult sweep(const SweepSpec& spec, const DenoiserFactory& factory, const GaussianMixture& gm,
                  const CostModel& cost, int jobs, const EvalOptions& options) {
    if (spec.samples < 2) throw ConfigError("run.n_samples", "sweep needs at least 2 samples per point");
    const auto configs = expand_sweep(spec);
    const bool calibrate = spec.calibration_n && spec.evaluation_n;
    SweepResult result;
    const uint64_t cal_base  = mix64(spec.seed ^ hash_name("calibration"));
    const uint64_t eval_base = mix64(spec.seed ^ hash_name("evaluation"));

    for (const auto& cfg_in : configs) {
        SweepRow row;
        row.config      = cfg_in;
        row.config.seed = spec.seed;
        row.n           = spec.samples;
        try {
            row.config.validate();
            const DenoiserPair dens = factory(row.config);
            double tflops           = 0.0;
            const auto samples = run_samples(row.config, dens, cost, seeds_for(spec.seed, spec.samples), jobs, &tflops);
            row.report         = distribution_error(gm, samples, row.config.cond, options);
            row.report.tflops  = tflops;
            if (calibrate) {
                const auto cal = run_samples(row.config, dens, cost, seeds_for(cal_base, *spec.calibration_n), jobs,
                                             nullptr);
                const auto ev  = run_samples(row.config, dens, cost, seeds_for(eval_base, *spec.evaluation_n), jobs,
                                             nullptr);
                row.calibration_fidelity = mode_fidelity(gm, cal, row.config.cond);
                row.evaluation_fidelity  = mode_fidelity(gm, ev, row.config.cond);
            }
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        result.rows.push_back(std::move(row));
    }

    if (calibrate) {
        std::vector<double> a, b;
        for (const auto& r : result.rows) {
            if (r.calibration_fidelity && r.evaluation_fidelity) {
                a.push_back(*r.calibration_fidelity);
                b.push_back(*r.evaluation_fidelity);
            }
        }
        if (a.size() >= 2) result.calibration_spearman = spearman(a, b);
    }
    return result;
}

std::vector<std::string> sweep_csv_columns() {
    return {"T", "s", "beta", "w", "m", "k", "ca_choice", "seed", "n", "weight_l1", "mean_err", "sliced_w",
            "fidelity", "tflops", "error"};
}

std::string SweepResult::csv() const {
    std::ostringstream out;
    const auto cols = sweep_csv_columns();
    for (size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    out << "\n";
    for (const auto& r : rows) {
        const auto& c = r.config;
        out << c.steps << ',' << fmt6(c.s) << ',' << fmt6(c.beta) << ',' << fmt6(c.w) << ',' << c.policy.m << ','
            << c.policy.k << ',' << to_string(c.policy.ca_choice) << ',' << c.seed << ',' << r.n << ',';
        if (r.error.empty()) {
            out << fmt6(r.report.weight_l1) << ',' << fmt6(r.report.mean_err) << ',' << fmt6(r.report.sliced_w) << ','
                << (r.report.fidelity ? fmt6(*r.report.fidelity) : "") << ',' << fmt6(r.report.tflops) << ",";
        } else {
            out << ",,,,," << csv_escape(r.error);
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace postdiff
