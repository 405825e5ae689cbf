#include "postdiff/config.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "postdiff/kv_text.hpp"
#include "postdiff/mixtures.hpp"
#include "postdiff/modular.hpp"

namespace postdiff {

namespace {

namespace fs = std::filesystem;

struct KeyDefault {
    const char* key;
    const char* value;
};

// Canonical order of the effective configuration.
constexpr KeyDefault kDefaults[] = {
    {"model.mixture", "grid4"},
    {"model.denoiser", "analytic"},
    {"model.graph_seed", "0"},
    {"model.cost", "sd15-like"},
    {"sampler.T", "20"},
    {"sampler.s", "0"},
    {"sampler.beta", "1"},
    {"sampler.w", "1"},
    {"sampler.schedule", "linear"},
    {"sampler.shape", ""},
    {"sampler.class", "null"},
    {"cache.k", "2"},
    {"cache.m", "20"},
    {"cache.ca_choice", "off"},
    {"cache.deep_cache", "false"},
    {"run.seed", "0"},
    {"run.n_samples", "64"},
    {"run.out", "out"},
    {"sweep.axes", ""},
    {"sweep.calibration_n", ""},
    {"sweep.evaluation_n", ""},
};

struct Preset {
    const char* name;
    const char* text;
};

// Toy-scale counterparts of the per-model settings; shapes are 16x16 so that
// beta = 3/4 gives a 12x12 low-resolution grid.
constexpr Preset kPresets[] = {
    {"sd15-pd",
     "[model]\nmixture = grid4\ndenoiser = analytic\ncost = sd15-like\n"
     "[sampler]\nT = 20\ns = 0.5\nbeta = 0.5\nw = 7.5\nclass = 0\n"
     "[cache]\nk = 2\nm = 15\nca_choice = cond\ndeep_cache = true\n"},
    {"lcm-pd",
     "[model]\nmixture = grid4\ndenoiser = analytic\ncost = sd15-like\n"
     "[sampler]\nT = 8\ns = 0.5\nbeta = 0.5\nw = 7.5\nclass = 0\n"
     "[cache]\nk = 2\nm = 4\nca_choice = cond\ndeep_cache = false\n"},
    {"sdxl-pd",
     "[model]\nmixture = grid4\ndenoiser = modular\ncost = sd15-like\n"
     "[sampler]\nT = 20\ns = 0.2\nbeta = 0.75\nw = 5\nclass = 0\n"
     "[cache]\nk = 2\nm = 15\nca_choice = cond\ndeep_cache = true\n"},
    {"pixart-pd",
     "[model]\nmixture = grid4\ndenoiser = modular\ncost = sd15-like\n"
     "[sampler]\nT = 20\ns = 0.5\nbeta = 0.75\nw = 4.5\nclass = 0\n"
     "[cache]\nk = 2\nm = 15\nca_choice = cond\ndeep_cache = false\n"},
};

bool is_builtin_mixture(const std::string& v) {
    const auto names = builtin_mixture_names();
    return std::find(names.begin(), names.end(), v) != names.end();
}

bool is_builtin_cost(const std::string& v) {
    const auto names = builtin_cost_model_names();
    return std::find(names.begin(), names.end(), v) != names.end();
}

std::string absolutize(const std::string& value, const std::string& base_dir) {
    if (value.empty()) return value;
    fs::path p(value);
    if (p.is_relative()) p = fs::path(base_dir) / p;
    return fs::absolute(p).lexically_normal().string();
}

std::string read_file(const std::string& path, const std::string& key) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(key, "cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<std::string>& RunConfig::known_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& d : kDefaults) k.emplace_back(d.key);
        return k;
    }();
    return keys;
}

RunConfig::RunConfig() {
    for (const auto& d : kDefaults) values_[d.key] = d.value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!values_.contains(key)) throw ConfigError(key, "unknown configuration key");
    values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(key, "unknown configuration key");
    return it->second;
}

void RunConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError(assignment, "override must look like section.key=value");
    const std::string key   = trim(assignment.substr(0, eq));
    std::string value       = trim(assignment.substr(eq + 1));
    if (!values_.contains(key)) throw ConfigError(key, "unknown configuration key");
    if ((key == "model.mixture" && !is_builtin_mixture(value)) || (key == "model.cost" && !is_builtin_cost(value)) ||
        key == "run.out") {
        value = absolutize(value, fs::current_path().string());
    }
    values_[key] = value;
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& base_dir) {
    RunConfig cfg;
    for (const auto& sec : parse_kv_text(text)) {
        if (sec.name.empty()) {
            const std::string k = sec.entries.front().first;
            throw ConfigError(k, "key outside of a [section]");
        }
        for (const auto& [k, v] : sec.entries) {
            const std::string key = sec.name + "." + k;
            std::string value     = v;
            if ((key == "model.mixture" && !is_builtin_mixture(value)) ||
                (key == "model.cost" && !is_builtin_cost(value)) || key == "run.out") {
                value = absolutize(value, base_dir);
            }
            cfg.set(key, value);
        }
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    const std::string text = read_file(path, "--config");
    const fs::path dir     = fs::absolute(fs::path(path)).parent_path();
    return from_text(text, dir.string());
}

RunConfig RunConfig::preset(const std::string& name) {
    for (const auto& p : kPresets) {
        if (name == p.name) return from_text(p.text);
    }
    throw ConfigError("--preset", "unknown preset '" + name + "'");
}

std::vector<std::string> RunConfig::preset_names() {
    std::vector<std::string> out;
    for (const auto& p : kPresets) out.emplace_back(p.name);
    return out;
}

std::string RunConfig::format() const {
    std::ostringstream out;
    std::string section;
    for (const auto& key : known_keys()) {
        const auto dot         = key.find('.');
        const std::string sect = key.substr(0, dot);
        if (sect != section) {
            if (!section.empty()) out << "\n";
            out << "[" << sect << "]\n";
            section = sect;
        }
        out << key.substr(dot + 1) << " = " << values_.at(key) << "\n";
    }
    return out.str();
}

std::vector<SweepAxis> parse_axes(const std::string& text) {
    std::vector<SweepAxis> axes;
    std::istringstream in(text);
    std::string part;
    while (std::getline(in, part, ';')) {
        part = trim(part);
        if (part.empty()) continue;
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw ConfigError("sweep.axes", "axis '" + part + "' must look like field=v1,v2");
        SweepAxis ax;
        ax.field = trim(part.substr(0, eq));
        std::istringstream vs(part.substr(eq + 1));
        std::string v;
        while (std::getline(vs, v, ',')) {
            v = trim(v);
            if (v.empty()) throw ConfigError("sweep.axes", "empty value in axis '" + ax.field + "'");
            ax.values.push_back(v);
        }
        if (ax.values.empty()) throw ConfigError("sweep.axes", "axis '" + ax.field + "' has no values");
        // validate the field name and value syntax up front
        SamplerConfig probe;
        for (const auto& val : ax.values) apply_axis_value(probe, ax.field, val);
        axes.push_back(std::move(ax));
    }
    return axes;
}

std::string axes_preset(const std::string& name, int steps) {
    if (name == "s-grid") return "s=0.1,0.2,0.3,0.4,0.5,0.6";
    if (name == "beta-grid") return "beta=0.375,0.5,0.625,0.75,0.875";
    if (name == "k-ablation") return "k=1,2,3,4,5";
    if (name == "m-ablation") {
        std::string out = "m=";
        const double fracs[] = {0.45, 0.6, 0.75, 0.9};
        for (size_t i = 0; i < 4; ++i) {
            out += (i ? "," : "") + std::to_string(static_cast<int>(std::lround(fracs[i] * steps)));
        }
        return out;
    }
    throw ConfigError("--axes", "unknown axes preset '" + name + "' (s-grid|beta-grid|k-ablation|m-ablation)");
}

namespace {

template <typename F>
auto checked(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(key, e.what());
    }
}

size_t positive_size(const RunConfig& cfg, const std::string& key) {
    const long long v = parse_int(cfg.get(key), key);
    if (v < 1) throw ConfigError(key, "must be >= 1");
    return static_cast<size_t>(v);
}

}  // namespace

ResolvedRun resolve(const RunConfig& cfg) {
    ResolvedRun r;

    const std::string& mix = cfg.get("model.mixture");
    r.mixture = checked("model.mixture", [&] {
        return is_builtin_mixture(mix) ? builtin_mixture(mix) : parse_mixture(read_file(mix, "model.mixture"));
    });

    const std::string& den = cfg.get("model.denoiser");
    if (den == "analytic") {
        r.denoiser = DenoiserKind::Analytic;
    } else if (den == "modular") {
        r.denoiser = DenoiserKind::Modular;
    } else {
        throw ConfigError("model.denoiser", "expected analytic|modular, got '" + den + "'");
    }
    r.graph_seed = static_cast<uint64_t>(parse_int(cfg.get("model.graph_seed"), "model.graph_seed"));

    const std::string& cost = cfg.get("model.cost");
    r.cost = checked("model.cost", [&] {
        return std::make_shared<const CostModel>(is_builtin_cost(cost)
                                                     ? builtin_cost_model(cost)
                                                     : parse_cost_model(read_file(cost, "model.cost"), cost));
    });

    SamplerConfig& s = r.sampler;
    s.steps = static_cast<int>(parse_int(cfg.get("sampler.T"), "sampler.T"));
    if (s.steps < 1) throw ConfigError("sampler.T", "must be >= 1");
    s.s    = parse_double(cfg.get("sampler.s"), "sampler.s");
    s.beta = parse_double(cfg.get("sampler.beta"), "sampler.beta");
    s.w    = parse_double(cfg.get("sampler.w"), "sampler.w");
    s.schedule = checked("sampler.schedule", [&] { return parse_schedule_kind(cfg.get("sampler.schedule")); });
    const std::string& shape = cfg.get("sampler.shape");
    s.full_shape = shape.empty() ? r.mixture.ref_shape : checked("sampler.shape", [&] { return parse_shape(shape); });
    const std::string& cls = cfg.get("sampler.class");
    if (cls == "null") {
        s.cond = Condition::null();
    } else {
        const long long c = parse_int(cls, "sampler.class");
        if (c < 0 || c >= r.mixture.n_classes()) throw ConfigError("sampler.class", "class outside mixture classes");
        s.cond = Condition::cls(static_cast<int>(c));
    }

    s.policy.k = static_cast<int>(parse_int(cfg.get("cache.k"), "cache.k"));
    s.policy.m = static_cast<int>(parse_int(cfg.get("cache.m"), "cache.m"));
    s.policy.ca_choice =
        checked("cache.ca_choice", [&] { return parse_ca_choice(cfg.get("cache.ca_choice")); });
    s.policy.deep_enabled = parse_bool(cfg.get("cache.deep_cache"), "cache.deep_cache");
    s.policy.w            = s.w;
    checked("cache.k", [&] {
        if (s.policy.k < 1) throw std::invalid_argument("must be >= 1");
        return 0;
    });
    checked("cache.m", [&] {
        s.policy.validate(s.steps);
        return 0;
    });
    s.seed = static_cast<uint64_t>(parse_int(cfg.get("run.seed"), "run.seed"));
    checked("sampler", [&] {
        s.validate();
        return 0;
    });

    if (r.denoiser == DenoiserKind::Analytic) {
        if (s.full_shape != r.mixture.ref_shape) {
            throw ConfigError("sampler.shape", "analytic denoiser needs the mixture shape " + r.mixture.ref_shape.str());
        }
        checked("sampler.beta", [&] {
            make_gm_denoisers(r.mixture, s);
            return 0;
        });
    }

    r.n_samples = positive_size(cfg, "run.n_samples");
    r.out_dir   = cfg.get("run.out");
    r.axes      = parse_axes(cfg.get("sweep.axes"));
    if (!cfg.get("sweep.calibration_n").empty()) r.calibration_n = positive_size(cfg, "sweep.calibration_n");
    if (!cfg.get("sweep.evaluation_n").empty()) r.evaluation_n = positive_size(cfg, "sweep.evaluation_n");
    return r;
}

DenoiserPair ResolvedRun::make_denoisers(const SamplerConfig& cfg) const {
    if (denoiser == DenoiserKind::Analytic) return make_gm_denoisers(mixture, cfg);
    auto d = std::make_shared<const ModularDenoiser>(ModuleGraph(graph_seed, cfg.full_shape.channels));
    return {d, d};
}

}  // namespace postdiff
