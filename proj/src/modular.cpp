#include "postdiff/modular.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace postdiff {

namespace {

std::vector<double> normal_vec(SeededRng rng, size_t n, double scale) {
    std::vector<double> v(n);
    for (double& x : v) x = scale * rng.next_normal();
    return v;
}

std::vector<double> uniform_vec(SeededRng rng, size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = lo + (hi - lo) * rng.next_uniform();
    return v;
}

// out[p, o] = sum_i w[o, i] * in[p, i] (+ bias[o])
LatentGrid per_pixel_affine(const LatentGrid& in, const std::vector<double>& w, int out_ch,
                            const std::vector<double>* bias) {
    const GridShape& s = in.shape();
    const int in_ch    = s.channels;
    LatentGrid out(GridShape(s.width, s.height, out_ch));
    const size_t pixels = s.pixel_count();
    for (size_t p = 0; p < pixels; ++p) {
        const double* src = &in.data()[p * in_ch];
        double* dst       = &out.data()[p * out_ch];
        for (int o = 0; o < out_ch; ++o) {
            double acc = bias ? (*bias)[o] : 0.0;
            for (int i = 0; i < in_ch; ++i) acc += w[static_cast<size_t>(o) * in_ch + i] * src[i];
            dst[o] = acc;
        }
    }
    return out;
}

LatentGrid box_blur3(const LatentGrid& in) {
    const GridShape& s = in.shape();
    LatentGrid out(s);
    for (int y = 0; y < s.height; ++y) {
        for (int x = 0; x < s.width; ++x) {
            for (int c = 0; c < s.channels; ++c) {
                double acc = 0.0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int xx = std::clamp(x + dx, 0, s.width - 1);
                        const int yy = std::clamp(y + dy, 0, s.height - 1);
                        acc += in.at(xx, yy, c);
                    }
                }
                out.at(x, y, c) = acc / 9.0;
            }
        }
    }
    return out;
}

std::vector<double> time_embedding(const std::vector<double>& amp, const std::vector<double>& freq,
                                   const std::vector<double>& phase, double tau) {
    std::vector<double> e(amp.size());
    for (size_t f = 0; f < e.size(); ++f) e[f] = amp[f] * std::sin(freq[f] * tau + phase[f]);
    return e;
}

void add_per_channel(LatentGrid& g, const std::vector<double>& v) {
    const int ch = g.shape().channels;
    for (size_t i = 0; i < g.size(); ++i) g[i] += v[i % ch];
}

void apply_tanh(LatentGrid& g) {
    for (double& v : g.data()) v = std::tanh(v);
}

struct Stages {
    const ModuleGraph& graph;
    const LatentGrid& x;
    double tau;
    double alpha_bar;
    const Condition& cond;

    LatentGrid stem() const {
        const auto& w = graph.weights();
        LatentGrid h  = per_pixel_affine(x, w.stem_w, graph.features(), &w.stem_b);
        add_per_channel(h, time_embedding(w.stem_amp, w.stem_freq, w.stem_phase, tau));
        apply_tanh(h);
        return h;
    }
    LatentGrid cross_attn(const LatentGrid& h) const {
        LatentGrid a = per_pixel_affine(h, graph.weights().attn_w, graph.features(), nullptr);
        add_per_channel(a, graph.class_embedding(cond));
        apply_tanh(a);
        return a;
    }
    LatentGrid deep(const LatentGrid& h, const LatentGrid& a) const {
        const auto& w = graph.weights();
        LatentGrid g  = per_pixel_affine(box_blur3(h + a), w.deep_w, graph.features(), &w.deep_b);
        add_per_channel(g, time_embedding(w.deep_amp, w.deep_freq, w.deep_phase, tau));
        apply_tanh(g);
        return g;
    }
    LatentGrid head(const LatentGrid& h, const LatentGrid& a, const LatentGrid& g) const {
        const auto& w     = graph.weights();
        LatentGrid mixed  = per_pixel_affine((h + a) + g, w.head_w, graph.channels(), &w.head_b);
        return axpby(std::sqrt(1.0 - alpha_bar), x, ModuleGraph::kHeadGain, mixed);
    }
};

Stages make_stages(const ModuleGraph& graph, const LatentGrid& x, int t, const NoiseSchedule& sched,
                   const Condition& cond) {
    if (!graph.supports(x.shape())) {
        throw std::invalid_argument("modular graph with " + std::to_string(graph.channels()) +
                                    " channels cannot process grid " + x.shape().str());
    }
    if (t < 1 || t > sched.steps()) throw std::invalid_argument("modular_forward: timestep out of range");
    const double tau = static_cast<double>(t) / sched.steps();
    return Stages{graph, x, tau, sched.alpha_bar(t), cond};
}

}  // namespace

ModuleGraph::ModuleGraph(uint64_t seed, int channels, int features)
    : seed_(seed), channels_(channels), features_(features) {
    if (channels < 1 || features < 1) throw std::invalid_argument("module graph needs positive widths");
    nodes_ = {
        {"stem", NodeTag::Other, false},
        {"cross_attn", NodeTag::CrossAttn, true},
        {"deep", NodeTag::DeepSkip, false},
        {"head", NodeTag::Other, false},
    };
    const SeededRng root(seed);
    const size_t f = features, c = channels;
    const double fan_f = 1.0 / std::sqrt(static_cast<double>(f));
    w_.stem_w     = normal_vec(root.substream("stem.w"), f * c, 1.0 / std::sqrt(static_cast<double>(c)));
    w_.stem_b     = normal_vec(root.substream("stem.b"), f, 0.1);
    w_.stem_amp   = normal_vec(root.substream("stem.amp"), f, 0.5);
    w_.stem_freq  = uniform_vec(root.substream("stem.freq"), f, 1.0, 6.0);
    w_.stem_phase = uniform_vec(root.substream("stem.phase"), f, 0.0, 6.283185307179586);
    w_.attn_w     = normal_vec(root.substream("attn.w"), f * f, fan_f);
    w_.deep_w     = normal_vec(root.substream("deep.w"), f * f, 1.5 * fan_f);
    w_.deep_b     = normal_vec(root.substream("deep.b"), f, 0.1);
    w_.deep_amp   = normal_vec(root.substream("deep.amp"), f, 0.5);
    w_.deep_freq  = uniform_vec(root.substream("deep.freq"), f, 1.0, 6.0);
    w_.deep_phase = uniform_vec(root.substream("deep.phase"), f, 0.0, 6.283185307179586);
    w_.head_w     = normal_vec(root.substream("head.w"), c * f, fan_f);
    w_.head_b     = normal_vec(root.substream("head.b"), c, 0.05);
}

const ModuleSpec& ModuleGraph::node(const std::string& name) const {
    for (const auto& n : nodes_) {
        if (n.name == name) return n;
    }
    throw std::invalid_argument("no module named '" + name + "'");
}

double ModuleGraph::head_lipschitz_bound() const {
    double fro = 0.0;
    for (double v : w_.head_w) fro += v * v;
    return kHeadGain * std::sqrt(fro);
}

std::vector<double> ModuleGraph::class_embedding(const Condition& cond) const {
    if (cond.is_null()) return std::vector<double>(features_, 0.0);
    const SeededRng rng = SeededRng(seed_).substream("class").substream(static_cast<uint64_t>(*cond.label));
    return normal_vec(rng, features_, 1.0);
}

Prediction modular_forward(const ModuleGraph& graph, const LatentGrid& x, int t, const NoiseSchedule& sched,
                           const Condition& cond, CacheHook& hook) {
    const Stages st = make_stages(graph, x, t, sched, cond);
    const GridShape feat(x.shape().width, x.shape().height, graph.features());
    Prediction out;

    auto run = [&](const ModuleSpec& node, auto&& compute) {
        const Decision d = hook.decide(node, x.shape());
        out.exec_log.push_back({node.name, node.tag, d});
        if (d == Decision::Reuse) {
            LatentGrid v = hook.reuse(node, feat);
            if (v.shape() != feat) {
                throw std::logic_error("cache returned features of shape " + v.shape().str() + " for node '" +
                                       node.name + "', expected " + feat.str());
            }
            return v;
        }
        LatentGrid v = compute();
        if (d == Decision::ExecuteAndStore) hook.store(node, v);
        return v;
    };

    const auto& nodes = graph.nodes();
    LatentGrid h = run(nodes[0], [&] { return st.stem(); });
    LatentGrid a = run(nodes[1], [&] { return st.cross_attn(h); });
    LatentGrid g = run(nodes[2], [&] { return st.deep(h, a); });

    const Decision dh = hook.decide(nodes[3], x.shape());
    if (dh == Decision::Reuse) throw std::logic_error("the head node cannot be reused");
    out.exec_log.push_back({nodes[3].name, nodes[3].tag, dh});
    out.eps = st.head(h, a, g);
    return out;
}

std::map<std::string, LatentGrid> modular_features(const ModuleGraph& graph, const LatentGrid& x, int t,
                                                   const NoiseSchedule& sched, const Condition& cond) {
    const Stages st = make_stages(graph, x, t, sched, cond);
    std::map<std::string, LatentGrid> f;
    f["stem"]       = st.stem();
    f["cross_attn"] = st.cross_attn(f["stem"]);
    f["deep"]       = st.deep(f["stem"], f["cross_attn"]);
    f["head"]       = st.head(f["stem"], f["cross_attn"], f["deep"]);
    return f;
}

Prediction ModularDenoiser::predict(const LatentGrid& x, int t, const NoiseSchedule& sched, const Condition& cond,
                                    CacheHook* hook) const {
    NoCacheHook plain;
    return modular_forward(graph_, x, t, sched, cond, hook ? *hook : plain);
}

}  // namespace postdiff
