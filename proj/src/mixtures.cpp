#include "postdiff/mixtures.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "postdiff/kv_text.hpp"

namespace postdiff {

namespace {

std::vector<double> filled(size_t n, double v) { return std::vector<double>(n, v); }

}  // namespace

GaussianMixture single_gaussian(const GridShape& shape, double offset, double sigma) {
    GaussianMixture gm;
    gm.ref_shape = shape;
    std::vector<double> mu(shape.size());
    for (int y = 0; y < shape.height; ++y) {
        for (int x = 0; x < shape.width; ++x) {
            for (int c = 0; c < shape.channels; ++c) {
                mu[(static_cast<size_t>(y) * shape.width + x) * shape.channels + c] =
                    offset + 0.5 * (static_cast<double>(x) / shape.width - 0.5);
            }
        }
    }
    gm.weights   = {1.0};
    gm.means     = {mu};
    gm.variances = {filled(shape.size(), sigma * sigma)};
    gm.class_of  = {0};
    gm.validate();
    return gm;
}

GaussianMixture quadrant_mixture(const GridShape& shape, double sigma) {
    GaussianMixture gm;
    gm.ref_shape = shape;
    gm.weights   = {0.4, 0.3, 0.2, 0.1};
    for (int j = 0; j < 4; ++j) {
        std::vector<double> mu(shape.size());
        for (int y = 0; y < shape.height; ++y) {
            for (int x = 0; x < shape.width; ++x) {
                const int q = (x >= shape.width / 2 ? 1 : 0) + (y >= shape.height / 2 ? 2 : 0);
                for (int c = 0; c < shape.channels; ++c) {
                    mu[(static_cast<size_t>(y) * shape.width + x) * shape.channels + c] = q == j ? 1.5 : -0.5;
                }
            }
        }
        gm.means.push_back(std::move(mu));
        gm.variances.push_back(filled(shape.size(), sigma * sigma));
        gm.class_of.push_back(j);
    }
    gm.validate();
    return gm;
}

GaussianMixture structured_mixture(const GridShape& shape, double detail_amp, double sigma) {
    GaussianMixture gm;
    gm.ref_shape            = shape;
    gm.weights              = {0.25, 0.25, 0.25, 0.25};
    const double coeff[4]   = {1.0, -1.0, 0.5, -0.5};
    const double two_pi     = 2.0 * std::numbers::pi;
    for (int j = 0; j < 4; ++j) {
        std::vector<double> mu(shape.size());
        for (int y = 0; y < shape.height; ++y) {
            for (int x = 0; x < shape.width; ++x) {
                const double base =
                    std::sin(two_pi * x / shape.width) * std::cos(two_pi * y / shape.height);
                const double checker = ((x + y) % 2 == 0) ? 1.0 : -1.0;
                for (int c = 0; c < shape.channels; ++c) {
                    mu[(static_cast<size_t>(y) * shape.width + x) * shape.channels + c] =
                        base + coeff[j] * detail_amp * checker;
                }
            }
        }
        gm.means.push_back(std::move(mu));
        gm.variances.push_back(filled(shape.size(), sigma * sigma));
        gm.class_of.push_back(j);
    }
    gm.validate();
    return gm;
}

GaussianMixture builtin_mixture(const std::string& name) {
    if (name == "single") return single_gaussian(GridShape(8, 8, 1), 0.5, 0.5);
    if (name == "grid4") return quadrant_mixture(GridShape(16, 16, 1), 0.15);
    if (name == "structured") return structured_mixture(GridShape(16, 16, 1), 0.5, 0.2);
    if (name == "structured-overlap") return structured_mixture(GridShape(16, 16, 1), 0.06, 0.5);
    throw std::invalid_argument("unknown builtin mixture '" + name + "'");
}

std::vector<std::string> builtin_mixture_names() { return {"single", "grid4", "structured", "structured-overlap"}; }

namespace {

std::vector<std::vector<double>> parse_component_lists(const std::string& text, const std::string& key) {
    std::vector<std::vector<double>> out;
    std::string part;
    std::istringstream in(text);
    while (std::getline(in, part, ';')) out.push_back(parse_double_list(part, key));
    return out;
}

std::string join(const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ", ";
        s += format_double(v[i]);
    }
    return s;
}

}  // namespace

GaussianMixture parse_mixture(const std::string& text) {
    GaussianMixture gm;
    bool has_shape = false;
    for (const auto& sec : parse_kv_text(text)) {
        if (!sec.name.empty()) throw ConfigError(sec.name, "unknown mixture section");
        for (const auto& [k, v] : sec.entries) {
            if (k == "ref_shape") {
                try {
                    gm.ref_shape = parse_shape(v);
                } catch (const std::invalid_argument& e) {
                    throw ConfigError(k, e.what());
                }
                has_shape = true;
            } else if (k == "weights") {
                gm.weights = parse_double_list(v, k);
            } else if (k == "class_of") {
                for (double c : parse_double_list(v, k)) {
                    if (c != std::floor(c)) throw ConfigError(k, "class labels must be integers");
                    gm.class_of.push_back(static_cast<int>(c));
                }
            } else if (k == "means") {
                gm.means = parse_component_lists(v, k);
            } else if (k == "variances") {
                gm.variances = parse_component_lists(v, k);
            } else {
                throw ConfigError(k, "unknown mixture key");
            }
        }
    }
    if (!has_shape) throw ConfigError("ref_shape", "missing");
    for (auto& var : gm.variances) {
        if (var.size() == 1) var = filled(gm.dim(), var[0]);
    }
    try {
        gm.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("mixture", e.what());
    }
    return gm;
}

std::string format_mixture(const GaussianMixture& gm) {
    std::ostringstream out;
    out << "ref_shape = " << gm.ref_shape.str() << "\n";
    out << "weights = " << join(gm.weights) << "\n";
    out << "class_of = ";
    for (size_t i = 0; i < gm.class_of.size(); ++i) out << (i ? ", " : "") << gm.class_of[i];
    out << "\nmeans = ";
    for (size_t i = 0; i < gm.means.size(); ++i) out << (i ? " ; " : "") << join(gm.means[i]);
    out << "\nvariances = ";
    for (size_t i = 0; i < gm.variances.size(); ++i) out << (i ? " ; " : "") << join(gm.variances[i]);
    out << "\n";
    return out.str();
}

std::vector<LatentGrid> sample_mixture(const GaussianMixture& gm, size_t n, uint64_t seed) {
    SeededRng rng(seed);
    std::vector<double> cdf(gm.n_components());
    double acc = 0.0;
    for (size_t i = 0; i < cdf.size(); ++i) cdf[i] = (acc += gm.weights[i]);
    std::vector<LatentGrid> out;
    out.reserve(n);
    for (size_t s = 0; s < n; ++s) {
        const double u = rng.next_uniform() * acc;
        size_t comp    = 0;
        while (comp + 1 < cdf.size() && u > cdf[comp]) ++comp;
        LatentGrid g(gm.ref_shape);
        for (size_t j = 0; j < g.size(); ++j) {
            g[j] = gm.means[comp][j] + std::sqrt(gm.variances[comp][j]) * rng.next_normal();
        }
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace postdiff
