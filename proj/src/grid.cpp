#include "postdiff/grid.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

namespace postdiff {

GridShape::GridShape(int w, int h, int c) : width(w), height(h), channels(c) {
    if (w < 1 || h < 1 || c < 1) {
        throw std::invalid_argument("grid shape must be positive, got " + std::to_string(w) + "x" +
                                    std::to_string(h) + "x" + std::to_string(c));
    }
}

std::string GridShape::str() const {
    return std::to_string(width) + "x" + std::to_string(height) + "x" + std::to_string(channels);
}

GridShape parse_shape(const std::string& text) {
    std::vector<int> parts;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t next = text.find('x', pos);
        if (next == std::string::npos) next = text.size();
        const std::string tok = text.substr(pos, next - pos);
        if (tok.empty()) throw std::invalid_argument("malformed shape '" + text + "'");
        size_t used = 0;
        int v       = 0;
        try {
            v = std::stoi(tok, &used);
        } catch (const std::exception&) {
            throw std::invalid_argument("malformed shape '" + text + "'");
        }
        if (used != tok.size()) throw std::invalid_argument("malformed shape '" + text + "'");
        parts.push_back(v);
        pos = next + 1;
    }
    if (parts.size() == 2) return GridShape(parts[0], parts[1], 1);
    if (parts.size() == 3) return GridShape(parts[0], parts[1], parts[2]);
    throw std::invalid_argument("malformed shape '" + text + "'");
}

LatentGrid::LatentGrid(GridShape shape, double fill) : shape_(shape), data_(shape.size(), fill) {}

LatentGrid::LatentGrid(GridShape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
        throw std::invalid_argument("grid data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_.str());
    }
}

bool LatentGrid::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const LatentGrid& a, const LatentGrid& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                                    b.shape().str());
    }
}

LatentGrid axpby(double a, const LatentGrid& x, double b, const LatentGrid& y) {
    require_same_shape(x, y, "axpby");
    LatentGrid out(x.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a * x[i] + b * y[i];
    return out;
}

LatentGrid operator+(const LatentGrid& a, const LatentGrid& b) {
    require_same_shape(a, b, "operator+");
    LatentGrid out(a.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

LatentGrid operator-(const LatentGrid& a, const LatentGrid& b) {
    require_same_shape(a, b, "operator-");
    LatentGrid out(a.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

LatentGrid operator*(double s, const LatentGrid& a) {
    LatentGrid out(a.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = s * a[i];
    return out;
}

double l2_norm(const LatentGrid& g) {
    double s = 0.0;
    for (double v : g.data()) s += v * v;
    return std::sqrt(s);
}

double l2_distance(const LatentGrid& a, const LatentGrid& b) {
    require_same_shape(a, b, "l2_distance");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

LatentGrid make_noise_grid(const GridShape& shape, SeededRng& rng) {
    LatentGrid g(shape);
    for (double& v : g.data()) v = rng.next_normal();
    return g;
}

namespace {

struct AxisTap {
    int lo;
    int hi;
    double frac;
};

// Half-pixel-center source coordinate for each destination index, clamped.
std::vector<AxisTap> axis_taps(int src, int dst) {
    std::vector<AxisTap> taps(dst);
    const double scale = static_cast<double>(src) / dst;
    for (int i = 0; i < dst; ++i) {
        double s = (i + 0.5) * scale - 0.5;
        s        = std::clamp(s, 0.0, static_cast<double>(src - 1));
        int lo   = static_cast<int>(std::floor(s));
        int hi   = std::min(lo + 1, src - 1);
        taps[i]  = {lo, hi, s - lo};
    }
    return taps;
}

}  // namespace

LatentGrid bilinear_upsample(const LatentGrid& grid, const GridShape& target) {
    const GridShape& src = grid.shape();
    if (target.channels != src.channels) {
        throw std::invalid_argument("bilinear_upsample: channel mismatch " + src.str() + " -> " + target.str());
    }
    if (target.width < src.width || target.height < src.height) {
        throw std::invalid_argument("bilinear_upsample: target " + target.str() + " smaller than source " +
                                    src.str());
    }
    const auto xs = axis_taps(src.width, target.width);
    const auto ys = axis_taps(src.height, target.height);
    LatentGrid out(target);
    for (int y = 0; y < target.height; ++y) {
        const AxisTap& ty = ys[y];
        for (int x = 0; x < target.width; ++x) {
            const AxisTap& tx = xs[x];
            for (int c = 0; c < target.channels; ++c) {
                const double top = (1.0 - tx.frac) * grid.at(tx.lo, ty.lo, c) + tx.frac * grid.at(tx.hi, ty.lo, c);
                const double bot = (1.0 - tx.frac) * grid.at(tx.lo, ty.hi, c) + tx.frac * grid.at(tx.hi, ty.hi, c);
                out.at(x, y, c)  = (1.0 - ty.frac) * top + ty.frac * bot;
            }
        }
    }
    return out;
}

AreaPoolMap::AreaPoolMap(const GridShape& input, int factor) : input_(input), factor_(factor) {
    if (factor < 1) throw std::invalid_argument("area pooling factor must be positive");
    if (input.width % factor != 0 || input.height % factor != 0) {
        throw std::invalid_argument("area pooling: shape " + input.str() + " not divisible by factor " +
                                    std::to_string(factor));
    }
    output_ = GridShape(input.width / factor, input.height / factor, input.channels);
}

std::vector<size_t> AreaPoolMap::sources(size_t output_index) const {
    const int c  = static_cast<int>(output_index % output_.channels);
    const size_t p = output_index / output_.channels;
    const int ox = static_cast<int>(p % output_.width);
    const int oy = static_cast<int>(p / output_.width);
    std::vector<size_t> idx;
    idx.reserve(block_size());
    for (int dy = 0; dy < factor_; ++dy) {
        for (int dx = 0; dx < factor_; ++dx) {
            const int x = ox * factor_ + dx;
            const int y = oy * factor_ + dy;
            idx.push_back((static_cast<size_t>(y) * input_.width + x) * input_.channels + c);
        }
    }
    return idx;
}

LatentGrid area_downsample(const LatentGrid& grid, int factor) {
    const AreaPoolMap map(grid.shape(), factor);
    LatentGrid out(map.output_shape());
    const double inv = 1.0 / map.block_size();
    for (size_t j = 0; j < out.size(); ++j) {
        double s = 0.0;
        for (size_t i : map.sources(j)) s += grid[i];
        out[j] = s * inv;
    }
    return out;
}

namespace {

// Signed frequency in cycles per sample for DFT index k of an n-point axis.
double signed_freq(int k, int n) {
    const int kk = (k <= n / 2) ? k : k - n;
    return static_cast<double>(kk) / n;
}

// Separable 2-D DFT of one channel, returns |X|^2 in row-major order.
std::vector<double> power_2d(const LatentGrid& grid, int c) {
    const int w = grid.shape().width;
    const int h = grid.shape().height;
    using cd    = std::complex<double>;
    std::vector<cd> rows(static_cast<size_t>(w) * h);

    auto twiddles = [](int n) {
        std::vector<cd> t(n);
        for (int k = 0; k < n; ++k) t[k] = std::polar(1.0, -2.0 * std::numbers::pi * k / n);
        return t;
    };
    const auto tw = twiddles(w);
    const auto th = twiddles(h);

    for (int y = 0; y < h; ++y) {
        for (int kx = 0; kx < w; ++kx) {
            cd acc = 0.0;
            for (int x = 0; x < w; ++x) acc += grid.at(x, y, c) * tw[(static_cast<size_t>(kx) * x) % w];
            rows[static_cast<size_t>(y) * w + kx] = acc;
        }
    }
    std::vector<double> power(static_cast<size_t>(w) * h);
    for (int kx = 0; kx < w; ++kx) {
        for (int ky = 0; ky < h; ++ky) {
            cd acc = 0.0;
            for (int y = 0; y < h; ++y) acc += rows[static_cast<size_t>(y) * w + kx] * th[(static_cast<size_t>(ky) * y) % h];
            power[static_cast<size_t>(ky) * w + kx] = std::norm(acc);
        }
    }
    return power;
}

}  // namespace

std::vector<double> radial_spectrum(const LatentGrid& grid, int n_bins) {
    if (n_bins < 1) throw std::invalid_argument("radial_spectrum: n_bins must be positive");
    const int w = grid.shape().width;
    const int h = grid.shape().height;

    double fx_max = 0.0, fy_max = 0.0;
    for (int k = 0; k < w; ++k) fx_max = std::max(fx_max, std::abs(signed_freq(k, w)));
    for (int k = 0; k < h; ++k) fy_max = std::max(fy_max, std::abs(signed_freq(k, h)));
    const double r_max = std::hypot(fx_max, fy_max);

    std::vector<int> bin_of(static_cast<size_t>(w) * h, 0);
    for (int ky = 0; ky < h; ++ky) {
        for (int kx = 0; kx < w; ++kx) {
            const double r = std::hypot(signed_freq(kx, w), signed_freq(ky, h));
            int b          = r_max > 0.0 ? static_cast<int>(std::floor(r / r_max * n_bins)) : 0;
            bin_of[static_cast<size_t>(ky) * w + kx] = std::clamp(b, 0, n_bins - 1);
        }
    }

    std::vector<double> bins(n_bins, 0.0);
    const int channels = grid.shape().channels;
    for (int c = 0; c < channels; ++c) {
        const auto power = power_2d(grid, c);
        for (size_t i = 0; i < power.size(); ++i) bins[bin_of[i]] += power[i];
    }
    for (double& b : bins) b /= channels;
    return bins;
}

double low_frequency_fraction(const std::vector<double>& spectrum, int cutoff_bin) {
    double total = 0.0, low = 0.0;
    for (size_t b = 0; b < spectrum.size(); ++b) {
        total += spectrum[b];
        if (static_cast<int>(b) <= cutoff_bin) low += spectrum[b];
    }
    // an all-zero field has no high-frequency content
    return total > 0.0 ? low / total : 1.0;
}

}  // namespace postdiff
