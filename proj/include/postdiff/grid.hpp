#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "postdiff/rng.hpp"

namespace postdiff {

struct GridShape {
    int width    = 1;
    int height   = 1;
    int channels = 1;

    GridShape() = default;
    GridShape(int w, int h, int c);

    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
    size_t size() const { return pixel_count() * channels; }
    std::string str() const;  // "WxHxC"

    bool operator==(const GridShape&) const = default;
};

// Parses "WxH" (one channel) or "WxHxC".
GridShape parse_shape(const std::string& text);

// Row-major, channel-last real field: index ((y * width) + x) * channels + c.
class LatentGrid {
public:
    LatentGrid() = default;
    explicit LatentGrid(GridShape shape, double fill = 0.0);
    LatentGrid(GridShape shape, std::vector<double> data);

    const GridShape& shape() const { return shape_; }
    size_t size() const { return data_.size(); }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double& at(int x, int y, int c) { return data_[index(x, y, c)]; }
    double at(int x, int y, int c) const { return data_[index(x, y, c)]; }

    size_t index(int x, int y, int c) const {
        return (static_cast<size_t>(y) * shape_.width + x) * shape_.channels + c;
    }

    bool all_finite() const;

    bool operator==(const LatentGrid&) const = default;

private:
    GridShape shape_;
    std::vector<double> data_;
};

// Element-wise helpers used across the sampler. Shapes must match.
LatentGrid operator+(const LatentGrid& a, const LatentGrid& b);
LatentGrid operator-(const LatentGrid& a, const LatentGrid& b);
LatentGrid operator*(double s, const LatentGrid& a);
// a * x + b * y
LatentGrid axpby(double a, const LatentGrid& x, double b, const LatentGrid& y);
double l2_norm(const LatentGrid& g);
double l2_distance(const LatentGrid& a, const LatentGrid& b);
void require_same_shape(const LatentGrid& a, const LatentGrid& b, const char* what);

LatentGrid make_noise_grid(const GridShape& shape, SeededRng& rng);

// Per-channel bilinear interpolation, half-pixel centers, edge clamping.
LatentGrid bilinear_upsample(const LatentGrid& grid, const GridShape& target);

// Block-mean pooling by an integer factor.
LatentGrid area_downsample(const LatentGrid& grid, int factor);

// Sparse matrix form of area_downsample: output element j is the mean of the
// input elements listed in sources(j), each weighted 1 / block_size().
class AreaPoolMap {
public:
    AreaPoolMap(const GridShape& input, int factor);

    const GridShape& input_shape() const { return input_; }
    const GridShape& output_shape() const { return output_; }
    int block_size() const { return factor_ * factor_; }
    std::vector<size_t> sources(size_t output_index) const;

private:
    GridShape input_;
    GridShape output_;
    int factor_;
};

// Radially binned |DFT|^2 (unnormalized, so the bins sum to sum |X_k|^2).
// Multi-channel grids average the per-channel spectra.
std::vector<double> radial_spectrum(const LatentGrid& grid, int n_bins);

// Energy share of bins [0, cutoff_bin] in a radial spectrum.
double low_frequency_fraction(const std::vector<double>& spectrum, int cutoff_bin);

}  // namespace postdiff
