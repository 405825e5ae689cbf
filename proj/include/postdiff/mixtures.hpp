#pragma once

#include <string>
#include <vector>

#include "postdiff/denoise.hpp"

namespace postdiff {

// N(mean, sigma^2 I) with a smooth ramp mean of the given offset.
GaussianMixture single_gaussian(const GridShape& shape, double offset, double sigma);

// Four modes, one raised quadrant each, weights 0.4/0.3/0.2/0.1, class = mode.
GaussianMixture quadrant_mixture(const GridShape& shape, double sigma);

// Shared low-frequency sinusoid base plus a mode-specific checkerboard
// detail c_j * detail_amp (c = +1, -1, +0.5, -0.5); equal weights, class = mode.
GaussianMixture structured_mixture(const GridShape& shape, double detail_amp, double sigma);

// "single", "grid4", "structured", "structured-overlap".
GaussianMixture builtin_mixture(const std::string& name);
std::vector<std::string> builtin_mixture_names();

// Key-value mixture file: ref_shape, weights, class_of, means, variances;
// means/variances hold one comma list per component separated by ';', a
// single variance value is broadcast over the component.
GaussianMixture parse_mixture(const std::string& text);
std::string format_mixture(const GaussianMixture& gm);

// Independent draws from the clean law.
std::vector<LatentGrid> sample_mixture(const GaussianMixture& gm, size_t n, uint64_t seed);

}  // namespace postdiff
