#pragma once

#include <iosfwd>
#include <vector>

#include "postdiff/grid.hpp"

namespace postdiff {

// PDGR record: "PDGR", u32 width, u32 height, u32 channels (little-endian),
// then width*height*channels little-endian float64 values, row-major.
void write_grid(std::ostream& out, const LatentGrid& grid);
LatentGrid read_grid(std::istream& in);

// Reads consecutive records until end of stream.
std::vector<LatentGrid> read_grids(std::istream& in);

}  // namespace postdiff
