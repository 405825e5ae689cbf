#include "postdiff/grid_io.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace postdiff {

namespace {

constexpr char kMagic[4] = {'P', 'D', 'G', 'R'};

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
    const auto bits = std::bit_cast<uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("PDGR: truncated header");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("PDGR: truncated data");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

}  // namespace

void write_grid(std::ostream& out, const LatentGrid& grid) {
    out.write(kMagic, 4);
    put_u32(out, static_cast<uint32_t>(grid.shape().width));
    put_u32(out, static_cast<uint32_t>(grid.shape().height));
    put_u32(out, static_cast<uint32_t>(grid.shape().channels));
    for (double v : grid.data()) put_f64(out, v);
}

LatentGrid read_grid(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4)) throw std::runtime_error("PDGR: truncated header");
    if (std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("PDGR: bad magic");
    const uint32_t w = get_u32(in);
    const uint32_t h = get_u32(in);
    const uint32_t c = get_u32(in);
    const GridShape shape(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
    std::vector<double> data(shape.size());
    for (double& v : data) v = get_f64(in);
    return LatentGrid(shape, std::move(data));
}

std::vector<LatentGrid> read_grids(std::istream& in) {
    std::vector<LatentGrid> grids;
    while (in.peek() != std::char_traits<char>::eof()) grids.push_back(read_grid(in));
    return grids;
}

}  // namespace postdiff
