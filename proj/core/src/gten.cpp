#include "guidecap/gten.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace gcap {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("gten: truncated header");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_gten(std::ostream& os, const Tensor& t) {
    os.write("GTEN", 4);
    put_u32(os, static_cast<uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u32(os, static_cast<uint32_t>(t.dim(i)));
    auto vals = t.values();
    std::vector<unsigned char> buf(vals.size() * 4);
    for (size_t i = 0; i < vals.size(); ++i) {
        uint32_t bits;
        std::memcpy(&bits, &vals[i], 4);
        buf[i * 4 + 0] = static_cast<unsigned char>(bits & 0xff);
        buf[i * 4 + 1] = static_cast<unsigned char>((bits >> 8) & 0xff);
        buf[i * 4 + 2] = static_cast<unsigned char>((bits >> 16) & 0xff);
        buf[i * 4 + 3] = static_cast<unsigned char>((bits >> 24) & 0xff);
    }
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!os) throw DataError("gten: write failed");
}

Tensor read_gten(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "GTEN", 4) != 0) throw DataError("gten: bad magic");
    const uint32_t rank = get_u32(is);
    if (rank > 8) throw DataError("gten: implausible rank " + std::to_string(rank));
    std::vector<int64_t> shape(rank);
    int64_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
        shape[i] = static_cast<int64_t>(get_u32(is));
        if (shape[i] <= 0) throw DataError("gten: non-positive dimension");
        numel *= shape[i];
    }
    std::vector<unsigned char> buf(static_cast<size_t>(numel) * 4);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!is) throw DataError("gten: truncated payload");
    std::vector<float> values(static_cast<size_t>(numel));
    for (size_t i = 0; i < values.size(); ++i) {
        const uint32_t bits = static_cast<uint32_t>(buf[i * 4 + 0]) | (static_cast<uint32_t>(buf[i * 4 + 1]) << 8) |
                              (static_cast<uint32_t>(buf[i * 4 + 2]) << 16) |
                              (static_cast<uint32_t>(buf[i * 4 + 3]) << 24);
        std::memcpy(&values[i], &bits, 4);
    }
    return Tensor::from(std::move(shape), std::move(values));
}

uint64_t gten_byte_size(const Tensor& t) {
    return 4 + 4 + 4ULL * static_cast<uint64_t>(t.rank()) + 4ULL * static_cast<uint64_t>(t.numel());
}

void save_tensor_file(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("gten: cannot open " + path.string() + " for writing");
    write_gten(os, t);
}

Tensor load_tensor_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("gten: cannot open " + path.string());
    return read_gten(is);
}

}  // namespace gcap
