#include "sps/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace sps {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'S', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "SPST I/O assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + 4);
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t offset) {
    std::uint32_t v = 0;
    std::memcpy(&v, in.data() + offset, 4);
    return v;
}

} // namespace

std::vector<std::uint8_t> write_tensor(const DescriptorMatrix& f) {
    const auto n = static_cast<std::size_t>(f.n_patches());
    const auto d = static_cast<std::size_t>(f.dim());
    std::vector<std::uint8_t> out;
    out.reserve(kSpstHeaderBytes + 8 * n * d);
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(f.shape().h_patches));
    put_u32(out, static_cast<std::uint32_t>(f.shape().w_patches));
    put_u32(out, static_cast<std::uint32_t>(f.shape().dim));
    put_u32(out, f.centered() ? 1u : 0u);
    const auto* payload = reinterpret_cast<const std::uint8_t*>(f.data().data());
    out.insert(out.end(), payload, payload + 8 * n * d);
    return out;
}

DescriptorMatrix read_tensor(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kSpstHeaderBytes)
        throw FormatError("SPST: truncated header (" + std::to_string(bytes.size()) +
                          " bytes, need " + std::to_string(kSpstHeaderBytes) + ")");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError("SPST: bad magic, expected \"SPST\"");
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kVersion)
        throw FormatError("SPST: unsupported version " + std::to_string(version) +
                          ", expected 1");
    const std::uint32_t h = get_u32(bytes, 8);
    const std::uint32_t w = get_u32(bytes, 12);
    const std::uint32_t d = get_u32(bytes, 16);
    const std::uint32_t flags = get_u32(bytes, 20);
    if (h == 0 || w == 0 || d == 0)
        throw FormatError("SPST: zero dimension in header (h, w and d must be positive)");
    if (flags > 1)
        throw FormatError("SPST: unknown flag bits " + std::to_string(flags));
    const std::size_t expected = 8ull * h * w * d;
    if (bytes.size() - kSpstHeaderBytes != expected)
        throw FormatError("SPST: payload is " + std::to_string(bytes.size() - kSpstHeaderBytes) +
                          " bytes, expected " + std::to_string(expected));
    GridShape shape(static_cast<int>(h), static_cast<int>(w), static_cast<int>(d));
    Mat data(shape.n_patches(), shape.dim);
    std::memcpy(data.data(), bytes.data() + kSpstHeaderBytes, expected);
    return DescriptorMatrix(shape, std::move(data), (flags & 1u) != 0);
}

void save_tensor(const std::string& path, const DescriptorMatrix& f) {
    const auto bytes = write_tensor(f);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw FormatError("SPST: cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw FormatError("SPST: short write to " + path);
}

DescriptorMatrix load_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in)
        throw FormatError("SPST: cannot open " + path);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::uint8_t> bytes(size);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in)
        throw FormatError("SPST: short read from " + path);
    return read_tensor(bytes);
}

} // namespace sps
