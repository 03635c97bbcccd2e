#include "umsn/core/archive.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "umsn/core/fsutil.hpp"

namespace umsn {

namespace {
constexpr char kMagic[8] = {'U', 'M', 'S', 'N', 'A', 'R', '0', '1'};
}

void save_archive(const std::string& path, const TensorArchive& entries) {
    std::ostringstream out;
    out.write(kMagic, 8);
    const std::uint32_t count = static_cast<std::uint32_t>(entries.size());
    out.write(reinterpret_cast<const char*>(&count), 4);
    for (const auto& [name, t] : entries) {
        const std::uint16_t nlen = static_cast<std::uint16_t>(name.size());
        out.write(reinterpret_cast<const char*>(&nlen), 2);
        out.write(name.data(), nlen);
        const std::uint8_t rank = static_cast<std::uint8_t>(t.rank());
        out.write(reinterpret_cast<const char*>(&rank), 1);
        for (int i = 0; i < t.rank(); ++i) {
            const std::uint32_t d = static_cast<std::uint32_t>(t.dim(i));
            out.write(reinterpret_cast<const char*>(&d), 4);
        }
        out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * 8));
    }
    write_file_atomic(path, out.str());
}

TensorArchive load_archive(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open archive: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("not a parameter archive: " + path);
    std::uint32_t count = 0;
    in.read(reinterpret_cast<char*>(&count), 4);
    TensorArchive entries;
    entries.reserve(count);
    for (std::uint32_t e = 0; e < count; ++e) {
        std::uint16_t nlen = 0;
        in.read(reinterpret_cast<char*>(&nlen), 2);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        std::uint8_t rank = 0;
        in.read(reinterpret_cast<char*>(&rank), 1);
        std::vector<int> shape(rank);
        for (int i = 0; i < rank; ++i) {
            std::uint32_t d = 0;
            in.read(reinterpret_cast<char*>(&d), 4);
            shape[static_cast<size_t>(i)] = static_cast<int>(d);
        }
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * 8));
        if (!in) throw std::runtime_error("truncated archive: " + path);
        entries.emplace_back(std::move(name), std::move(t));
    }
    return entries;
}

const Tensor& archive_get(const TensorArchive& archive, const std::string& name) {
    for (const auto& [n, t] : archive)
        if (n == name) return t;
    throw std::runtime_error("archive entry missing: " + name);
}

}  // namespace umsn
