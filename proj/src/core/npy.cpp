#include "umsn/core/npy.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "umsn/core/fsutil.hpp"

namespace umsn {

void save_npy(const std::string& path, const Tensor& t) {
    std::ostringstream header;
    header << "{'descr': '<f8', 'fortran_order': False, 'shape': (";
    for (int i = 0; i < t.rank(); ++i) header << t.dim(i) << (t.rank() == 1 ? "," : (i + 1 < t.rank() ? ", " : ""));
    header << "), }";
    std::string h = header.str();
    // pad with spaces so that 10 + len(header) + 1 is a multiple of 64
    const size_t unpadded = 10 + h.size() + 1;
    h.append((64 - unpadded % 64) % 64, ' ');
    h.push_back('\n');

    std::ostringstream body;
    const char magic[8] = {'\x93', 'N', 'U', 'M', 'P', 'Y', '\x01', '\x00'};
    body.write(magic, 8);
    const std::uint16_t hlen = static_cast<std::uint16_t>(h.size());
    body.write(reinterpret_cast<const char*>(&hlen), 2);
    body.write(h.data(), static_cast<std::streamsize>(h.size()));
    body.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * 8));
    write_file_atomic(path, body.str());
}

Tensor load_npy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open npy file: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw std::runtime_error("not an npy file: " + path);
    std::uint16_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 2);
    std::string h(hlen, '\0');
    in.read(h.data(), hlen);
    if (h.find("'<f8'") == std::string::npos) throw std::runtime_error("npy: expected little-endian float64: " + path);
    if (h.find("'fortran_order': False") == std::string::npos)
        throw std::runtime_error("npy: expected C-order array: " + path);
    const size_t lp = h.find('(');
    const size_t rp = h.find(')', lp);
    if (lp == std::string::npos || rp == std::string::npos) throw std::runtime_error("npy: bad header: " + path);
    std::vector<int> shape;
    std::string dims = h.substr(lp + 1, rp - lp - 1);
    std::stringstream ss(dims);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::string trimmed;
        for (char c : tok)
            if (c != ' ') trimmed += c;
        if (!trimmed.empty()) shape.push_back(std::stoi(trimmed));
    }
    if (shape.empty()) throw std::runtime_error("npy: scalar arrays unsupported: " + path);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * 8));
    if (!in) throw std::runtime_error("npy: truncated data: " + path);
    return t;
}

}  // namespace umsn
