#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "humocon/core/errors.hpp"
#include "humocon/core/rng.hpp"
#include "humocon/core/tensor.hpp"

// Little binary helpers shared by the dataset, checkpoint and export
// containers. All multi-byte values are little-endian host order; containers
// carry format-version strings and are checked on read.

namespace humocon::io {

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* p, size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    HUMOCON_CHECK(static_cast<size_t>(is.gcount()) == n, IoError,
                  "unexpected end of file (truncated or corrupt container)");
}

inline void write_u64(std::ostream& os, uint64_t v) { write_bytes(os, &v, 8); }
inline uint64_t read_u64(std::istream& is) {
    uint64_t v;
    read_bytes(is, &v, 8);
    return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    write_bytes(os, s.data(), s.size());
}

inline std::string read_string(std::istream& is, uint64_t max_len = 1 << 20) {
    uint64_t n = read_u64(is);
    HUMOCON_CHECK(n <= max_len, IoError, "string length field out of range");
    std::string s(n, '\0');
    read_bytes(is, s.data(), n);
    return s;
}

template <class T>
const char* dtype_tag() {
    if constexpr (std::is_same_v<T, float>) return "f32";
    if constexpr (std::is_same_v<T, double>) return "f64";
    return "unknown";
}

template <class T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
    write_string(os, dtype_tag<T>());
    write_u64(os, t.shape.size());
    for (long d : t.shape) write_u64(os, static_cast<uint64_t>(d));
    write_bytes(os, t.data.data(), t.data.size() * sizeof(T));
}

template <class T>
Tensor<T> read_tensor(std::istream& is) {
    std::string tag = read_string(is, 16);
    HUMOCON_CHECK(tag == dtype_tag<T>(), IoError,
                  std::string("dtype mismatch: expected ") + dtype_tag<T>() + ", found " + tag);
    uint64_t nd = read_u64(is);
    HUMOCON_CHECK(nd <= 8, IoError, "tensor rank out of range");
    Shape s(nd);
    for (auto& d : s) d = static_cast<long>(read_u64(is));
    Tensor<T> t(s);
    read_bytes(is, t.data.data(), t.data.size() * sizeof(T));
    return t;
}

inline void write_i64_vec(std::ostream& os, const std::vector<long>& v) {
    write_u64(os, v.size());
    for (long x : v) write_u64(os, static_cast<uint64_t>(x));
}

inline std::vector<long> read_i64_vec(std::istream& is) {
    uint64_t n = read_u64(is);
    HUMOCON_CHECK(n <= (1ULL << 32), IoError, "vector length out of range");
    std::vector<long> v(n);
    for (auto& x : v) x = static_cast<long>(read_u64(is));
    return v;
}

inline uint64_t file_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    HUMOCON_CHECK(f.good(), IoError, "cannot open " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (f) {
        f.read(buf, sizeof(buf));
        h = fnv1a64(buf, static_cast<size_t>(f.gcount()), h);
    }
    return h;
}

}  // namespace humocon::io
