// Copyright (C) 2026 Orthovox Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "orthovox/tensor.hpp"

namespace ovx {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error(std::string("truncated file reading ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32(std::ostream& os, const float* p, std::size_t n) {
    os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(float)));
}

inline void read_f32(std::istream& is, float* p, std::size_t n, const char* what) {
    if (!is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(float))))
        throw std::runtime_error(std::string("truncated payload reading ") + what);
}

inline void expect_magic(std::istream& is, const char* magic, const char* what) {
    char got[4];
    if (!is.read(got, 4)) throw std::runtime_error(std::string("missing magic in ") + what);
    if (std::memcmp(got, magic, 4) != 0) throw std::runtime_error(std::string("bad magic in ") + what);
}

}  // namespace detail

inline constexpr std::uint32_t kTensorFileVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Tensor file: "OVXT", version u32, rank u32, dims u32 x rank, little-endian f32 payload.
inline void write_tensor(std::ostream& os, const Tensor<float>& t) {
    os.write("OVXT", 4);
    detail::write_u32(os, kTensorFileVersion);
    detail::write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) detail::write_u32(os, static_cast<std::uint32_t>(d));
    detail::write_f32(os, t.data.data(), t.data.size());
}

inline void write_tensor(const std::string& path, const Tensor<float>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    write_tensor(os, t);
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline Tensor<float> read_tensor(std::istream& is) {
    detail::expect_magic(is, "OVXT", "tensor file");
    std::uint32_t ver = detail::read_u32(is, "tensor version");
    if (ver != kTensorFileVersion) throw std::runtime_error("unsupported tensor file version " + std::to_string(ver));
    std::uint32_t rank = detail::read_u32(is, "tensor rank");
    if (rank > 8) throw std::runtime_error("implausible tensor rank " + std::to_string(rank));
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(detail::read_u32(is, "tensor dim"));
    Tensor<float> t(shape);
    detail::read_f32(is, t.data.data(), t.data.size(), "tensor data");
    return t;
}

inline Tensor<float> read_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for reading: " + path);
    return read_tensor(is);
}

// Checkpoint: "OVXC", version u32, then records
// {name_len u32, utf-8 name, rank u32, dims u32 x rank, f32 payload} until EOF.
// std::map keeps record order deterministic.
using Checkpoint = std::map<std::string, Tensor<float>>;

inline void write_checkpoint(const std::string& path, const Checkpoint& cp) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write("OVXC", 4);
    detail::write_u32(os, kCheckpointVersion);
    for (const auto& [name, t] : cp) {
        detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) detail::write_u32(os, static_cast<std::uint32_t>(d));
        detail::write_f32(os, t.data.data(), t.data.size());
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for reading: " + path);
    detail::expect_magic(is, "OVXC", "checkpoint");
    std::uint32_t ver = detail::read_u32(is, "checkpoint version");
    if (ver != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(ver));
    Checkpoint cp;
    while (true) {
        char probe;
        if (!is.get(probe)) break;
        is.unget();
        std::uint32_t name_len = detail::read_u32(is, "record name length");
        if (name_len > 4096) throw std::runtime_error("implausible record name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw std::runtime_error("truncated record name");
        std::uint32_t rank = detail::read_u32(is, "record rank");
        if (rank > 8) throw std::runtime_error("implausible record rank");
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(detail::read_u32(is, "record dim"));
        Tensor<float> t(shape);
        detail::read_f32(is, t.data.data(), t.data.size(), name.c_str());
        if (!cp.emplace(name, std::move(t)).second) throw std::runtime_error("duplicate checkpoint record: " + name);
    }
    return cp;
}

}  // namespace ovx
