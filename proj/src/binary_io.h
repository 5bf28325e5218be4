// Copyright 2026-present the nann project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Little-endian primitives shared by the binary model and index formats.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "nann/error.h"

namespace nann::detail {

class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& out) : out_(out) {
    }

    void
    bytes(std::string_view s) {
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    template <typename T>
    void
    uint(T v) {
        char buf[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            buf[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
        }
        out_.write(buf, sizeof(T));
    }

    void
    f32(float v) {
        uint(std::bit_cast<std::uint32_t>(v));
    }

    void
    f64(double v) {
        uint(std::bit_cast<std::uint64_t>(v));
    }

private:
    std::ostream& out_;
};

class BinaryReader {
public:
    BinaryReader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {
    }

    std::string
    bytes(std::size_t n) {
        std::string s(n, '\0');
        read_raw(s.data(), n);
        return s;
    }

    template <typename T>
    T
    uint() {
        unsigned char buf[sizeof(T)];
        read_raw(reinterpret_cast<char*>(buf), sizeof(T));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
        }
        return static_cast<T>(v);
    }

    float
    f32() {
        return std::bit_cast<float>(uint<std::uint32_t>());
    }

    double
    f64() {
        return std::bit_cast<double>(uint<std::uint64_t>());
    }

    std::uint64_t
    offset() const {
        return offset_;
    }

private:
    void
    read_raw(char* dst, std::size_t n) {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw Error(ErrorType::kParse,
                        what_ + ": truncated at byte offset " + std::to_string(offset_ + in_.gcount()));
        }
        offset_ += n;
    }

    std::istream& in_;
    std::string what_;
    std::uint64_t offset_{0};
};

}  // namespace nann::detail
