#pragma once

#include "mrf/common.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace mrf::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written by memcpy");

using Bytes = std::vector<std::byte>;
using Digest = std::array<std::uint8_t, 32>;

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a64(std::span<const std::byte> data, std::uint64_t state = kFnvOffset);

Digest sha256(std::span<const std::byte> data);

// Incremental SHA-256 for streamed content.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;
    void update(std::span<const std::byte> data);
    Digest finish();

private:
    void* ctx_;
};
std::string to_hex(std::span<const std::uint8_t> digest);
std::string sha256_hex(std::span<const std::byte> data);
std::string file_sha256_hex(const std::filesystem::path& path);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::byte> data);

class Writer {
public:
    template <class T>
        requires std::is_trivially_copyable_v<T>
    void put(const T& value) {
        const auto* p = reinterpret_cast<const std::byte*>(&value);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }

    template <class T>
        requires std::is_trivially_copyable_v<T>
    void put_array(std::span<const T> values) {
        const auto* p = reinterpret_cast<const std::byte*>(values.data());
        buf_.insert(buf_.end(), p, p + values.size_bytes());
    }

    void put_magic(std::string_view magic);
    void put_string(std::string_view s);  // u32 length + bytes
    // Appends the FNV-1a checksum of everything written so far.
    void put_checksum();

    const Bytes& bytes() const { return buf_; }
    Bytes take() { return std::move(buf_); }

private:
    Bytes buf_;
};

// Bounds-checked cursor over a byte buffer. Overruns throw FormatError.
class Reader {
public:
    explicit Reader(std::span<const std::byte> data) : data_(data) {}

    template <class T>
        requires std::is_trivially_copyable_v<T>
    T get() {
        T value;
        std::memcpy(&value, take(sizeof(T)), sizeof(T));
        return value;
    }

    template <class T>
        requires std::is_trivially_copyable_v<T>
    void get_array(std::span<T> out) {
        std::memcpy(out.data(), take(out.size_bytes()), out.size_bytes());
    }

    std::string get_string();

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    const std::byte* take(std::size_t n);

    std::span<const std::byte> data_;
    std::size_t pos_ = 0;
};

// Verifies magic, trailing checksum and version of a whole-file buffer; on
// success returns a Reader positioned just after the version field and whose
// view excludes the checksum. Distinct exception types for each failure.
Reader open_checked(std::span<const std::byte> data, std::string_view magic,
                    std::uint32_t expected_version, std::string_view what);

}  // namespace mrf::io
