#include "mrf/io.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <cmath>
#include <fstream>

namespace mrf {

double l2_norm(std::span<const cdouble> x) {
    double acc = 0.0;
    for (const auto& v : x) acc += std::norm(v);
    return std::sqrt(acc);
}

double relative_l2(std::span<const cdouble> a, std::span<const cdouble> reference) {
    if (a.size() != reference.size()) throw DimensionMismatch("relative_l2: length mismatch");
    double diff = 0.0;
    double ref = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += std::norm(a[i] - reference[i]);
        ref += std::norm(reference[i]);
    }
    if (ref == 0.0) return diff == 0.0 ? 0.0 : INFINITY;
    return std::sqrt(diff / ref);
}

}  // namespace mrf

namespace mrf::io {

std::uint64_t fnv1a64(std::span<const std::byte> data, std::uint64_t state) {
    for (std::byte b : data) {
        state ^= static_cast<std::uint64_t>(b);
        state *= kFnvPrime;
    }
    return state;
}

Digest sha256(std::span<const std::byte> data) {
    Digest out{};
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), out.data());
    return out;
}

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 initialisation failed");
}

Sha256::~Sha256() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

void Sha256::update(std::span<const std::byte> data) {
    EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data.data(), data.size());
}

Digest Sha256::finish() {
    Digest out{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), out.data(), &len);
    return out;
}

std::string to_hex(std::span<const std::uint8_t> digest) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s;
    s.reserve(digest.size() * 2);
    for (std::uint8_t b : digest) {
        s.push_back(kHex[b >> 4]);
        s.push_back(kHex[b & 0xF]);
    }
    return s;
}

std::string sha256_hex(std::span<const std::byte> data) {
    const Digest d = sha256(data);
    return to_hex(d);
}

std::string file_sha256_hex(const std::filesystem::path& path) {
    return sha256_hex(read_file(path));
}

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw Error("cannot open " + path.string());
    const auto size = static_cast<std::size_t>(in.tellg());
    Bytes data(size);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(size));
    if (!in) throw Error("read failed: " + path.string());
    return data;
}

void write_file(const std::filesystem::path& path, std::span<const std::byte> data) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot create " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("write failed: " + path.string());
}

void Writer::put_magic(std::string_view magic) {
    for (char c : magic) buf_.push_back(static_cast<std::byte>(c));
}

void Writer::put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    for (char c : s) buf_.push_back(static_cast<std::byte>(c));
}

void Writer::put_checksum() { put(fnv1a64(buf_)); }

const std::byte* Reader::take(std::size_t n) {
    if (n > remaining())
        throw FormatError("unexpected end of data at offset " + std::to_string(pos_) + " (need " +
                          std::to_string(n) + " bytes, have " + std::to_string(remaining()) + ")");
    const std::byte* p = data_.data() + pos_;
    pos_ += n;
    return p;
}

std::string Reader::get_string() {
    const auto n = get<std::uint32_t>();
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
}

Reader open_checked(std::span<const std::byte> data, std::string_view magic,
                    std::uint32_t expected_version, std::string_view what) {
    const std::string name(what);
    if (data.size() < magic.size() ||
        std::memcmp(data.data(), magic.data(), magic.size()) != 0)
        throw FormatError(name + ": bad magic, expected \"" + std::string(magic) + "\"");
    const std::size_t header = magic.size() + sizeof(std::uint32_t);
    if (data.size() < header + sizeof(std::uint64_t))
        throw ChecksumError(name + ": file truncated before checksum");
    const std::size_t body = data.size() - sizeof(std::uint64_t);
    std::uint64_t stored;
    std::memcpy(&stored, data.data() + body, sizeof(stored));
    if (fnv1a64(data.first(body)) != stored)
        throw ChecksumError(name + ": checksum mismatch (corrupt or truncated file)");
    Reader r(data.first(body));
    for (std::size_t i = 0; i < magic.size(); ++i) r.get<char>();
    const auto version = r.get<std::uint32_t>();
    if (version != expected_version)
        throw VersionError(name + ": unsupported version " + std::to_string(version) +
                           " (expected " + std::to_string(expected_version) + ")");
    return r;
}

}  // namespace mrf::io
