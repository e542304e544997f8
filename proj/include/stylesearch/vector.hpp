#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace stylesearch {

using ItemId = std::string;
using RoomId = std::string;

/// Fixed-dimension float32 vector. Values are expected to be finite.
class FeatureVector {
public:
    FeatureVector() = default;
    explicit FeatureVector(std::vector<float> values) : values_(std::move(values)) {}
    FeatureVector(std::initializer_list<float> values) : values_(values) {}

    std::size_t dim() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }
    std::span<const float> span() const noexcept { return values_; }
    std::span<float> span() noexcept { return values_; }
    const std::vector<float>& values() const noexcept { return values_; }
    float operator[](std::size_t i) const { return values_[i]; }
    float& operator[](std::size_t i) { return values_[i]; }

    bool is_finite() const;
    double norm() const;

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

private:
    std::vector<float> values_;
};

/// v / ||v||_2. Throws on a zero vector or non-finite components.
FeatureVector normalize(const FeatureVector& v);

/// Euclidean distance through the active SIMD kernel.
double euclidean(const FeatureVector& a, const FeatureVector& b);

// Shared vector file format.
//   binary: u32 count, u32 dim (little endian), then count*dim float32 row-major
//   text (".txt" extension): one vector per line, space separated decimals
namespace vecfile {

std::vector<FeatureVector> read(const std::filesystem::path& path);
void write(const std::filesystem::path& path, std::span<const FeatureVector> rows);

bool is_text_path(const std::filesystem::path& path);

}  // namespace vecfile

// Little-endian binary helpers shared by every persisted artifact.
namespace binio {

void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_f32(std::string& out, float v);
void put_f64(std::string& out, double v);
void put_str(std::string& out, const std::string& s);

class Reader {
public:
    Reader(std::string data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}

    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();
    std::string str();
    std::string bytes(std::size_t n);
    bool at_end() const noexcept { return pos_ == data_.size(); }
    const std::string& source() const noexcept { return source_; }

private:
    void need(std::size_t n) const;

    std::string data_;
    std::string source_;
    std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

/// FNV-1a 64-bit, hex encoded. Used for artifact fingerprints.
std::string fingerprint(std::string_view bytes);

}  // namespace binio

}  // namespace stylesearch
