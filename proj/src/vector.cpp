#include "stylesearch/vector.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "stylesearch/error.hpp"
#include "stylesearch/ranked_list.hpp"
#include "stylesearch/simd/kernels.hpp"

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace stylesearch {

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::io: return "io";
        case ErrorCode::parse: return "parse";
        case ErrorCode::validation: return "validation";
        case ErrorCode::dangling_reference: return "dangling_reference";
        case ErrorCode::dimension_mismatch: return "dimension_mismatch";
        case ErrorCode::duplicate_id: return "duplicate_id";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::all_oov: return "all_oov";
        case ErrorCode::degenerate: return "degenerate";
    }
    return "unknown";
}

std::string_view modality_name(Modality m) {
    switch (m) {
        case Modality::visual: return "visual";
        case Modality::text: return "text";
        case Modality::blended: return "blended";
    }
    return "unknown";
}

std::vector<ItemId> ids_of(const RankedList& list) {
    std::vector<ItemId> ids;
    ids.reserve(list.size());
    for (const auto& e : list) ids.push_back(e.id);
    return ids;
}

bool FeatureVector::is_finite() const {
    for (float v : values_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double FeatureVector::norm() const { return std::sqrt(simd::dot(span(), span())); }

FeatureVector normalize(const FeatureVector& v) {
    if (!v.is_finite()) throw Error(ErrorCode::invalid_argument, "cannot normalize a vector with non-finite components");
    const double n = v.norm();
    if (n == 0.0) throw Error(ErrorCode::invalid_argument, "cannot normalize the zero vector");
    std::vector<float> out(v.dim());
    for (std::size_t i = 0; i < v.dim(); ++i) out[i] = static_cast<float>(static_cast<double>(v[i]) / n);
    return FeatureVector(std::move(out));
}

double euclidean(const FeatureVector& a, const FeatureVector& b) {
    if (a.dim() != b.dim()) {
        throw Error(ErrorCode::dimension_mismatch,
                    "dimension mismatch: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
    }
    return std::sqrt(simd::l2_sq(a.span(), b.span()));
}

namespace binio {

void put_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    out.append(buf, 8);
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out += s;
}

void Reader::need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorCode::parse, source_ + ": unexpected end of file");
}

std::uint32_t Reader::u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, data_.data() + pos_, 4);
    pos_ += 4;
    return v;
}

std::uint64_t Reader::u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, data_.data() + pos_, 8);
    pos_ += 8;
    return v;
}

float Reader::f32() { return std::bit_cast<float>(u32()); }
double Reader::f64() { return std::bit_cast<double>(u64()); }

std::string Reader::str() { return bytes(u32()); }

std::string Reader::bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

std::string fingerprint(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << h;
    return ss.str();
}

}  // namespace binio

namespace vecfile {

bool is_text_path(const std::filesystem::path& path) { return path.extension() == ".txt"; }

namespace {

std::vector<FeatureVector> read_text(const std::filesystem::path& path) {
    std::istringstream in(binio::read_file(path));
    std::vector<FeatureVector> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        std::vector<float> values;
        std::string tok;
        while (ls >> tok) {
            char* end = nullptr;
            const float v = std::strtof(tok.c_str(), &end);
            if (end == tok.c_str() || *end != '\0') {
                throw Error(ErrorCode::parse, path.string() + ":" + std::to_string(line_no) + ": bad number '" + tok + "'");
            }
            values.push_back(v);
        }
        if (!rows.empty() && values.size() != rows.front().dim()) {
            throw Error(ErrorCode::dimension_mismatch,
                        path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(rows.front().dim()) + " values, got " + std::to_string(values.size()));
        }
        rows.emplace_back(std::move(values));
    }
    return rows;
}

std::vector<FeatureVector> read_binary(const std::filesystem::path& path) {
    binio::Reader r(binio::read_file(path), path.string());
    const std::uint32_t count = r.u32();
    const std::uint32_t dim = r.u32();
    std::vector<FeatureVector> rows;
    rows.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::vector<float> values(dim);
        for (auto& v : values) v = r.f32();
        rows.emplace_back(std::move(values));
    }
    if (!r.at_end()) throw Error(ErrorCode::parse, path.string() + ": trailing bytes after " + std::to_string(count) + " vectors");
    return rows;
}

}  // namespace

std::vector<FeatureVector> read(const std::filesystem::path& path) {
    return is_text_path(path) ? read_text(path) : read_binary(path);
}

void write(const std::filesystem::path& path, std::span<const FeatureVector> rows) {
    const std::size_t dim = rows.empty() ? 0 : rows.front().dim();
    for (const auto& row : rows) {
        if (row.dim() != dim) throw Error(ErrorCode::dimension_mismatch, path.string() + ": rows of differing dimension");
    }
    std::string out;
    if (is_text_path(path)) {
        std::ostringstream ss;
        ss << std::setprecision(std::numeric_limits<float>::max_digits10);
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.dim(); ++i) ss << (i ? " " : "") << row[i];
            ss << '\n';
        }
        out = ss.str();
    } else {
        out.reserve(8 + rows.size() * dim * 4);
        binio::put_u32(out, static_cast<std::uint32_t>(rows.size()));
        binio::put_u32(out, static_cast<std::uint32_t>(dim));
        for (const auto& row : rows) {
            for (float v : row.values()) binio::put_f32(out, v);
        }
    }
    binio::write_file(path, out);
}

}  // namespace vecfile

}  // namespace stylesearch
