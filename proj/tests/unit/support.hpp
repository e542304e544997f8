#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "stylesearch/vector.hpp"

namespace testsupport {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        static std::atomic<unsigned> n{0};
        path_ = fs::temp_directory_path() /
                ("stylesearch-test-" + std::to_string(::getpid()) + "-" + std::to_string(n++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

inline stylesearch::FeatureVector random_vector(std::mt19937_64& rng, std::size_t dim, double scale = 1.0) {
    std::normal_distribution<float> n(0.0f, static_cast<float>(scale));
    std::vector<float> v(dim);
    for (auto& x : v) x = n(rng);
    return stylesearch::FeatureVector(std::move(v));
}

inline std::string id_of(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%03zu", prefix, i);
    return buf;
}

inline std::string data_path(const std::string& name) { return std::string(STYLESEARCH_TEST_DATA) + "/" + name; }

}  // namespace testsupport
