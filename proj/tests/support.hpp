#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "egnn/egnn.hpp"
#include "oracles.hpp"

namespace support {

inline oracle::Mat to_mat(const egnn::Tensor& t)
{
    oracle::Mat m = oracle::zeros(t.dim(0), t.dim(1));
    for (std::size_t i = 0; i < t.dim(0); ++i)
        for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t(i, j);
    return m;
}

inline oracle::Cube to_cube(const egnn::Tensor& t)
{
    oracle::Cube c(t.dim(0), std::vector<oracle::Vec>(t.dim(1), oracle::Vec(t.dim(2))));
    for (std::size_t i = 0; i < t.dim(0); ++i)
        for (std::size_t j = 0; j < t.dim(1); ++j)
            for (std::size_t k = 0; k < t.dim(2); ++k) c[i][j][k] = t(i, j, k);
    return c;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("egnn_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream(path) << text;
}

} // namespace support
