#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "jmod2/synthdata.hpp"
#include "jmod2/tensor.hpp"

namespace jmod2 {

// File-system failure; the message always names the offending path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Binary P6, 8 bits per channel. Values are clamped to [0, 1] and rounded.
void write_ppm(const std::filesystem::path& path, const Tensor& rgb);
Tensor read_ppm(const std::filesystem::path& path);

// Binary P5; nonzero mask entries are written as 255.
void write_pgm(const std::filesystem::path& path, const Mask& mask);
Mask read_pgm(const std::filesystem::path& path);

// 16-byte ASCII header "F32 <W> <H>" space padded and terminated by '\n',
// followed by W*H little-endian float32 values in row-major order.
void write_depth_f32(const std::filesystem::path& path, const DepthMap& depth);
DepthMap read_depth_f32(const std::filesystem::path& path);

std::string sample_id(std::size_t index);
void write_sample(const std::filesystem::path& dir, const Sample& sample);
Sample read_sample(const std::filesystem::path& dir, const CameraModel& camera);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace jmod2
