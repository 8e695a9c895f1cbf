#pragma once

#include <string>

#include "cppd/tensor.hpp"

namespace cppd {

/// Binary PGM (P5, maxval 255). Pixels are stored as floats in [0,1];
/// writing quantizes with round(v*255) and reading maps byte/255 back, so a
/// write/read round trip is the identity on quantized images.
void write_pgm(const std::string& path, const Tensor<float>& image);
Tensor<float> read_pgm(const std::string& path);

}  // namespace cppd
