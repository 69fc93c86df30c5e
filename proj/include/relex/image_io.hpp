#ifndef RELEX_IMAGE_IO_HPP
#define RELEX_IMAGE_IO_HPP

#include <string>

#include "relex/tensor.hpp"

namespace relex {

/// Reads a binary PGM (P5) or PPM (P6) file with maxval 255 into a [C,H,W]
/// tensor scaled to [0,1]. C=1 for PGM, C=3 for PPM. When target_h/target_w
/// are nonzero the image is resized by nearest neighbour.
Tensor decode_image(const std::string& path, std::size_t target_h = 0, std::size_t target_w = 0);

/// Writes a [1,H,W] tensor of values in [0,1] as binary PGM.
void encode_pgm(const Tensor& image, const std::string& path);

/// Writes a [3,H,W] tensor of values in [0,1] as binary PPM.
void encode_ppm(const Tensor& image, const std::string& path);

Tensor nearest_neighbor_resize(const Tensor& image, std::size_t out_h, std::size_t out_w);

}  // namespace relex

#endif
