#ifndef IID_IMAGE_IO_HPP_
#define IID_IMAGE_IO_HPP_

#include <string>

#include "iid/tensor.hpp"

namespace iid {

// Loads an 8- or 16-bit PNG or binary PPM/PGM into [0, 1] values
// (grayscale files become 1-channel tensors). Values are treated as linear
// intensities; no gamma transform is applied in either direction.
ImageTensor load_image(const std::string& path);

// Saves a 1- or 3-channel tensor, clamping to [0, 1] and quantizing with
// round-half-up at the requested bit depth (8 or 16). The container is
// chosen by extension: .png, .ppm (3-channel), .pgm (1-channel).
void save_image(const ImageTensor& image, const std::string& path, int bit_depth = 8);

}  // namespace iid

#endif  // IID_IMAGE_IO_HPP_
