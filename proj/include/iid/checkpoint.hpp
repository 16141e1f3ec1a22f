#ifndef IID_CHECKPOINT_HPP_
#define IID_CHECKPOINT_HPP_

#include <string>
#include <utility>
#include <vector>

#include "iid/tensor.hpp"

namespace iid {

// Single-file parameter container. Layout:
//   16-byte header: 8-byte magic "IIDCKPT\0", u32 version, u32 reserved
//   length-prefixed UTF-8 config blob (JSON)
//   manifest: u32 count, then per entry length-prefixed UTF-8 name,
//             u32 channels/height/width, u64 byte offset into the data
//   raw little-endian 32-bit arrays
// Round-trips bit-exactly.
struct Checkpoint {
  std::string config_json;
  std::vector<std::pair<std::string, ImageTensor>> arrays;

  const ImageTensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace iid

#endif  // IID_CHECKPOINT_HPP_
