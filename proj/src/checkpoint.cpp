#include "iid/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace iid {

namespace {

constexpr char kMagic[8] = {'I', 'I', 'D', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
uint64_t read_u64(std::istream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string read_string(std::istream& in) {
  const uint32_t len = read_u32(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

}  // namespace

const ImageTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : arrays) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_u32(out, 0);  // reserved
  write_string(out, ckpt.config_json);
  write_u32(out, static_cast<uint32_t>(ckpt.arrays.size()));
  uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.arrays) {
    write_string(out, name);
    write_u32(out, static_cast<uint32_t>(t.channels));
    write_u32(out, static_cast<uint32_t>(t.height));
    write_u32(out, static_cast<uint32_t>(t.width));
    write_u64(out, offset);
    offset += t.numel() * sizeof(float);
  }
  for (const auto& [name, t] : ckpt.arrays) {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::invalid_argument("checkpoint: bad magic in " + path);
  }
  const uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw std::invalid_argument("checkpoint: unsupported version " + std::to_string(version));
  }
  read_u32(in);  // reserved
  Checkpoint ckpt;
  ckpt.config_json = read_string(in);
  const uint32_t count = read_u32(in);
  struct Entry {
    std::string name;
    int c, h, w;
    uint64_t offset;
  };
  std::vector<Entry> entries(count);
  for (auto& e : entries) {
    e.name = read_string(in);
    e.c = static_cast<int>(read_u32(in));
    e.h = static_cast<int>(read_u32(in));
    e.w = static_cast<int>(read_u32(in));
    e.offset = read_u64(in);
  }
  const std::streampos data_start = in.tellg();
  for (const auto& e : entries) {
    ImageTensor t(e.c, e.h, e.w);
    in.seekg(data_start + static_cast<std::streamoff>(e.offset));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated data for '" + e.name + "'");
    ckpt.arrays.emplace_back(e.name, std::move(t));
  }
  return ckpt;
}

}  // namespace iid
