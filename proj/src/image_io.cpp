#include "iid/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

namespace iid {

namespace {

std::string lower_ext(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_thrower(png_structp, png_const_charp msg) {
  throw std::runtime_error(std::string("png: ") + msg);
}

void png_warning_sink(png_structp, png_const_charp) {}

ImageTensor load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::invalid_argument("load_image: cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_thrower,
                                           png_warning_sink);
  if (!png) throw std::runtime_error("png: create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png: create_info_struct failed");
  }
  try {
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_byte color_type = png_get_color_type(png, info);
    png_byte bit_depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    if (bit_depth == 16) png_set_swap(png);  // file is big-endian
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    bit_depth = png_get_bit_depth(png, info);
    if (channels != 1 && channels != 3) {
      throw std::invalid_argument("load_image: unsupported channel count " +
                                  std::to_string(channels) + " in " + path);
    }
    const size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<png_byte> buffer(rowbytes * height);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) rows[y] = buffer.data() + rowbytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    ImageTensor out(channels, height, width);
    if (bit_depth == 16) {
      const float scale = 1.0f / 65535.0f;
      for (int y = 0; y < height; ++y) {
        const uint16_t* row = reinterpret_cast<const uint16_t*>(buffer.data() + rowbytes * y);
        for (int x = 0; x < width; ++x) {
          for (int c = 0; c < channels; ++c) out.at(c, y, x) = row[x * channels + c] * scale;
        }
      }
    } else {
      const float scale = 1.0f / 255.0f;
      for (int y = 0; y < height; ++y) {
        const png_byte* row = buffer.data() + rowbytes * y;
        for (int x = 0; x < width; ++x) {
          for (int c = 0; c < channels; ++c) out.at(c, y, x) = row[x * channels + c] * scale;
        }
      }
    }
    return out;
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
}

uint32_t quantize(float v, uint32_t max_value) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  const auto q = static_cast<uint32_t>(std::floor(static_cast<double>(clamped) * max_value + 0.5));
  return std::min(q, max_value);
}

void save_png(const ImageTensor& image, const std::string& path, int bit_depth) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("save_image: cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_thrower,
                                            png_warning_sink);
  if (!png) throw std::runtime_error("png: create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png: create_info_struct failed");
  }
  try {
    png_init_io(png, fp.get());
    const int color_type = image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, image.width, image.height, bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) {
      png_set_swap(png);  // we hand over native little-endian samples
      std::vector<uint16_t> row(static_cast<size_t>(image.width) * image.channels);
      for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
          for (int c = 0; c < image.channels; ++c) {
            row[x * image.channels + c] = static_cast<uint16_t>(quantize(image.at(c, y, x), 65535));
          }
        }
        png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
      }
    } else {
      std::vector<uint8_t> row(static_cast<size_t>(image.width) * image.channels);
      for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
          for (int c = 0; c < image.channels; ++c) {
            row[x * image.channels + c] = static_cast<uint8_t>(quantize(image.at(c, y, x), 255));
          }
        }
        png_write_row(png, row.data());
      }
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
}

// --- binary netpbm (P5 grayscale / P6 RGB, maxval 255 or 65535) ---

int pnm_read_token(std::istream& in) {
  // skips whitespace and '#' comments
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value = 0;
  if (!(in >> value)) throw std::runtime_error("pnm: truncated header");
  return value;
}

ImageTensor load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("load_image: cannot open " + path);
  char p = 0, kind = 0;
  in.get(p).get(kind);
  if (p != 'P' || (kind != '5' && kind != '6')) {
    throw std::invalid_argument("load_image: unsupported PNM magic in " + path);
  }
  const int channels = kind == '6' ? 3 : 1;
  const int width = pnm_read_token(in);
  const int height = pnm_read_token(in);
  const int maxval = pnm_read_token(in);
  if (maxval != 255 && maxval != 65535) {
    throw std::invalid_argument("load_image: PNM maxval must be 255 or 65535");
  }
  in.get();  // single whitespace after maxval
  const int bytes_per_sample = maxval == 255 ? 1 : 2;
  std::vector<unsigned char> raw(static_cast<size_t>(width) * height * channels *
                                 bytes_per_sample);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(in.gcount()) != raw.size()) {
    throw std::runtime_error("load_image: truncated PNM payload in " + path);
  }
  ImageTensor out(channels, height, width);
  const float scale = 1.0f / maxval;
  size_t i = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        uint32_t v;
        if (bytes_per_sample == 1) {
          v = raw[i++];
        } else {
          v = static_cast<uint32_t>(raw[i] << 8 | raw[i + 1]);  // network order
          i += 2;
        }
        out.at(c, y, x) = v * scale;
      }
    }
  }
  return out;
}

void save_pnm(const ImageTensor& image, const std::string& path, int bit_depth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_image: cannot open " + path + " for writing");
  const uint32_t maxval = bit_depth == 16 ? 65535 : 255;
  out << (image.channels == 3 ? "P6" : "P5") << "\n"
      << image.width << " " << image.height << "\n"
      << maxval << "\n";
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        const uint32_t q = quantize(image.at(c, y, x), maxval);
        if (bit_depth == 16) {
          out.put(static_cast<char>(q >> 8)).put(static_cast<char>(q & 0xFF));
        } else {
          out.put(static_cast<char>(q));
        }
      }
    }
  }
  if (!out) throw std::runtime_error("save_image: write failed for " + path);
}

}  // namespace

ImageTensor load_image(const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == "png") return load_png(path);
  if (ext == "ppm" || ext == "pgm" || ext == "pnm") return load_pnm(path);
  throw std::invalid_argument("load_image: unsupported format '" + ext + "' for " + path);
}

void save_image(const ImageTensor& image, const std::string& path, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) {
    throw std::invalid_argument("save_image: bit depth must be 8 or 16");
  }
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("save_image: only 1- or 3-channel tensors are supported");
  }
  if (image.empty()) throw std::invalid_argument("save_image: empty tensor");
  const std::string ext = lower_ext(path);
  if (ext == "png") {
    save_png(image, path, bit_depth);
  } else if (ext == "ppm" || ext == "pgm") {
    save_pnm(image, path, bit_depth);
  } else {
    throw std::invalid_argument("save_image: unsupported format '" + ext + "' for " + path);
  }
}

}  // namespace iid
