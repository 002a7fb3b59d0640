// Copyright 2026 The Weedet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <png.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "weedet/core/errors.hpp"

namespace weedet {

enum class SourceTag { kField, kPublic, kSynthetic };

inline std::string_view to_string(SourceTag tag) {
  switch (tag) {
    case SourceTag::kField:
      return "field";
    case SourceTag::kPublic:
      return "public";
    case SourceTag::kSynthetic:
      return "synthetic";
  }
  return "synthetic";
}

inline SourceTag parse_source_tag(std::string_view s) {
  if (s == "field") return SourceTag::kField;
  if (s == "public") return SourceTag::kPublic;
  if (s == "synthetic") return SourceTag::kSynthetic;
  throw ValidationError("unknown source_tag '" + std::string(s) + "'");
}

// Where a derived image came from. Crops carry their parent id and class
// label; tiles carry the parent id and pixel offset.
struct Provenance {
  std::string parent_id;
  int class_id = -1;
  int offset_x = 0;
  int offset_y = 0;
  std::string stage;
};

// Decoded 8-bit RGB raster, row-major, interleaved channels.
struct ImageRecord {
  std::string id;
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;
  SourceTag source_tag = SourceTag::kSynthetic;
  Provenance provenance;

  static ImageRecord filled(std::string id, int w, int h, std::uint8_t r,
                            std::uint8_t g, std::uint8_t b) {
    if (w < 1 || h < 1) throw FormatError("image dimensions must be >= 1");
    ImageRecord img;
    img.id = std::move(id);
    img.width = w;
    img.height = h;
    img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
      img.pixels[i] = r;
      img.pixels[i + 1] = g;
      img.pixels[i + 2] = b;
    }
    return img;
  }

  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * width + x) * 3;
  }
  std::uint8_t* pixel(int x, int y) { return pixels.data() + index(x, y); }
  const std::uint8_t* pixel(int x, int y) const {
    return pixels.data() + index(x, y);
  }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
};

// Copies the rectangle [x0, x0+w) x [y0, y0+h); the caller guarantees it
// lies inside the image.
inline ImageRecord sub_image(const ImageRecord& src, int x0, int y0, int w,
                             int h) {
  ImageRecord out;
  out.width = w;
  out.height = h;
  out.source_tag = src.source_tag;
  out.pixels.resize(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    std::memcpy(out.pixels.data() + static_cast<std::size_t>(y) * w * 3,
                src.pixel(x0, y0 + y), static_cast<std::size_t>(w) * 3);
  }
  return out;
}

namespace detail {

inline void check_png(const png_image& image, int ok, const std::string& what) {
  if (!ok) throw FormatError(what + ": " + image.message);
}

}  // namespace detail

inline ImageRecord decode_png(const std::vector<std::uint8_t>& bytes,
                              std::string id) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError(id + ": " + msg);
  }
  const bool color = image.format & PNG_FORMAT_FLAG_COLOR;
  const bool alpha = image.format & PNG_FORMAT_FLAG_ALPHA;
  const bool linear = image.format & PNG_FORMAT_FLAG_LINEAR;
  if (!color || alpha || linear || image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw FormatError(id + ": not an 8-bit RGB raster");
  }
  image.format = PNG_FORMAT_RGB;
  ImageRecord img;
  img.id = std::move(id);
  img.width = static_cast<int>(image.width);
  img.height = static_cast<int>(image.height);
  img.pixels.resize(PNG_IMAGE_SIZE(image));
  int ok = png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr);
  if (!ok) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError(img.id + ": " + msg);
  }
  return img;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

inline ImageRecord load_image(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  return decode_png(bytes, path.stem().string());
}

inline std::vector<std::uint8_t> encode_png(const ImageRecord& img) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  detail::check_png(image,
                    png_image_write_to_memory(&image, nullptr, &size, 0,
                                              img.pixels.data(), 0, nullptr),
                    "png size query");
  std::vector<std::uint8_t> out(size);
  detail::check_png(image,
                    png_image_write_to_memory(&image, out.data(), &size, 0,
                                              img.pixels.data(), 0, nullptr),
                    "png encode");
  out.resize(size);
  return out;
}

inline void save_png(const ImageRecord& img, const std::filesystem::path& path) {
  auto bytes = encode_png(img);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

// FNV-1a over dimensions and pixels; used for determinism checks.
inline std::uint64_t pixel_hash(const ImageRecord& img,
                                std::uint64_t h = 1469598103934665603ULL) {
  auto mix = [&h](std::uint8_t b) {
    h ^= b;
    h *= 1099511628211ULL;
  };
  for (int v : {img.width, img.height})
    for (int s = 0; s < 32; s += 8) mix(static_cast<std::uint8_t>(v >> s));
  for (auto b : img.pixels) mix(b);
  return h;
}

}  // namespace weedet
