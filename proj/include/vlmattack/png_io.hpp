// Copyright 2026 The vlmattack Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Lossless 8-bit RGB PNG persistence on top of libpng's simplified API.
// Values are rounded half away from zero before encoding. Grayscale, alpha
// and 16-bit files are rejected on load instead of being converted.

#pragma once

#include <png.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vlmattack/imagecore.hpp"

namespace vlmattack {

namespace png_detail {

inline std::vector<std::uint8_t> Quantize(const PixelImage& x) {
  std::vector<std::uint8_t> bytes(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    // PixelImage guarantees [0, 255], so the cast cannot overflow.
    bytes[i] = static_cast<std::uint8_t>(round_half_away(x[i]));
  }
  return bytes;
}

inline PixelImage FinishRead(png_image& image, const std::string& what) {
  const png_uint_32 fmt = image.format;
  if ((fmt & PNG_FORMAT_FLAG_COLOR) == 0) {
    png_image_free(&image);
    throw Error("load_png: " + what + " is grayscale; only RGB is accepted");
  }
  if ((fmt & PNG_FORMAT_FLAG_ALPHA) != 0) {
    png_image_free(&image);
    throw Error("load_png: " + what +
                " has an alpha channel; only RGB is accepted");
  }
  if ((fmt & PNG_FORMAT_FLAG_LINEAR) != 0) {
    png_image_free(&image);
    throw Error("load_png: " + what + " is 16-bit; only 8-bit is accepted");
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr) == 0) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error("load_png: " + what + ": " + msg);
  }
  ImageShape shape{static_cast<int>(image.height),
                   static_cast<int>(image.width)};
  png_image_free(&image);
  return PixelImage(shape, std::vector<double>(buffer.begin(), buffer.end()));
}

inline png_image MakeWriteImage(const PixelImage& x) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(x.width());
  image.height = static_cast<png_uint_32>(x.height());
  image.format = PNG_FORMAT_RGB;
  return image;
}

}  // namespace png_detail

inline void save_png(const PixelImage& x, const std::filesystem::path& path) {
  if (x.empty()) throw Error("save_png: empty image");
  auto bytes = png_detail::Quantize(x);
  png_image image = png_detail::MakeWriteImage(x);
  if (png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0,
                              nullptr) == 0) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error("save_png: cannot write " + path.string() + ": " + msg);
  }
}

inline PixelImage load_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.c_str()) == 0) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error("load_png: cannot read " + path.string() + ": " + msg);
  }
  return png_detail::FinishRead(image, path.string());
}

inline std::vector<std::uint8_t> encode_png(const PixelImage& x) {
  if (x.empty()) throw Error("encode_png: empty image");
  auto bytes = png_detail::Quantize(x);
  png_image image = png_detail::MakeWriteImage(x);
  png_alloc_size_t size = 0;
  if (png_image_write_to_memory(&image, nullptr, &size, 0, bytes.data(), 0,
                                nullptr) == 0) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error("encode_png: " + msg);
  }
  std::vector<std::uint8_t> out(size);
  if (png_image_write_to_memory(&image, out.data(), &size, 0, bytes.data(), 0,
                                nullptr) == 0) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error("encode_png: " + msg);
  }
  out.resize(size);
  return out;
}

inline PixelImage decode_png(const std::vector<std::uint8_t>& data) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_memory(&image, data.data(), data.size()) ==
      0) {
    std::string msg = image.message;
    png_image_free(&image);
    throw Error("decode_png: " + msg);
  }
  return png_detail::FinishRead(image, "in-memory PNG");
}

}  // namespace vlmattack
