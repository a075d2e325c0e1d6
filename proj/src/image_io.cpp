#include "pathopaint/image_io.hpp"

#include <cstring>
#include <png.h>

#include "pathopaint/errors.hpp"

namespace pathopaint {

namespace {

void write_png(const std::filesystem::path& path, const std::uint8_t* data, int width, int height,
               png_uint_32 format) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.c_str(), 0, data, 0, nullptr)) {
    throw FormatError("failed to write " + path.string() + ": " + img.message);
  }
}

std::vector<std::uint8_t> read_png(const std::filesystem::path& path, png_uint_32 format, int& width,
                                   int& height) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw FormatError("failed to read " + path.string() + ": " + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw FormatError("failed to decode " + path.string() + ": " + img.message);
  }
  width = static_cast<int>(img.width);
  height = static_cast<int>(img.height);
  return buf;
}

}  // namespace

void write_rgb_png(const std::filesystem::path& path, const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("write_rgb_png expects [3,H,W]");
  auto hwc = (image.detach().to(torch::kFloat32).clamp(0.0, 1.0) * 255.0)
                 .round()
                 .to(torch::kUInt8)
                 .permute({1, 2, 0})
                 .contiguous();
  write_png(path, hwc.data_ptr<std::uint8_t>(), static_cast<int>(image.size(2)),
            static_cast<int>(image.size(1)), PNG_FORMAT_RGB);
}

torch::Tensor read_rgb_png(const std::filesystem::path& path) {
  int w = 0;
  int h = 0;
  auto buf = read_png(path, PNG_FORMAT_RGB, w, h);
  auto hwc = torch::from_blob(buf.data(), {h, w, 3}, torch::kUInt8).clone();
  return hwc.permute({2, 0, 1}).contiguous().to(torch::kFloat32) / 255.0;
}

void write_mask_png(const std::filesystem::path& path, const torch::Tensor& mask) {
  if (mask.dim() != 2) throw ShapeError("write_mask_png expects [H,W]");
  auto m = (mask.detach().to(torch::kUInt8).ne(0).to(torch::kUInt8) * 255).contiguous();
  write_png(path, m.data_ptr<std::uint8_t>(), static_cast<int>(mask.size(1)), static_cast<int>(mask.size(0)),
            PNG_FORMAT_GRAY);
}

torch::Tensor read_mask_png(const std::filesystem::path& path) {
  int w = 0;
  int h = 0;
  auto buf = read_png(path, PNG_FORMAT_GRAY, w, h);
  return torch::from_blob(buf.data(), {h, w}, torch::kUInt8).ne(0).to(torch::kUInt8).clone();
}

}  // namespace pathopaint
