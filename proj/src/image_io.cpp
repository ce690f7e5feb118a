#include "cfp2ffa/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace cfp2ffa {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp message) {
  (void)png;
  throw std::runtime_error(std::string("libpng: ") + message);
}

void png_warn(png_structp, png_const_charp) {}

class PngReader {
 public:
  explicit PngReader(const std::filesystem::path& path) : file_(open_file(path, "rb")) {
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file_.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
      throw std::runtime_error(path.string() + " is not a PNG file");
    }
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    info_ = png_create_info_struct(png_);
    if (!png_ || !info_) throw std::runtime_error("libpng: allocation failed");
    png_init_io(png_, file_.get());
    png_set_sig_bytes(png_, 8);
    png_read_info(png_, info_);
  }
  ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  PngReader(const PngReader&) = delete;
  PngReader& operator=(const PngReader&) = delete;

  png_structp png() const { return png_; }
  png_infop info() const { return info_; }

 private:
  FilePtr file_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

}  // namespace

std::pair<std::int64_t, std::int64_t> png_dimensions(const std::filesystem::path& path) {
  PngReader reader(path);
  return {png_get_image_width(reader.png(), reader.info()),
          png_get_image_height(reader.png(), reader.info())};
}

torch::Tensor read_png(const std::filesystem::path& path) {
  PngReader reader(path);
  auto* png = reader.png();
  auto* info = reader.info();

  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const auto rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != static_cast<png_size_t>(width) * 3) {
    throw std::runtime_error("unsupported PNG layout in " + path.string());
  }
  std::vector<unsigned char> pixels(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * rowbytes;
  png_read_image(png, rows.data());

  auto hwc = torch::from_blob(pixels.data(),
                              {static_cast<std::int64_t>(height), static_cast<std::int64_t>(width), 3},
                              torch::kUInt8)
                 .clone();
  return hwc.permute({2, 0, 1}).to(torch::kFloat32).div(127.5).sub(1.0).contiguous();
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  auto img = image.detach().to(torch::kCPU).to(torch::kFloat32);
  if (img.dim() != 3 || (img.size(0) != 3 && img.size(0) != 1)) {
    throw std::invalid_argument("write_png: expected [3, H, W] or [1, H, W]");
  }
  if (img.size(0) == 1) img = img.expand({3, img.size(1), img.size(2)});
  auto bytes = img.clamp(-1.0, 1.0)
                   .add(1.0)
                   .mul(127.5)
                   .round()
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();
  const auto height = static_cast<png_uint_32>(bytes.size(0));
  const auto width = static_cast<png_uint_32>(bytes.size(1));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw std::runtime_error("libpng: allocation failed");
  struct Cleanup {
    png_structp* p;
    png_infop* i;
    ~Cleanup() { png_destroy_write_struct(p, i); }
  } cleanup{&png, &info};

  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  auto* data = bytes.data_ptr<std::uint8_t>();
  for (png_uint_32 y = 0; y < height; ++y) {
    png_write_row(png, data + static_cast<std::size_t>(y) * width * 3);
  }
  png_write_end(png, nullptr);
}

torch::Tensor resize_image(const torch::Tensor& image, std::int64_t size) {
  namespace F = torch::nn::functional;
  if (image.dim() == 3) return resize_image(image.unsqueeze(0), size).squeeze(0);
  if (image.size(-1) == size && image.size(-2) == size) return image;
  return F::interpolate(image, F::InterpolateFuncOptions()
                                   .size(std::vector<std::int64_t>{size, size})
                                   .mode(torch::kBilinear)
                                   .align_corners(false));
}

torch::Tensor tile_images(const torch::Tensor& images, std::int64_t cols) {
  const auto n = images.size(0);
  const auto rows = (n + cols - 1) / cols;
  const auto c = images.size(1);
  const auto h = images.size(2);
  const auto w = images.size(3);
  auto grid = torch::full({c, rows * h, cols * w}, -1.0, images.options());
  for (std::int64_t i = 0; i < n; ++i) {
    const auto r = i / cols;
    const auto q = i % cols;
    grid.narrow(1, r * h, h).narrow(2, q * w, w).copy_(images[i]);
  }
  return grid;
}

}  // namespace cfp2ffa
