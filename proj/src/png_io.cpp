#include "cadd/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace cadd::png {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp, png_const_charp msg) {
  throw std::runtime_error(std::string("libpng: ") + msg);
}
void png_warning_fn(png_structp, png_const_charp) {}

int color_type_for(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGBA;
    default: throw std::invalid_argument("png: unsupported channel count " + std::to_string(channels));
  }
}

class Writer {
 public:
  Writer() {
    png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
    if (!png_) throw std::runtime_error("png: cannot create write struct");
    info_ = png_create_info_struct(png_);
    if (!info_) {
      png_destroy_write_struct(&png_, nullptr);
      throw std::runtime_error("png: cannot create info struct");
    }
  }
  ~Writer() { png_destroy_write_struct(&png_, &info_); }
  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;

  template <typename T>
  void write(const Image<T>& img, int bit_depth) {
    png_set_IHDR(png_, info_, img.width(), img.height(), bit_depth, color_type_for(img.channels()),
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png_, info_);
    if (bit_depth == 16) png_set_swap(png_);  // host little-endian to PNG big-endian
    const std::size_t stride = static_cast<std::size_t>(img.width()) * img.channels();
    for (int y = 0; y < img.height(); ++y) {
      auto* row = const_cast<T*>(img.data() + y * stride);
      png_write_row(png_, reinterpret_cast<png_bytep>(row));
    }
    png_write_end(png_, nullptr);
  }

  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

class Reader {
 public:
  Reader() {
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
    if (!png_) throw std::runtime_error("png: cannot create read struct");
    info_ = png_create_info_struct(png_);
    if (!info_) {
      png_destroy_read_struct(&png_, nullptr, nullptr);
      throw std::runtime_error("png: cannot create info struct");
    }
  }
  ~Reader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  template <typename T>
  Image<T> read(int expected_depth) {
    png_read_info(png_, info_);
    const int width = static_cast<int>(png_get_image_width(png_, info_));
    const int height = static_cast<int>(png_get_image_height(png_, info_));
    const int depth = png_get_bit_depth(png_, info_);
    const int color = png_get_color_type(png_, info_);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png_);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png_);
    if (expected_depth == 8 && depth == 16) png_set_strip_16(png_);
    if (expected_depth == 16 && depth != 16)
      throw std::runtime_error("png: expected a 16-bit image");
    if (expected_depth == 16) png_set_swap(png_);
    png_read_update_info(png_, info_);
    const int channels = png_get_channels(png_, info_);
    Image<T> img(width, height, channels);
    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    for (int y = 0; y < height; ++y)
      png_read_row(png_, reinterpret_cast<png_bytep>(img.data() + y * stride), nullptr);
    png_read_end(png_, nullptr);
    return img;
  }

  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw std::runtime_error("png: cannot open " + path.string());
  return f;
}

template <typename T>
Image<T> read_file(const std::filesystem::path& path, int depth) {
  auto f = open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw std::runtime_error("png: not a PNG file: " + path.string());
  Reader r;
  png_init_io(r.png_, f.get());
  png_set_sig_bytes(r.png_, 8);
  try {
    return r.read<T>(depth);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string(e.what()) + " (" + path.string() + ")");
  }
}

template <typename T>
void write_file(const std::filesystem::path& path, const Image<T>& img, int depth) {
  auto f = open_file(path, "wb");
  Writer w;
  png_init_io(w.png_, f.get());
  w.write(img, depth);
}

struct MemorySource {
  const std::vector<std::uint8_t>* bytes;
  std::size_t offset;
};

}  // namespace

void write8(const std::filesystem::path& path, const Image<std::uint8_t>& img) {
  write_file(path, img, 8);
}

Image<std::uint8_t> read8(const std::filesystem::path& path) { return read_file<std::uint8_t>(path, 8); }

void write16(const std::filesystem::path& path, const Image<std::uint16_t>& img) {
  if (img.channels() != 1) throw std::invalid_argument("png: 16-bit images must be single-channel");
  write_file(path, img, 16);
}

Image<std::uint16_t> read16(const std::filesystem::path& path) {
  return read_file<std::uint16_t>(path, 16);
}

std::vector<std::uint8_t> encode8(const Image<std::uint8_t>& img) {
  std::vector<std::uint8_t> out;
  Writer w;
  png_set_write_fn(
      w.png_, &out,
      [](png_structp p, png_bytep data, png_size_t n) {
        auto* buf = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        buf->insert(buf->end(), data, data + n);
      },
      [](png_structp) {});
  w.write(img, 8);
  return out;
}

Image<std::uint8_t> decode8(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
    throw std::runtime_error("png: buffer is not a PNG");
  MemorySource src{&bytes, 0};
  Reader r;
  png_set_read_fn(r.png_, &src, [](png_structp p, png_bytep data, png_size_t n) {
    auto* s = static_cast<MemorySource*>(png_get_io_ptr(p));
    if (s->offset + n > s->bytes->size()) png_error(p, "truncated PNG buffer");
    std::memcpy(data, s->bytes->data() + s->offset, n);
    s->offset += n;
  });
  return r.read<std::uint8_t>(8);
}

}  // namespace cadd::png
