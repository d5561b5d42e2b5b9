#include <png.h>

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <csetjmp>
#include <filesystem>
#include <memory>

#include "abpn/error.hpp"
#include "abpn/imaging.hpp"

namespace abpn {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors through longjmp; keep this frame free of objects
// with non-trivial destructors.
const char* write_rows(std::FILE* fp, int height, int width, const std::uint8_t* rgb, const png_text* texts,
                       int num_texts) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return "cannot allocate png write struct";
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return "cannot allocate png info struct";
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return "libpng write error";
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  if (num_texts > 0) png_set_text(png, info, texts, num_texts);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(rgb + static_cast<std::size_t>(y) * width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return nullptr;
}

}  // namespace

ImageBuffer png_read(const std::string& path) {
  if (!std::filesystem::exists(path)) throw FormatError("png_read: no such file: " + path);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw FormatError("png_read: " + path + ": " + image.message);

  const png_uint_32 native = image.format;
  const char* unsupported = nullptr;
  if (!(native & PNG_FORMAT_FLAG_COLOR))
    unsupported = "grayscale";
  else if (native & PNG_FORMAT_FLAG_LINEAR)
    unsupported = "16-bit";
  else if (native & PNG_FORMAT_FLAG_ALPHA)
    unsupported = "alpha channel";
  if (unsupported) {
    png_image_free(&image);
    throw FormatError("png_read: " + path + ": unsupported format (" + unsupported + "); expected 8-bit RGB");
  }

  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    std::string message = image.message;
    png_image_free(&image);
    throw FormatError("png_read: " + path + ": " + message);
  }
  return ImageBuffer::from_bytes(static_cast<int>(image.height), static_cast<int>(image.width), rgb);
}

void png_write(const std::string& path, const ImageBuffer& img, const std::map<std::string, std::string>& text) {
  if (img.empty()) throw DimensionError("png_write", "extent", "empty image");
  const std::vector<std::uint8_t> rgb = img.to_bytes();

  std::vector<png_text> texts;
  for (const auto& [key, value] : text) {
    png_text t{};
    t.compression = PNG_TEXT_COMPRESSION_NONE;
    t.key = const_cast<char*>(key.c_str());
    t.text = const_cast<char*>(value.c_str());
    t.text_length = value.size();
    texts.push_back(t);
  }

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw FormatError("png_write: cannot open " + path);
  if (const char* err = write_rows(fp.get(), img.height(), img.width(), rgb.data(), texts.data(),
                                   static_cast<int>(texts.size())))
    throw FormatError("png_write: " + path + ": " + err);
}

namespace {

const char* read_text_chunks(std::FILE* fp, std::map<std::string, std::string>* out) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return "cannot allocate png read struct";
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return "cannot allocate png info struct";
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return "libpng read error";
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_textp texts = nullptr;
  int count = 0;
  png_get_text(png, info, &texts, &count);
  for (int i = 0; i < count; ++i) (*out)[texts[i].key] = std::string(texts[i].text, texts[i].text_length);
  png_destroy_read_struct(&png, &info, nullptr);
  return nullptr;
}

}  // namespace

std::map<std::string, std::string> png_read_text(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw FormatError("png_read_text: cannot open " + path);
  std::map<std::string, std::string> out;
  if (const char* err = read_text_chunks(fp.get(), &out)) throw FormatError("png_read_text: " + path + ": " + err);
  return out;
}

std::vector<std::string> list_png_files(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw FormatError("not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace abpn
