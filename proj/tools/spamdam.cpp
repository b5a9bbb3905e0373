#include <png.h>

#include <cstdio>
#include <memory>
#include <string>

#include "spamdam/cli.hpp"

namespace {

// Decodes any PNG to 8-bit grayscale.
spamdam::ocr::GrayImage load_png_gray(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw std::runtime_error("cannot read PNG '" + path + "': " + img.message);
  }
  img.format = PNG_FORMAT_GRAY;
  spamdam::ocr::GrayImage out;
  out.width = img.width;
  out.height = img.height;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw std::runtime_error("cannot decode PNG '" + path + "': " + msg);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  spamdam::cli::Environment env;
  env.load_image = load_png_gray;
  return spamdam::cli::run(argc, argv, env);
}
