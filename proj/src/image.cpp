#include "lawn/image.hpp"

#include <cstdio>
#include <fstream>
#include <string>

namespace lawn::imaging {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error("pnm: " + path.string() + ": " + what);
}

int read_int_token(std::istream& in) {
  int c = in.get();
  while (c == ' ' || c == '\t' || c == '\r' || c == '\n') c = in.get();
  if (c == EOF || c < '0' || c > '9') return -1;
  long v = 0;
  while (c >= '0' && c <= '9') {
    v = v * 10 + (c - '0');
    if (v > 1 << 30) return -1;
    c = in.get();
  }
  // c is the single whitespace terminating the token; leave the stream here.
  if (c != ' ' && c != '\t' && c != '\r' && c != '\n') return -1;
  return static_cast<int>(v);
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  int channels;
  if (m0 == 'P' && m1 == '5') channels = 1;
  else if (m0 == 'P' && m1 == '6') channels = 3;
  else fail(path, "bad magic (want P5 or P6)");
  int w = read_int_token(in);
  int h = read_int_token(in);
  int maxval = read_int_token(in);
  if (w < 1 || h < 1) fail(path, "bad dimensions");
  if (maxval != 255) fail(path, "unsupported maxval (want 255)");
  Image img(w, h, channels);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.size()));
  if (static_cast<size_t>(in.gcount()) != img.size()) fail(path, "truncated pixel data");
  return img;
}

namespace {

void write_pnm_raw(const char* magic, int w, int h, const uint8_t* data,
                   size_t n, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("pnm: " + path.string() + ": cannot open for write");
  out << magic << '\n' << w << ' ' << h << '\n' << "255" << '\n';
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw std::runtime_error("pnm: " + path.string() + ": write failed");
}

}  // namespace

void write_pnm(const Image& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("write_pnm: channels must be 1 or 3");
  write_pnm_raw(img.channels == 1 ? "P5" : "P6", img.width, img.height,
                img.data.data(), img.size(), path);
}

void write_pnm(const BinaryImage& img, const std::filesystem::path& path) {
  write_pnm_raw("P5", img.width, img.height, img.data.data(), img.data.size(), path);
}

}  // namespace lawn::imaging
