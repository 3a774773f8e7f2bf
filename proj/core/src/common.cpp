#include "slsdf/common.hpp"

#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace slsdf {

void write_pgm16(const std::string& path, const ImageF& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << "P5\n" << img.width << " " << img.height << "\n65535\n";
  std::vector<unsigned char> row(static_cast<size_t>(img.width) * 2);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      float v = img.at(x, y);
      if (v < 0.f) v = 0.f;
      if (v > 1.f) v = 1.f;
      auto q = static_cast<uint16_t>(std::lround(v * 65535.0));
      row[2 * x] = static_cast<unsigned char>(q >> 8);  // big-endian per spec
      row[2 * x + 1] = static_cast<unsigned char>(q & 0xff);
    }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw ConfigError("short write: " + path);
}

namespace {
int next_pnm_token(std::istream& in) {
  // skips whitespace and '#' comments
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      in.unget();
      int v = 0;
      in >> v;
      return v;
    }
    c = in.get();
  }
  throw ConfigError("truncated PGM header");
}
}  // namespace

ImageF read_pgm16(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open: " + path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '5') throw ConfigError("not a binary PGM: " + path);
  int w = next_pnm_token(f);
  int h = next_pnm_token(f);
  int maxval = next_pnm_token(f);
  if (maxval != 65535) throw ConfigError("expected 16-bit PGM (maxval 65535): " + path);
  f.get();  // single whitespace byte before payload
  ImageF img(w, h);
  std::vector<unsigned char> row(static_cast<size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    f.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!f) throw ConfigError("truncated PGM payload: " + path);
    for (int x = 0; x < w; ++x) {
      uint16_t q = static_cast<uint16_t>((row[2 * x] << 8) | row[2 * x + 1]);
      img.at(x, y) = static_cast<float>(q) / 65535.0f;
    }
  }
  return img;
}

void quantize16(ImageF& img) {
  for (float& v : img.data) {
    float c = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
    v = static_cast<float>(std::lround(c * 65535.0)) / 65535.0f;
  }
}

void write_float_map(const std::string& path, const ImageF& img, const FloatMapHeader& hdr) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << "SLFLOAT 1\n";
  f << "width " << img.width << "\n";
  f << "height " << img.height << "\n";
  f << "t_near " << hdr.t_near << "\n";
  f << "t_far " << hdr.t_far << "\n";
  f << "source " << hdr.source << "\n";
  f << "data\n";
  static_assert(sizeof(float) == 4);
  // assumes little-endian host, as does the rest of this codebase
  f.write(reinterpret_cast<const char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size() * 4));
  if (!f) throw ConfigError("short write: " + path);
}

ImageF read_float_map(const std::string& path, FloatMapHeader* hdr_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open: " + path);
  std::string magic, version;
  f >> magic >> version;
  if (magic != "SLFLOAT" || version != "1") throw ConfigError("not a float map: " + path);
  FloatMapHeader hdr;
  std::string key;
  while (f >> key) {
    if (key == "data") break;
    if (key == "width") f >> hdr.width;
    else if (key == "height") f >> hdr.height;
    else if (key == "t_near") f >> hdr.t_near;
    else if (key == "t_far") f >> hdr.t_far;
    else if (key == "source") f >> hdr.source;
    else throw ConfigError("unknown float-map header key '" + key + "' in " + path);
  }
  if (key != "data" || hdr.width <= 0 || hdr.height <= 0)
    throw ConfigError("bad float-map header: " + path);
  f.get();  // newline after "data"
  ImageF img(hdr.width, hdr.height);
  f.read(reinterpret_cast<char*>(img.data.data()),
         static_cast<std::streamsize>(img.data.size() * 4));
  if (!f) throw ConfigError("truncated float map: " + path);
  if (hdr_out) *hdr_out = hdr;
  return img;
}

uint64_t hash_bytes(const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t hash_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string s = ss.str();
  return hash_bytes(s.data(), s.size());
}

void tune_allocator_for_large_buffers() {
#ifdef __GLIBC__
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
  });
#endif
}

}  // namespace slsdf
