#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace slsdf {

/// Bad user-supplied configuration, file, or CLI input (maps to exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside an operation's stated domain.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Degenerate or invalid geometric configuration (behind-plane projection,
/// near-parallel triangulation, non-rotation matrix).
class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure at runtime, e.g. NaN loss (maps to exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major single-channel float image. Used for patterns, captured
/// images, photometric maps and column maps alike.
struct ImageF {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  ImageF() = default;
  ImageF(int w, int h, float fill = 0.f)
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  float& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return data.size(); }
  bool same_size(const ImageF& o) const { return width == o.width && height == o.height; }
};

// 16-bit binary PGM (P5, maxval 65535, big-endian samples per the netpbm spec).
// Values are mapped [0,1] <-> [0,65535] with round-to-nearest.
void write_pgm16(const std::string& path, const ImageF& img);
ImageF read_pgm16(const std::string& path);

/// Quantize to the 16-bit grid the PGM container stores, so in-memory data
/// and a written/re-read file agree bit-exactly.
void quantize16(ImageF& img);

// Float-map container shared by depth, a/b, error and column maps:
// text header followed by little-endian float32 payload, NaN = invalid.
struct FloatMapHeader {
  int width = 0;
  int height = 0;
  double t_near = 0.0;
  double t_far = 0.0;
  std::string source = "unknown";
};
void write_float_map(const std::string& path, const ImageF& img, const FloatMapHeader& hdr);
ImageF read_float_map(const std::string& path, FloatMapHeader* hdr_out = nullptr);

/// FNV-1a over raw bytes; used for reproducibility checksums in tests/CLI.
uint64_t hash_bytes(const void* data, size_t n);
uint64_t hash_file(const std::string& path);

/// Raise glibc's mmap threshold so the multi-megabyte tape buffers recycle
/// through the free lists instead of faulting fresh pages every iteration.
/// Idempotent; called by the training and extraction entry points.
void tune_allocator_for_large_buffers();

}  // namespace slsdf
