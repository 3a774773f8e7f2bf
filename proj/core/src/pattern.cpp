#include "slsdf/pattern.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "slsdf/rng.hpp"

namespace slsdf {

const char* pattern_kind_name(PatternKind k) {
  switch (k) {
    case PatternKind::RandomBinary: return "random-binary";
    case PatternKind::GrayCode: return "gray-code";
    case PatternKind::GrayCodeInverse: return "gray-code-inverse";
    case PatternKind::PhaseShift: return "phase-shift";
  }
  return "unknown";
}

PatternKind pattern_kind_from_name(const std::string& name) {
  if (name == "random-binary") return PatternKind::RandomBinary;
  if (name == "gray-code") return PatternKind::GrayCode;
  if (name == "gray-code-inverse") return PatternKind::GrayCodeInverse;
  if (name == "phase-shift") return PatternKind::PhaseShift;
  throw ConfigError("unknown pattern kind: " + name);
}

uint32_t gray_encode(uint32_t n) { return n ^ (n >> 1); }

uint32_t gray_decode(uint32_t g) {
  uint32_t n = g;
  for (uint32_t shift = 1; shift < 32; shift <<= 1) n ^= n >> shift;
  return n;
}

Pattern gen_random_pattern(int width, int height, int scale, int scale_index,
                           int index_in_scale, uint64_t seed, int vertical_tiles) {
  if (scale < 1 || scale > std::min(width, height))
    throw DomainError("pattern scale must be in [1, min(resolution)]");
  if (vertical_tiles < 1) throw DomainError("vertical_tiles must be >= 1");
  Pattern p;
  p.kind = PatternKind::RandomBinary;
  p.scale = scale;
  p.grid = ImageF(width, height);
  const int base_h = (height + vertical_tiles - 1) / vertical_tiles;
  const uint64_t pat_key = rng_key(seed, 0x7a11e5u, static_cast<uint64_t>(scale_index),
                                   static_cast<uint64_t>(index_in_scale));
  for (int y = 0; y < height; ++y) {
    const int yb = y % base_h;
    for (int x = 0; x < width; ++x) {
      const uint64_t cell = rng_key(pat_key, static_cast<uint64_t>(x / scale),
                                    static_cast<uint64_t>(yb / scale));
      p.grid.at(x, y) = rng_uniform(cell) < 0.5 ? 0.f : 1.f;
    }
  }
  return p;
}

PatternSet gen_random_multiscale(int width, int height, const std::vector<int>& scales,
                                 int per_scale, uint64_t seed, int vertical_tiles) {
  if (per_scale < 1) throw DomainError("per_scale must be >= 1");
  PatternSet set;
  set.rng_seed = seed;
  for (size_t si = 0; si < scales.size(); ++si)
    for (int i = 0; i < per_scale; ++i)
      set.patterns.push_back(gen_random_pattern(width, height, scales[si],
                                                static_cast<int>(si), i, seed, vertical_tiles));
  return set;
}

PatternSet gen_gray_code(int width, int height, int num_bits, bool with_inverse) {
  if (num_bits < 1 || num_bits > 12) throw DomainError("num_bits must be in [1,12]");
  int total_bits = 0;
  while ((1 << total_bits) < width) ++total_bits;
  if (num_bits > total_bits) throw DomainError("num_bits exceeds ceil(log2(width))");
  const int shift = total_bits - num_bits;
  PatternSet set;
  for (int k = 0; k < num_bits; ++k) {
    Pattern p;
    p.kind = PatternKind::GrayCode;
    p.bit = k;
    p.shift = shift;
    p.grid = ImageF(width, height);
    for (int x = 0; x < width; ++x) {
      const uint32_t code = gray_encode(static_cast<uint32_t>(x) >> shift);
      const float v = static_cast<float>((code >> (num_bits - 1 - k)) & 1u);
      for (int y = 0; y < height; ++y) p.grid.at(x, y) = v;
    }
    set.patterns.push_back(p);
    if (with_inverse) {
      Pattern inv = set.patterns.back();
      inv.kind = PatternKind::GrayCodeInverse;
      for (float& v : inv.grid.data) v = 1.f - v;
      set.patterns.push_back(std::move(inv));
    }
  }
  return set;
}

PatternSet gen_phase_shift(int width, int height, double wavelength, int steps) {
  if (wavelength < 4) throw DomainError("wavelength must be >= 4 px");
  if (steps < 3) throw DomainError("steps must be >= 3");
  constexpr double two_pi = 6.283185307179586476925286766559;
  PatternSet set;
  for (int k = 0; k < steps; ++k) {
    Pattern p;
    p.kind = PatternKind::PhaseShift;
    p.wavelength = wavelength;
    p.phase = two_pi * k / steps;
    p.grid = ImageF(width, height);
    for (int x = 0; x < width; ++x) {
      const float v = static_cast<float>(0.5 + 0.5 * std::cos(two_pi * x / wavelength + p.phase));
      for (int y = 0; y < height; ++y) p.grid.at(x, y) = v;
    }
    set.patterns.push_back(std::move(p));
  }
  return set;
}

namespace {
int reflect(int i, int n) {
  // reflective border: ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}
}  // namespace

Pattern blur(const Pattern& p, double sigma) {
  if (sigma < 0) throw DomainError("blur sigma must be >= 0");
  if (sigma == 0) return p;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  Pattern out = p;
  const int w = p.grid.width, h = p.grid.height;
  ImageF tmp(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * p.grid.at(reflect(x + i, w), y);
      tmp.at(x, y) = static_cast<float>(acc);
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * tmp.at(x, reflect(y + i, h));
      out.grid.at(x, y) = static_cast<float>(acc);
    }
  return out;
}

PatternSet blur(const PatternSet& set, double sigma) {
  PatternSet out;
  out.rng_seed = set.rng_seed;
  out.blur_sigma = sigma;
  out.patterns.reserve(set.patterns.size());
  for (const Pattern& p : set.patterns) out.patterns.push_back(blur(p, sigma));
  return out;
}

SampleResult sample_bilinear(const ImageF& grid, double u, double v) {
  SampleResult r;
  const int w = grid.width, h = grid.height;
  double uc = u, vc = v;
  if (uc < 0 || uc > w - 1 || vc < 0 || vc > h - 1) {
    r.out_of_bounds = true;
    uc = std::clamp(uc, 0.0, static_cast<double>(w - 1));
    vc = std::clamp(vc, 0.0, static_cast<double>(h - 1));
  }
  int x0 = static_cast<int>(std::floor(uc));
  int y0 = static_cast<int>(std::floor(vc));
  if (x0 >= w - 1) x0 = w - 2;
  if (y0 >= h - 1) y0 = h - 2;
  if (w == 1) x0 = 0;
  if (h == 1) y0 = 0;
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fu = uc - x0, fv = vc - y0;
  const double v00 = grid.at(x0, y0), v10 = grid.at(x1, y0);
  const double v01 = grid.at(x0, y1), v11 = grid.at(x1, y1);
  r.value = (1 - fu) * (1 - fv) * v00 + fu * (1 - fv) * v10 + (1 - fu) * fv * v01 + fu * fv * v11;
  r.du = (1 - fv) * (v10 - v00) + fv * (v11 - v01);
  r.dv = (1 - fu) * (v01 - v00) + fu * (v11 - v10);
  if (r.out_of_bounds) {
    // clamped coordinate: no variation across the frozen axis
    if (u < 0 || u > w - 1) r.du = 0;
    if (v < 0 || v > h - 1) r.dv = 0;
  }
  return r;
}

void save_pattern_set(const std::string& dir, PatternSet& set) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream m(fs::path(dir) / "patterns.manifest");
  if (!m) throw ConfigError("cannot write manifest in " + dir);
  m.precision(17);
  m << "SLPATTERNS 1\n";
  m << "count " << set.patterns.size() << "\n";
  m << "seed " << set.rng_seed << "\n";
  m << "width " << set.width() << "\nheight " << set.height() << "\n";
  m << "blur_sigma " << set.blur_sigma << "\n";
  for (size_t i = 0; i < set.patterns.size(); ++i) {
    Pattern& p = set.patterns[i];
    quantize16(p.grid);
    char name[32];
    std::snprintf(name, sizeof(name), "pattern_%03zu.pgm", i);
    write_pgm16((fs::path(dir) / name).string(), p.grid);
    m << "pattern " << i << " " << pattern_kind_name(p.kind) << " scale " << p.scale << " bit "
      << p.bit << " shift " << p.shift << " phase " << p.phase << " wavelength " << p.wavelength
      << " file " << name << "\n";
  }
}

PatternSet load_pattern_set(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream m(fs::path(dir) / "patterns.manifest");
  if (!m) throw ConfigError("no patterns.manifest in " + dir);
  std::string magic, version;
  m >> magic >> version;
  if (magic != "SLPATTERNS" || version != "1") throw ConfigError("bad pattern manifest in " + dir);
  PatternSet set;
  size_t count = 0;
  std::string key;
  while (m >> key) {
    if (key == "count") m >> count;
    else if (key == "seed") m >> set.rng_seed;
    else if (key == "width" || key == "height") { int dummy; m >> dummy; }
    else if (key == "blur_sigma") m >> set.blur_sigma;
    else if (key == "pattern") {
      size_t idx;
      std::string kind, file, k;
      Pattern p;
      m >> idx >> kind;
      p.kind = pattern_kind_from_name(kind);
      m >> k >> p.scale >> k >> p.bit >> k >> p.shift >> k >> p.phase >> k >> p.wavelength >> k >> file;
      p.grid = read_pgm16((fs::path(dir) / file).string());
      set.patterns.push_back(std::move(p));
    } else {
      throw ConfigError("unknown manifest key '" + key + "' in " + dir);
    }
  }
  if (set.patterns.size() != count) throw ConfigError("manifest count mismatch in " + dir);
  for (const Pattern& p : set.patterns)
    if (p.grid.width != set.width() || p.grid.height != set.height())
      throw ConfigError("pattern dimensions differ within the set: " + dir);
  return set;
}

}  // namespace slsdf
