#include "slipforge/texture.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>

#include "slipforge/errors.hpp"

namespace slipforge {

namespace {

constexpr double kTwoPi = 6.283185307179586;

struct TextureDef {
  TextureKind kind = TextureKind::checker;
  double lo = 0.25;
  double hi = 0.75;
  int cells = 4;      // checker cells / stripe count / noise lattice period / pattern grid
  int variant = 0;    // orientation, wave shape or pattern sub-type
  int octaves = 1;
  std::uint32_t seed = 0;
};

std::array<TextureDef, kTextureCount> build_table() {
  std::array<TextureDef, kTextureCount> t{};
  for (int i = 0; i < 12; ++i) {
    auto& d = t[static_cast<std::size_t>(i)];
    d.kind = TextureKind::checker;
    d.cells = 2 + 2 * (i % 6);
    d.lo = 0.15 + 0.05 * (i / 6);
    d.hi = d.lo + 0.62;  // keeps adjacent cells >= 0.3 apart after the contrast halving below
  }
  for (int i = 0; i < 12; ++i) {
    auto& d = t[static_cast<std::size_t>(12 + i)];
    d.kind = TextureKind::stripes;
    d.cells = std::array{3, 5, 8, 12}[static_cast<std::size_t>(i % 4)];
    d.variant = i % 3 + 3 * ((i / 4) % 2);  // orientation 0..2, +3 for sinusoidal
    d.lo = 0.2;
    d.hi = 0.8 - 0.05 * (i / 4);
  }
  for (int i = 0; i < 12; ++i) {
    auto& d = t[static_cast<std::size_t>(24 + i)];
    d.kind = TextureKind::value_noise;
    d.cells = std::array{4, 8, 16}[static_cast<std::size_t>(i % 3)];
    d.octaves = 1 + (i / 3) % 3;
    d.seed = 0x9E37u * static_cast<std::uint32_t>(i + 1);
    d.lo = 0.15;
    d.hi = 0.85;
  }
  for (int i = 0; i < 12; ++i) {
    auto& d = t[static_cast<std::size_t>(36 + i)];
    d.kind = TextureKind::pattern;
    d.variant = i % 4;  // dots, bricks, rings, gradient noise
    d.cells = 3 + (i / 4) * 2;
    d.seed = 0x51EDu * static_cast<std::uint32_t>(i + 7);
    d.lo = 0.2;
    d.hi = 0.8;
  }
  // Moderate contrast keeps event rates at a realistic scale: a full-range
  // pattern moving across the sensor fires several events per pixel per frame.
  for (auto& d : t) {
    const double mid = 0.5 * (d.lo + d.hi), half = 0.25 * (d.hi - d.lo);
    d.lo = mid - half;
    d.hi = mid + half;
  }
  return t;
}

const std::array<TextureDef, kTextureCount>& table() {
  static const auto t = build_table();
  return t;
}

const TextureDef& lookup(int id) {
  if (id < 0 || id >= kTextureCount) throw ParamError("unknown texture id " + std::to_string(id));
  return table()[static_cast<std::size_t>(id)];
}

double wrap(double u) { return u - std::floor(u); }

double lattice(int ix, int iy, int period, std::uint32_t seed) {
  ix = ((ix % period) + period) % period;
  iy = ((iy % period) + period) % period;
  std::uint32_t h = static_cast<std::uint32_t>(ix) * 0x8DA6B343u ^
                    static_cast<std::uint32_t>(iy) * 0xD8163841u ^ seed * 0xCB1AB31Fu;
  h ^= h >> 13;
  h *= 0x5BD1E995u;
  h ^= h >> 15;
  return static_cast<double>(h & 0xFFFFFFu) / static_cast<double>(0xFFFFFF);
}

double fade(double t) { return t * t * (3.0 - 2.0 * t); }

/// Tileable value noise in [0, 1].
double value_noise(double u, double v, int period, int octaves, std::uint32_t seed) {
  double sum = 0.0, amp = 1.0, total = 0.0;
  for (int o = 0; o < octaves; ++o) {
    const int p = period << o;
    const double x = u * p, y = v * p;
    const double fx = std::floor(x), fy = std::floor(y);
    const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
    const double tx = fade(x - fx), ty = fade(y - fy);
    const std::uint32_t s = seed + 101u * static_cast<std::uint32_t>(o);
    const double a = lattice(ix, iy, p, s), b = lattice(ix + 1, iy, p, s);
    const double c = lattice(ix, iy + 1, p, s), d = lattice(ix + 1, iy + 1, p, s);
    sum += amp * ((a + (b - a) * tx) + ((c + (d - c) * tx) - (a + (b - a) * tx)) * ty);
    total += amp;
    amp *= 0.5;
  }
  return sum / total;
}

double eval(const TextureDef& d, double u, double v) {
  switch (d.kind) {
    case TextureKind::checker: {
      const int cu = static_cast<int>(std::floor(u * d.cells));
      const int cv = static_cast<int>(std::floor(v * d.cells));
      return ((cu + cv) & 1) ? d.hi : d.lo;
    }
    case TextureKind::stripes: {
      const int orient = d.variant % 3;
      const double s = orient == 0 ? u : (orient == 1 ? v : wrap(u + v));
      const double phase = s * d.cells;
      if (d.variant >= 3) {
        return d.lo + (d.hi - d.lo) * (0.5 + 0.5 * std::sin(kTwoPi * phase));
      }
      return (phase - std::floor(phase)) < 0.5 ? d.hi : d.lo;
    }
    case TextureKind::value_noise: {
      // Stretch the noise (roughly N(0.5, small)) to use most of [lo, hi].
      const double n = value_noise(u, v, d.cells, d.octaves, d.seed);
      const double s = std::clamp(0.5 + 1.6 * (n - 0.5), 0.0, 1.0);
      return d.lo + (d.hi - d.lo) * s;
    }
    case TextureKind::pattern: {
      const double x = u * d.cells, y = v * d.cells;
      const double fx = x - std::floor(x), fy = y - std::floor(y);
      switch (d.variant) {
        case 0: {  // dots
          const double r2 = (fx - 0.5) * (fx - 0.5) + (fy - 0.5) * (fy - 0.5);
          return r2 < 0.09 ? d.hi : d.lo + 0.1;
        }
        case 1: {  // bricks: offset every other row, dark mortar lines
          const int row = static_cast<int>(std::floor(y));
          const double bx = wrap(x + (row & 1) * 0.5);
          const bool mortar = fy < 0.12 || bx < 0.08;
          return mortar ? d.lo : d.lo + (d.hi - d.lo) * (0.6 + 0.4 * lattice(static_cast<int>(std::floor(x + (row & 1) * 0.5)), row, d.cells, d.seed));
        }
        case 2: {  // concentric rings around each cell center
          const double r = std::sqrt((fx - 0.5) * (fx - 0.5) + (fy - 0.5) * (fy - 0.5));
          return d.lo + (d.hi - d.lo) * (0.5 + 0.5 * std::cos(kTwoPi * 3.0 * r));
        }
        default: {  // gradient modulated by noise
          const double g = 0.5 + 0.5 * std::sin(kTwoPi * u);
          const double n = value_noise(u, v, 8, 2, d.seed);
          return d.lo + (d.hi - d.lo) * std::clamp(0.5 * g + 0.5 * n, 0.0, 1.0);
        }
      }
    }
  }
  return 0.5;
}

}  // namespace

TextureKind texture_kind(int id) { return lookup(id).kind; }

double checker_period(int id) {
  const TextureDef& d = lookup(id);
  if (d.kind != TextureKind::checker) throw ParamError("texture " + std::to_string(id) + " is not a checker");
  return 2.0 / d.cells;
}

double procedural_texture(int id, double u, double v) {
  const TextureDef& d = lookup(id);
  return eval(d, wrap(u), wrap(v));
}


MipTexture::MipTexture(int id) {
  lookup(id);
  std::vector<float> base(static_cast<std::size_t>(kBaseSize) * kBaseSize);
  for (int y = 0; y < kBaseSize; ++y) {
    for (int x = 0; x < kBaseSize; ++x) {
      base[static_cast<std::size_t>(y) * kBaseSize + x] = static_cast<float>(
          procedural_texture(id, (x + 0.5) / kBaseSize, (y + 0.5) / kBaseSize));
    }
  }
  levels_.push_back(std::move(base));
  for (int size = kBaseSize / 2; size >= 1; size /= 2) {
    const std::vector<float>& prev = levels_.back();
    const int ps = size * 2;
    std::vector<float> next(static_cast<std::size_t>(size) * size);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const std::size_t i = static_cast<std::size_t>(2 * y) * ps + 2 * x;
        next[static_cast<std::size_t>(y) * size + x] =
            0.25f * (prev[i] + prev[i + 1] + prev[i + ps] + prev[i + ps + 1]);
      }
    }
    levels_.push_back(std::move(next));
  }
}

const MipTexture& MipTexture::get(int id) {
  static std::once_flag flags[kTextureCount];
  static std::unique_ptr<MipTexture> cache[kTextureCount];
  lookup(id);
  const auto i = static_cast<std::size_t>(id);
  std::call_once(flags[i], [&] { cache[i] = std::make_unique<MipTexture>(id); });
  return *cache[i];
}

double MipTexture::bilinear(int level, double u, double v, bool wrap_uv) const {
  const int size = kBaseSize >> level;
  const int mask = size - 1;
  const float* tex = levels_[static_cast<std::size_t>(level)].data();
  const double x = u * size - 0.5, y = v * size - 0.5;
  const double fx = std::floor(x), fy = std::floor(y);
  const double tx = x - fx, ty = y - fy;
  int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  int x1 = x0 + 1, y1 = y0 + 1;
  if (wrap_uv) {
    x0 &= mask;
    x1 &= mask;
    y0 &= mask;
    y1 &= mask;
  } else {
    x0 = std::clamp(x0, 0, mask);
    x1 = std::clamp(x1, 0, mask);
    y0 = std::clamp(y0, 0, mask);
    y1 = std::clamp(y1, 0, mask);
  }
  const double a = tex[y0 * size + x0], b = tex[y0 * size + x1];
  const double c = tex[y1 * size + x0], d = tex[y1 * size + x1];
  const double top = a + (b - a) * tx;
  return top + ((c + (d - c) * tx) - top) * ty;
}

namespace {

/// Piecewise-linear log2 (exact at powers of two, monotone, continuous).
/// Valid for positive normal x.
double approx_log2(double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  const int e = static_cast<int>((bits >> 52) & 0x7FF) - 1023;
  const double m = std::bit_cast<double>((bits & 0x000FFFFFFFFFFFFFull) | 0x3FF0000000000000ull);
  return e + (m - 1.0);
}

}  // namespace

double MipTexture::sample(double u, double v, double footprint, bool wrap_uv) const {
  const double lod = std::clamp(approx_log2(std::max(footprint * kBaseSize, 1e-12)), 0.0,
                                static_cast<double>(levels() - 1));
  const int l0 = static_cast<int>(lod);
  const double t = lod - l0;
  const double s0 = bilinear(l0, u, v, wrap_uv);
  if (t == 0.0 || l0 + 1 >= levels()) return s0;
  return s0 + (bilinear(l0 + 1, u, v, wrap_uv) - s0) * t;
}

}  // namespace slipforge
