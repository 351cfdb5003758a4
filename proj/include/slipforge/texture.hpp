#pragma once

#include <vector>

namespace slipforge {

inline constexpr int kTextureCount = 48;

enum class TextureKind { checker, stripes, value_noise, pattern };

TextureKind texture_kind(int id);

/// Full period (two cells) of a checker texture along u. ParamError for
/// non-checker ids.
double checker_period(int id);

/// Intensity of texture `id` at (u, v). Every texture tiles seamlessly on the
/// unit square and has mean intensity in [0.2, 0.8]. Coordinates outside
/// [0, 1] wrap. Throws ParamError for an unregistered id.
double procedural_texture(int id, double u, double v);

/// Texture `id` sampled on a 512x512 texel grid with a full mip pyramid.
/// Lookups are trilinear, with the level chosen from the screen-space
/// footprint, which keeps minified textures from aliasing.
class MipTexture {
 public:
  static constexpr int kBaseSize = 512;

  /// Process-wide cached texture (built on first use, thread-safe).
  static const MipTexture& get(int id);

  explicit MipTexture(int id);

  /// `footprint` is the pixel footprint in texture units (1 = whole tile).
  /// wrap = false clamps at the borders instead of tiling.
  double sample(double u, double v, double footprint, bool wrap = true) const;

  int levels() const { return static_cast<int>(levels_.size()); }

 private:
  double bilinear(int level, double u, double v, bool wrap) const;

  std::vector<std::vector<float>> levels_;
};

}  // namespace slipforge
