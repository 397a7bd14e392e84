#include <algorithm>
#include <cmath>

#include "gama/scene.hpp"

namespace gama {

namespace {

bool inside(GlyphShape shape, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  switch (shape) {
    case GlyphShape::disk: return u * u + v * v <= 1.0;
    case GlyphShape::square: return au <= 0.8 && av <= 0.8;
    case GlyphShape::cross: return (au <= 0.3 && av <= 1.0) || (av <= 0.3 && au <= 1.0);
    case GlyphShape::triangle: return v >= -0.9 && v <= 0.9 && au <= (v + 0.9) / 1.8;
    case GlyphShape::ring: {
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.3;
    }
    case GlyphShape::diamond: return au + av <= 1.0;
    case GlyphShape::hbar: return av <= 0.35 && au <= 1.0;
    case GlyphShape::vbar: return au <= 0.35 && av <= 1.0;
    case GlyphShape::xmark: return std::abs(au - av) <= 0.3 && au <= 1.0 && av <= 1.0;
    case GlyphShape::frame: {
      const double m = std::max(au, av);
      return m <= 1.0 && m >= 0.6;
    }
  }
  return false;
}

std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

struct Box {
  int y, x, size;
  int overlap(const Box& o) const {
    const int h = std::min(y + size, o.y + o.size) - std::max(y, o.y);
    const int w = std::min(x + size, o.x + o.size) - std::max(x, o.x);
    return (h > 0 && w > 0) ? h * w : 0;
  }
};

}  // namespace

const std::vector<std::string>& glyph_names() {
  static const std::vector<std::string> names = {"disk",    "square", "cross", "triangle", "ring",
                                                 "diamond", "hbar",   "vbar",  "xmark",    "frame"};
  return names;
}

GlyphShape glyph_from_name(const std::string& name) {
  const auto& names = glyph_names();
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(ErrorKind::data, "unknown glyph class '" + name + "'");
  return static_cast<GlyphShape>(it - names.begin());
}

DistributionStyle distribution_style(const std::string& distribution_id) {
  DistributionStyle style;
  style.id = distribution_id;
  if (distribution_id == "shapes-a") return style;
  if (distribution_id == "shapes-b") {
    style.outlined = true;
    style.hue_shift = 0.5;
    style.value = 0.75;
    style.background = 0.6;
    style.min_size = 11;
    style.max_size = 15;
    return style;
  }
  throw Error(ErrorKind::config, "distribution_id: unknown distribution '" + distribution_id +
                                     "' (expected shapes-a or shapes-b)");
}

std::vector<ClassSpec> make_class_specs(const DistributionStyle& style, int num_classes) {
  const auto& names = glyph_names();
  if (num_classes < 1 || num_classes > static_cast<int>(names.size()))
    throw Error(ErrorKind::config, "num_classes: must be in [1, " + std::to_string(names.size()) + "]");
  std::vector<ClassSpec> specs;
  for (int c = 0; c < num_classes; ++c) {
    const double hue = (static_cast<double>(c) + style.hue_shift) / num_classes;
    specs.push_back({c, names[c], static_cast<GlyphShape>(c), hsv_to_rgb(hue, 0.85, style.value)});
  }
  return specs;
}

Sample render_scene(const std::vector<int>& class_ids, Pcg64& rng, const CanvasDims& canvas,
                    const std::vector<ClassSpec>& specs, const DistributionStyle& style) {
  if (class_ids.empty()) throw Error(ErrorKind::data, "render_scene: at least one object required");
  if (class_ids.size() > kMaxObjectsPerScene)
    throw Error(ErrorKind::data, "render_scene: too many objects (max 4)");
  const int num_classes = static_cast<int>(specs.size());
  std::vector<uint8_t> labels(num_classes, 0);
  for (int id : class_ids) {
    if (id < 0 || id >= num_classes) throw Error(ErrorKind::data, "render_scene: invalid class id");
    if (labels[id]) throw Error(ErrorKind::data, "render_scene: duplicate class id");
    labels[id] = 1;
  }
  const int t = canvas.channels, h = canvas.height, w = canvas.width;
  if (t != 3 && t != 1) throw Error(ErrorKind::config, "render_scene: channels must be 1 or 3");
  if (h < style.max_size || w < style.max_size)
    throw Error(ErrorKind::config, "render_scene: canvas smaller than glyph size");

  auto image = Tensor<float>::zeros({t, h, w});
  float* px = image.ptr();
  for (int i = 0; i < t * h * w; ++i)
    px[i] = static_cast<float>(style.background + rng.uniform(-style.background_noise, style.background_noise));

  std::vector<Box> placed;
  for (int id : class_ids) {
    Box box{};
    for (int attempt = 0; attempt < 64; ++attempt) {
      const int size = style.min_size + static_cast<int>(rng.below(style.max_size - style.min_size + 1));
      box = {static_cast<int>(rng.below(h - size + 1)), static_cast<int>(rng.below(w - size + 1)), size};
      bool ok = true;
      for (const auto& other : placed) {
        const int smaller = std::min(box.size, other.size);
        if (2 * box.overlap(other) > smaller * smaller) ok = false;
      }
      if (ok) break;
    }
    placed.push_back(box);

    std::array<float, 3> color = specs[id].base_color;
    for (auto& ch : color)
      ch = std::clamp(ch + static_cast<float>(rng.uniform(-style.color_jitter, style.color_jitter)), 0.0f, 1.0f);
    const double half = box.size / 2.0;
    for (int yy = 0; yy < box.size; ++yy)
      for (int xx = 0; xx < box.size; ++xx) {
        const double u = (xx + 0.5 - half) / half, v = (yy + 0.5 - half) / half;
        bool on = inside(specs[id].shape, u, v);
        if (on && style.outlined) on = !inside(specs[id].shape, u / 0.6, v / 0.6);
        if (!on) continue;
        const int py = box.y + yy, pxx = box.x + xx;
        if (t == 3) {
          for (int ch = 0; ch < 3; ++ch) px[(ch * h + py) * w + pxx] = color[ch];
        } else {
          px[py * w + pxx] = (color[0] + color[1] + color[2]) / 3.0f;
        }
      }
  }
  return Sample{std::move(image), std::move(labels)};
}

}  // namespace gama
