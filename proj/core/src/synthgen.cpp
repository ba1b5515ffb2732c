#include "objcrop/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "objcrop/errors.hpp"
#include "objcrop/ppm.hpp"
#include "objcrop/rng.hpp"

namespace objcrop {

using nlohmann::json;

void SynthConfig::validate() const {
  if (n_images < 0) throw ConfigError("synth: n_images must be >= 0");
  if (img_side < 8) throw ConfigError("synth: img_side must be >= 8");
  if (!(objects_lo >= 1 && objects_lo <= objects_hi))
    throw ConfigError("synth: need 1 <= objects_lo <= objects_hi");
  if (n_classes < 1 || n_classes > 32)
    throw ConfigError("synth: n_classes must be in [1,32] (8 shapes x 4 colors)");
  if (!(obj_scale_lo > 0.0 && obj_scale_lo <= obj_scale_hi && obj_scale_hi <= 0.9))
    throw ConfigError("synth: need 0 < obj_scale_lo <= obj_scale_hi <= 0.9");
  if (longtail_exponent < 0.0) throw ConfigError("synth: longtail_exponent must be >= 0");
  if (min_distinct_classes < 1 || min_distinct_classes > n_classes)
    throw ConfigError("synth: min_distinct_classes must be in [1, n_classes]");
  if (objects_lo < min_distinct_classes)
    throw ConfigError("synth: objects_lo must be >= min_distinct_classes");
  if (bg.cell < 2) throw ConfigError("synth: bg.cell must be >= 2");
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw ConfigError("synth: train_frac must be in (0,1)");
}

namespace {

constexpr int kNumShapes = 8;
constexpr int kNumColors = 4;

const std::array<std::array<std::uint8_t, 3>, kNumColors> kColors{{
    {230, 40, 40},   // red
    {40, 200, 70},   // green
    {60, 90, 235},   // blue
    {235, 200, 40},  // yellow
}};

// Even-odd point-in-polygon test.
bool in_polygon(const std::vector<std::pair<double, double>>& poly, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto [xi, yi] = poly[i];
    const auto [xj, yj] = poly[j];
    if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
  }
  return inside;
}

std::vector<std::pair<double, double>> star_polygon(double r) {
  std::vector<std::pair<double, double>> poly;
  for (int i = 0; i < 10; ++i) {
    const double rad = (i % 2 == 0) ? r : 0.45 * r;
    const double angle = -std::numbers::pi / 2.0 + i * std::numbers::pi / 5.0;
    poly.emplace_back(rad * std::cos(angle), rad * std::sin(angle));
  }
  return poly;
}

// Point-in-shape at offset (x,y) from the shape center, half-size r.
bool in_shape(int shape, double x, double y, double r,
              const std::vector<std::pair<double, double>>& poly) {
  switch (shape) {
    case 0: return x * x + y * y <= r * r;                          // circle
    case 1: return std::max(std::abs(x), std::abs(y)) <= r;        // square
    case 2:                                                         // triangle
      return in_polygon({{0.0, -r}, {-r, r * 0.8}, {r, r * 0.8}}, x, y);
    case 3:                                                         // cross
      return (std::abs(x) <= r / 3.0 && std::abs(y) <= r) ||
             (std::abs(y) <= r / 3.0 && std::abs(x) <= r);
    case 4: {                                                       // ring
      const double d2 = x * x + y * y;
      return d2 <= r * r && d2 >= (0.55 * r) * (0.55 * r);
    }
    case 5: return std::abs(x) + std::abs(y) <= r;                  // diamond
    case 6: return in_polygon(poly, x, y);                          // star
    case 7: return std::abs(x) <= r && std::abs(y) <= 0.3 * r;      // bar
  }
  return false;
}

// Draws one shape with 4x4 supersampled coverage; returns the tight bounding
// box of pixels with coverage >= 0.5, or nullopt if nothing was drawn.
std::optional<BBox> draw_shape(ImageRGB& img, int shape, int color, double cx, double cy,
                               double side) {
  const double r = side / 2.0;
  const auto poly = shape == 6 ? star_polygon(r) : std::vector<std::pair<double, double>>{};
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r - 1)));
  const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(cx + r + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r - 1)));
  const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + r + 1)));
  int bx0 = img.width, by0 = img.height, bx1 = -1, by1 = -1;
  for (int py = y0; py <= y1; ++py)
    for (int px = x0; px <= x1; ++px) {
      int hits = 0;
      for (int sy = 0; sy < 4; ++sy)
        for (int sx = 0; sx < 4; ++sx) {
          const double fx = px + (sx + 0.5) / 4.0 - cx;
          const double fy = py + (sy + 0.5) / 4.0 - cy;
          if (in_shape(shape, fx, fy, r, poly)) ++hits;
        }
      if (hits == 0) continue;
      const double cov = hits / 16.0;
      std::uint8_t* p = img.pixel(px, py);
      for (int c = 0; c < 3; ++c)
        p[c] = static_cast<std::uint8_t>(
            std::lround(p[c] * (1.0 - cov) + kColors[color][c] * cov));
      if (cov >= 0.5) {
        bx0 = std::min(bx0, px);
        by0 = std::min(by0, py);
        bx1 = std::max(bx1, px);
        by1 = std::max(by1, py);
      }
    }
  if (bx1 < bx0) return std::nullopt;
  return BBox{bx0, by0, bx1 - bx0 + 1, by1 - by0 + 1};
}

// Two-octave value noise on a random lattice, grayscale.
void draw_background(ImageRGB& img, const BgConfig& bg, Rng& rng) {
  auto lattice = [&](int cell) {
    const int gw = img.width / cell + 2, gh = img.height / cell + 2;
    std::vector<double> g(static_cast<std::size_t>(gw) * gh);
    for (auto& v : g) v = rng.uniform01();
    return std::make_tuple(g, gw, gh);
  };
  const int c1 = bg.cell, c2 = std::max(2, bg.cell / 2);
  auto [g1, w1, h1] = lattice(c1);
  auto [g2, w2, h2] = lattice(c2);
  auto sample = [](const std::vector<double>& g, int gw, int gh, double x, double y,
                   int cell) {
    const double fx = x / cell, fy = y / cell;
    const int ix = std::min(static_cast<int>(fx), gw - 2);
    const int iy = std::min(static_cast<int>(fy), gh - 2);
    const double tx = fx - ix, ty = fy - iy;
    const double a = g[static_cast<std::size_t>(iy) * gw + ix];
    const double b = g[static_cast<std::size_t>(iy) * gw + ix + 1];
    const double c = g[static_cast<std::size_t>(iy + 1) * gw + ix];
    const double d = g[static_cast<std::size_t>(iy + 1) * gw + ix + 1];
    return (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
  };
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double v = (2.0 / 3.0) * sample(g1, w1, h1, x, y, c1) +
                       (1.0 / 3.0) * sample(g2, w2, h2, x, y, c2);
      const auto gray = static_cast<std::uint8_t>(
          std::lround(std::clamp(bg.base + bg.amplitude * (v - 0.5), 0.0, 255.0)));
      std::uint8_t* p = img.pixel(x, y);
      p[0] = p[1] = p[2] = gray;
    }
}

std::vector<int> sample_classes(const SynthConfig& cfg, int k, Rng& rng) {
  // Class frequency ~ (rank+1)^-exponent, class id == rank.
  std::vector<double> cum(cfg.n_classes);
  double total = 0.0;
  for (int c = 0; c < cfg.n_classes; ++c) {
    total += std::pow(static_cast<double>(c + 1), -cfg.longtail_exponent);
    cum[c] = total;
  }
  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<int> classes(k);
    for (int i = 0; i < k; ++i) {
      const double u = rng.uniform01() * total;
      classes[i] = static_cast<int>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
      classes[i] = std::min(classes[i], cfg.n_classes - 1);
    }
    std::vector<int> distinct = classes;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (static_cast<int>(distinct.size()) >= cfg.min_distinct_classes) return classes;
  }
  throw ConfigError("synth: cannot satisfy min_distinct_classes");
}

}  // namespace

ImageRGB synth_render(const SynthConfig& cfg, std::uint64_t index,
                      std::vector<GtObject>* objects, int* dropped) {
  Rng rng = Rng::derive(cfg.seed, index);
  ImageRGB img(cfg.img_side, cfg.img_side);
  draw_background(img, cfg.bg, rng);

  const int k = static_cast<int>(rng.uniform_int(cfg.objects_lo, cfg.objects_hi));
  const std::vector<int> classes = sample_classes(cfg, k, rng);

  // Place objects with rejection on pairwise center distance.
  struct Placed {
    double cx, cy, side;
    int class_id;
  };
  std::vector<Placed> placed;
  int n_dropped = 0;
  for (int i = 0; i < k; ++i) {
    const double side = rng.uniform(cfg.obj_scale_lo, cfg.obj_scale_hi) * cfg.img_side;
    bool ok = false;
    double cx = 0, cy = 0;
    for (int attempt = 0; attempt < 100; ++attempt) {
      cx = rng.uniform(side / 2.0, cfg.img_side - side / 2.0);
      cy = rng.uniform(side / 2.0, cfg.img_side - side / 2.0);
      ok = true;
      if (!cfg.allow_overlap) {
        for (const auto& q : placed) {
          const double min_d = std::min(side, q.side) / 2.0;
          if (std::hypot(cx - q.cx, cy - q.cy) < min_d) {
            ok = false;
            break;
          }
        }
      }
      if (ok) break;
    }
    if (!ok) {
      ++n_dropped;
      continue;
    }
    placed.push_back({cx, cy, side, classes[i]});
  }

  for (const auto& p : placed) {
    const int shape = p.class_id / kNumColors;
    const int color = p.class_id % kNumColors;
    const auto box = draw_shape(img, shape, color, p.cx, p.cy, p.side);
    if (!box) {
      ++n_dropped;
      continue;
    }
    if (objects) objects->push_back({p.class_id, *box});
  }
  if (dropped) *dropped = n_dropped;
  return img;
}

GenerationReport synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir / "images");

  GenerationReport report;
  report.n_images = cfg.n_images;
  report.class_histogram.assign(cfg.n_classes, 0);

  DatasetManifest manifest;
  manifest.root = out_dir;

  for (int idx = 0; idx < cfg.n_images; ++idx) {
    std::vector<GtObject> objects;
    int dropped = 0;
    const ImageRGB img = synth_render(cfg, static_cast<std::uint64_t>(idx), &objects, &dropped);
    report.dropped_objects += dropped;

    ManifestEntry entry;
    char name[32];
    std::snprintf(name, sizeof name, "images/img_%06d.ppm", idx);
    entry.image = name;
    entry.width = cfg.img_side;
    entry.height = cfg.img_side;
    entry.objects = std::move(objects);
    for (const auto& o : entry.objects) {
      ++report.class_histogram[o.class_id];
      ++report.n_objects;
    }

    std::vector<int> distinct;
    for (const auto& o : entry.objects) distinct.push_back(o.class_id);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (static_cast<int>(distinct.size()) < cfg.min_distinct_classes)
      ++report.images_below_min_distinct;

    ppm_save(img, out_dir / entry.image);
    manifest.entries.push_back(std::move(entry));
  }

  manifest_write(manifest, out_dir / "manifest.jsonl");
  return report;
}

void report_write(const GenerationReport& r, const std::filesystem::path& path) {
  json j{{"n_images", r.n_images},
         {"n_objects", r.n_objects},
         {"dropped_objects", r.dropped_objects},
         {"images_below_min_distinct", r.images_below_min_distinct},
         {"class_histogram", r.class_histogram}};
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw MissingInputError("cannot write report: " + path.string());
  f << j.dump(2) << '\n';
}

}  // namespace objcrop
