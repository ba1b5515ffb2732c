#include "objcrop/objectness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "objcrop/errors.hpp"
#include "objcrop/ppm.hpp"
#include "objcrop/rng.hpp"

namespace objcrop {

using nlohmann::json;

void ProposalConfig::validate() const {
  if (n_max < 1) throw ConfigError("proposals: n_max must be >= 1");
  if (!(nms_iou > 0.0 && nms_iou < 1.0)) throw ConfigError("proposals: nms_iou must be in (0,1)");
  if (per_size_keep < 1) throw ConfigError("proposals: per_size_keep must be >= 1");
}

NgMap normed_gradient(const ImageRGB& img) {
  const int w = img.width, h = img.height;
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::uint8_t* p = img.pixel(x, y);
      gray[static_cast<std::size_t>(y) * w + x] = static_cast<std::uint8_t>(
          std::lround(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]));
    }
  NgMap ng(w, h);
  auto g = [&](int x, int y) -> int {
    return gray[static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1)];
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int dx = std::abs(g(x + 1, y) - g(x - 1, y));
      const int dy = std::abs(g(x, y + 1) - g(x, y - 1));
      // |gx|+|gy| with gx,gy the half central differences; rounded half-up.
      ng.at(x, y) = static_cast<std::uint8_t>(std::min((dx + dy + 1) / 2, 255));
    }
  return ng;
}

std::vector<WindowSize> reference_sizes() {
  static const std::array<int, 5> base{16, 32, 64, 128, 256};
  std::vector<WindowSize> out;
  for (int w : base)
    for (int h : base) {
      const double aspect = static_cast<double>(w) / h;
      if (aspect >= 0.25 && aspect <= 4.0) out.push_back({w, h});
    }
  return out;
}

namespace {

using Feature = std::array<double, BingModel::kTemplateLen>;

// NG window resized to the 8x8 template, values scaled to [0,1].
Feature window_feature(const NgMap& ng, const BBox& box) {
  const NgMap win = resize_bilinear(crop(ng, box), BingModel::kTemplateSide,
                                    BingModel::kTemplateSide);
  Feature f;
  double ss = 0.0;
  for (int i = 0; i < BingModel::kTemplateLen; ++i) {
    f[i] = win.data[i] / 255.0;
    ss += f[i] * f[i];
  }
  if (ss > 0.0) {
    const double inv = 1.0 / std::sqrt(ss);
    for (auto& v : f) v *= inv;
  }
  return f;
}

bool score_order(const Proposal& a, const Proposal& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.box.x != b.box.x) return a.box.x < b.box.x;
  return a.box.y < b.box.y;
}

// Slides the 8x8 template over the NG map resized for one quantized window
// size and returns the top `keep` windows with raw stage-1 scores, boxes
// mapped back to image coordinates.
std::vector<Proposal> scan_size(const NgMap& ng, const std::vector<float>& stage1,
                                WindowSize size, int keep) {
  constexpr int T = BingModel::kTemplateSide;
  const int W = ng.width, H = ng.height;
  const int rw = std::max(T, static_cast<int>(std::llround(W * static_cast<double>(T) / size.w)));
  const int rh = std::max(T, static_cast<int>(std::llround(H * static_cast<double>(T) / size.h)));
  const NgMap scaled = resize_bilinear(ng, rw, rh);

  std::vector<Proposal> local;  // box holds the window position in scaled coords
  local.reserve(static_cast<std::size_t>(rw - T + 1) * (rh - T + 1));
  for (int y = 0; y + T <= rh; ++y) {
    for (int x = 0; x + T <= rw; ++x) {
      double s = 0.0, ss = 0.0;
      const std::uint8_t* base = scaled.data.data() + static_cast<std::size_t>(y) * rw + x;
      for (int ty = 0; ty < T; ++ty) {
        const std::uint8_t* row = base + static_cast<std::size_t>(ty) * rw;
        const float* wt = stage1.data() + ty * T;
        for (int tx = 0; tx < T; ++tx) {
          s += wt[tx] * row[tx];
          ss += static_cast<double>(row[tx]) * row[tx];
        }
      }
      local.push_back({BBox{x, y, 0, 0}, ss > 0.0 ? s / std::sqrt(ss) : 0.0});
    }
  }
  std::sort(local.begin(), local.end(), score_order);
  // Light spatial suppression in template coordinates so the per-size quota
  // holds distinct peaks rather than shifted copies of one window.
  std::vector<Proposal> kept;
  for (const auto& p : local) {
    bool near = false;
    for (const auto& k : kept)
      if (std::abs(p.box.x - k.box.x) < 2 && std::abs(p.box.y - k.box.y) < 2) {
        near = true;
        break;
      }
    if (!near) {
      kept.push_back(p);
      if (kept.size() == static_cast<std::size_t>(keep)) break;
    }
  }
  local = std::move(kept);
  for (auto& p : local) {
    const int x = rw == T ? 0
                          : static_cast<int>(std::llround(
                                p.box.x * static_cast<double>(W - size.w) / (rw - T)));
    const int y = rh == T ? 0
                          : static_cast<int>(std::llround(
                                p.box.y * static_cast<double>(H - size.h) / (rh - T)));
    p.box = BBox{x, y, size.w, size.h};
  }
  return local;
}

}  // namespace

BingTrainResult bing_train(const DatasetManifest& data, const BingTrainConfig& cfg) {
  std::size_t n_gt = 0;
  for (const auto& e : data.entries) n_gt += e.objects.size();
  if (data.entries.empty() || n_gt == 0)
    throw MissingInputError("bing-train: dataset has no ground-truth boxes");

  BingModel model;
  model.sizes = reference_sizes();
  model.stage2.assign(model.sizes.size(), SizeCalibration{});

  // Collect features in deterministic manifest order. Positives are also
  // mirrored, matching the horizontal symmetry of objectness.
  std::vector<Feature> feats;
  std::vector<int> labels;
  Rng rng(cfg.seed);
  for (std::size_t ei = 0; ei < data.entries.size(); ++ei) {
    const auto& e = data.entries[ei];
    const ImageRGB img = ppm_load(data.image_path(e));
    const NgMap ng = normed_gradient(img);
    for (const auto& o : e.objects) {
      const Feature f = window_feature(ng, o.box);
      Feature mirrored;
      for (int y = 0; y < BingModel::kTemplateSide; ++y)
        for (int x = 0; x < BingModel::kTemplateSide; ++x)
          mirrored[y * BingModel::kTemplateSide + x] =
              f[y * BingModel::kTemplateSide + (BingModel::kTemplateSide - 1 - x)];
      feats.push_back(f);
      labels.push_back(+1);
      feats.push_back(mirrored);
      labels.push_back(+1);
    }
    Rng neg_rng = Rng::derive(cfg.seed, Rng::hash_str(e.image));
    int kept = 0;
    for (int attempt = 0; attempt < cfg.negatives_per_image * 3 && kept < cfg.negatives_per_image;
         ++attempt) {
      const int x1 = static_cast<int>(neg_rng.uniform_int(0, e.width - 1));
      const int x2 = static_cast<int>(neg_rng.uniform_int(0, e.width - 1));
      const int y1 = static_cast<int>(neg_rng.uniform_int(0, e.height - 1));
      const int y2 = static_cast<int>(neg_rng.uniform_int(0, e.height - 1));
      const BBox b{std::min(x1, x2), std::min(y1, y2), std::abs(x1 - x2) + 1,
                   std::abs(y1 - y2) + 1};
      bool ok = true;
      for (const auto& o : e.objects)
        if (iou(b, o.box) >= cfg.negative_iou_max) {
          ok = false;
          break;
        }
      if (!ok) continue;
      feats.push_back(window_feature(ng, b));
      labels.push_back(-1);
      ++kept;
    }
  }

  // Stage 1: hinge-loss SGD with L2, shuffled sample order per epoch.
  // Positives are upweighted to balance the random-negative majority.
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += y > 0;
  const double pos_weight =
      n_pos > 0 ? static_cast<double>(labels.size() - n_pos) / static_cast<double>(n_pos) : 1.0;
  std::vector<double> w(BingModel::kTemplateLen, 0.0);
  std::vector<std::size_t> order(feats.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    for (const std::size_t s : order) {
      const Feature& x = feats[s];
      const double y = labels[s];
      const double weight = y > 0 ? pos_weight : 1.0;
      double margin = 0.0;
      for (int i = 0; i < BingModel::kTemplateLen; ++i) margin += w[i] * x[i];
      margin *= y;
      for (int i = 0; i < BingModel::kTemplateLen; ++i) {
        w[i] *= 1.0 - cfg.lr * cfg.l2;
        if (margin < 1.0) w[i] += cfg.lr * weight * y * x[i];
      }
    }
  }
  model.stage1.resize(BingModel::kTemplateLen);
  for (int i = 0; i < BingModel::kTemplateLen; ++i) model.stage1[i] = static_cast<float>(w[i]);

  BingTrainResult res;

  // Final mean hinge loss over the training set.
  double hinge = 0.0;
  std::vector<double> scores(feats.size());
  for (std::size_t s = 0; s < feats.size(); ++s) {
    double v = 0.0;
    for (int i = 0; i < BingModel::kTemplateLen; ++i) v += w[i] * feats[s][i];
    scores[s] = v;
    hinge += std::max(0.0, 1.0 - labels[s] * v);
  }
  res.final_hinge_loss = hinge / static_cast<double>(feats.size());

  // Stage 2 calibrates the inference-time distribution: rerun the per-size
  // window scan on every training image, label the surviving windows by
  // IoU >= 0.5 against any GT box, and fit the per-size affine map to +-1
  // with class-balance weighting.
  std::vector<std::vector<std::pair<double, int>>> samples(model.sizes.size());
  for (const auto& e : data.entries) {
    const ImageRGB img = ppm_load(data.image_path(e));
    const NgMap ng = normed_gradient(img);
    for (std::size_t si = 0; si < model.sizes.size(); ++si) {
      if (model.sizes[si].w > img.width || model.sizes[si].h > img.height) continue;
      for (const auto& cand : scan_size(ng, model.stage1, model.sizes[si], 8)) {
        double best = 0.0;
        for (const auto& o : e.objects) best = std::max(best, iou(cand.box, o.box));
        samples[si].push_back({cand.score, best >= 0.5 ? +1 : -1});
      }
    }
  }
  for (std::size_t si = 0; si < model.sizes.size(); ++si) {
    const auto& sv = samples[si];
    if (sv.empty()) {
      res.warnings.push_back("size " + std::to_string(model.sizes[si].w) + "x" +
                             std::to_string(model.sizes[si].h) +
                             ": no training samples, identity calibration");
      continue;
    }
    std::size_t sz_pos = 0;
    for (const auto& [s, y] : sv) sz_pos += y > 0;
    const double wp =
        sz_pos > 0 ? std::min(50.0, static_cast<double>(sv.size() - sz_pos) /
                                        static_cast<double>(sz_pos))
                   : 1.0;
    double sw = 0, sum_s = 0, sum_y = 0, sum_ss = 0, sum_sy = 0;
    for (const auto& [s, y] : sv) {
      const double weight = y > 0 ? wp : 1.0;
      sw += weight;
      sum_s += weight * s;
      sum_y += weight * y;
      sum_ss += weight * s * s;
      sum_sy += weight * s * y;
    }
    const double var = sum_ss - sum_s * sum_s / sw;
    if (var <= 1e-12) {
      res.warnings.push_back("size " + std::to_string(model.sizes[si].w) + "x" +
                             std::to_string(model.sizes[si].h) +
                             ": degenerate score variance, identity calibration");
      continue;
    }
    // Ridge-shrunk slope: sparse or noisy sizes fall back toward their mean
    // label instead of amplifying regression noise.
    const double v = (sum_sy - sum_s * sum_y / sw) / (var + 0.02 * sw);
    const double t = (sum_y - v * sum_s) / sw;
    model.stage2[si] = {static_cast<float>(v), static_cast<float>(t)};
  }

  res.model = std::move(model);
  return res;
}

std::vector<Proposal> propose(const ImageRGB& img, const BingModel& model,
                              const ProposalConfig& cfg) {
  cfg.validate();
  if (model.stage1.size() != static_cast<std::size_t>(BingModel::kTemplateLen) ||
      model.sizes.size() != model.stage2.size())
    throw ConfigError("propose: malformed model");
  const int W = img.width, H = img.height;
  const NgMap ng = normed_gradient(img);

  std::vector<Proposal> pool;
  for (std::size_t si = 0; si < model.sizes.size(); ++si) {
    if (model.sizes[si].w > W || model.sizes[si].h > H) continue;
    const auto& cal = model.stage2[si];
    for (const auto& p : scan_size(ng, model.stage1, model.sizes[si], cfg.per_size_keep))
      pool.push_back({p.box, cal.v * p.score + cal.t});
  }

  if (pool.empty())
    return {{BBox{0, 0, W, H}, -std::numeric_limits<double>::infinity()}};

  std::vector<Proposal> kept = nms(std::move(pool), cfg.nms_iou);
  if (kept.size() > static_cast<std::size_t>(cfg.n_max)) kept.resize(cfg.n_max);
  return kept;
}

std::vector<Proposal> nms(std::vector<Proposal> props, double iou_thresh) {
  std::stable_sort(props.begin(), props.end(), score_order);
  std::vector<Proposal> kept;
  for (const auto& p : props) {
    bool suppressed = false;
    for (const auto& k : kept)
      if (iou(p.box, k.box) >= iou_thresh) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(p);
  }
  return kept;
}

namespace {

template <class T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::ifstream& f, const char* what) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!f) throw ParseError(std::string("model file truncated reading ") + what);
  return v;
}

constexpr char kModelMagic[8] = {'B', 'I', 'N', 'G', 'M', 'D', 'L', '1'};

}  // namespace

void bing_model_save(const BingModel& m, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw MissingInputError("cannot write model: " + path.string());
  f.write(kModelMagic, sizeof kModelMagic);
  put(f, m.version);
  put(f, static_cast<std::uint32_t>(m.stage1.size()));
  put(f, static_cast<std::uint32_t>(m.sizes.size()));
  for (float v : m.stage1) put(f, v);
  for (const auto& c : m.stage2) {
    put(f, c.v);
    put(f, c.t);
  }
  for (const auto& s : m.sizes) {
    put(f, static_cast<std::uint32_t>(s.w));
    put(f, static_cast<std::uint32_t>(s.h));
  }
}

BingModel bing_model_load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingInputError("cannot open model: " + path.string());
  char magic[8];
  f.read(magic, sizeof magic);
  if (!f || std::memcmp(magic, kModelMagic, sizeof magic) != 0)
    throw VersionError("model file: bad magic");
  BingModel m;
  m.version = get<std::uint32_t>(f, "version");
  if (m.version != 1) throw VersionError("model file: unsupported version " + std::to_string(m.version));
  const auto n1 = get<std::uint32_t>(f, "stage1 count");
  const auto ns = get<std::uint32_t>(f, "size count");
  if (n1 != BingModel::kTemplateLen) throw ParseError("model file: bad stage1 count");
  m.stage1.resize(n1);
  for (auto& v : m.stage1) v = get<float>(f, "stage1");
  m.stage2.resize(ns);
  for (auto& c : m.stage2) {
    c.v = get<float>(f, "stage2 v");
    c.t = get<float>(f, "stage2 t");
  }
  m.sizes.resize(ns);
  for (auto& s : m.sizes) {
    s.w = static_cast<int>(get<std::uint32_t>(f, "size w"));
    s.h = static_cast<int>(get<std::uint32_t>(f, "size h"));
  }
  return m;
}

void ProposalCache::add(const std::string& image, std::vector<Proposal> props) {
  if (index_.count(image)) throw ConfigError("proposal cache: duplicate image key \"" + image + "\"");
  index_[image] = items_.size();
  items_.emplace_back(image, std::move(props));
}

bool ProposalCache::contains(const std::string& image) const { return index_.count(image) > 0; }

const std::vector<Proposal>& ProposalCache::at(const std::string& image) const {
  auto it = index_.find(image);
  if (it == index_.end())
    throw MissingInputError("proposal cache: missing keys: " + image);
  return items_[it->second].second;
}

void ProposalCache::require(const std::vector<std::string>& keys) const {
  std::string missing;
  for (const auto& k : keys)
    if (!index_.count(k)) missing += (missing.empty() ? "" : ", ") + k;
  if (!missing.empty()) throw MissingInputError("proposal cache: missing keys: " + missing);
}

void cache_write(const ProposalCache& cache, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw MissingInputError("cannot write proposal cache: " + path.string());
  for (const auto& [image, props] : cache.items()) {
    json arr = json::array();
    for (const auto& p : props) {
      json jp{{"box", {p.box.x, p.box.y, p.box.w, p.box.h}}};
      if (std::isfinite(p.score))
        jp["score"] = p.score;
      else
        jp["score"] = nullptr;  // whole-image fallback marker
      arr.push_back(std::move(jp));
    }
    f << json{{"image", image}, {"proposals", arr}}.dump() << '\n';
  }
}

ProposalCache cache_read(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw MissingInputError("cannot open proposal cache: " + path.string());
  ProposalCache cache;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("proposal cache line " + std::to_string(lineno) + ": " + e.what());
    }
    const auto image = j.at("image").get<std::string>();
    if (cache.contains(image))
      throw ParseError("proposal cache: duplicate image key \"" + image + "\"");
    std::vector<Proposal> props;
    for (const auto& jp : j.at("proposals")) {
      Proposal p;
      const auto& b = jp.at("box");
      p.box = BBox{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
      p.score = jp.at("score").is_null() ? -std::numeric_limits<double>::infinity()
                                         : jp.at("score").get<double>();
      props.push_back(p);
    }
    cache.add(image, std::move(props));
  }
  return cache;
}

}  // namespace objcrop
