#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "objcrop/image.hpp"
#include "objcrop/manifest.hpp"

namespace objcrop {

/// Normed-gradient feature map: NG(x,y) = min(|gx| + |gy|, 255) on grayscale,
/// central differences with replicated borders.
using NgMap = ImageGray;

NgMap normed_gradient(const ImageRGB& img);

/// Quantized window size (width, height) in pixels.
struct WindowSize {
  int w = 0;
  int h = 0;
  bool operator==(const WindowSize&) const = default;
};

/// Per-size affine score calibration: calibrated = v * raw + t.
struct SizeCalibration {
  float v = 1.0f;
  float t = 0.0f;
};

/// Two-stage linear objectness model. Stage 1 is a single 8x8 template (64
/// weights) scored against L2-normalized resized normed-gradient windows
/// (a pure pattern match, invariant to gradient magnitude); stage 2 is an
/// affine calibration per quantized window size, fit on the top-scoring
/// windows of the training images.
struct BingModel {
  static constexpr int kTemplateSide = 8;
  static constexpr int kTemplateLen = kTemplateSide * kTemplateSide;

  std::uint32_t version = 1;
  std::vector<float> stage1;          // exactly 64 entries
  std::vector<WindowSize> sizes;      // quantized (w,h) list
  std::vector<SizeCalibration> stage2;  // one per size
};

/// Reference size grid: {16,32,64,128,256}^2 filtered to aspect ratios in
/// [1/4, 4].
std::vector<WindowSize> reference_sizes();

struct Proposal {
  BBox box;
  double score = 0.0;
  bool operator==(const Proposal&) const = default;
};

struct ProposalConfig {
  int n_max = 10;          // proposals returned per image
  double nms_iou = 0.5;    // greedy NMS threshold
  int per_size_keep = 8;   // pre-NMS candidates kept per quantized size

  void validate() const;
};

struct BingTrainConfig {
  int epochs = 20;
  double lr = 0.01;
  double l2 = 1e-4;            // hinge-loss ridge penalty
  int negatives_per_image = 20;
  double negative_iou_max = 0.3;  // negatives overlap every GT below this
  std::uint64_t seed = 1;
};

struct BingTrainResult {
  BingModel model;
  double final_hinge_loss = 0.0;  // mean hinge loss over the training set
  std::vector<std::string> warnings;
};

/// Trains stage 1 by hinge-loss SGD on 8x8-resized NG windows (positives =
/// GT boxes, negatives = random boxes with IoU < negative_iou_max to every
/// GT box), then fits the per-size affine stage 2 against +-1 labels.
/// Deterministic given (dataset, cfg.seed).
BingTrainResult bing_train(const DatasetManifest& data, const BingTrainConfig& cfg);

/// Multi-size sliding-window scoring followed by calibration, global NMS and
/// truncation to cfg.n_max, sorted by descending score. An image smaller than
/// every quantized window yields the whole-image box with score -infinity.
std::vector<Proposal> propose(const ImageRGB& img, const BingModel& model,
                              const ProposalConfig& cfg);

/// Greedy NMS by descending score; ties broken by (score desc, x asc, y asc).
std::vector<Proposal> nms(std::vector<Proposal> props, double iou_thresh);

/// Versioned little-endian model file, magic "BINGMDL1".
void bing_model_save(const BingModel& m, const std::filesystem::path& path);
BingModel bing_model_load(const std::filesystem::path& path);

/// Per-image proposal sets keyed by relative image path. Preserves insertion
/// order so cache files are deterministic.
class ProposalCache {
 public:
  void add(const std::string& image, std::vector<Proposal> props);
  bool contains(const std::string& image) const;
  const std::vector<Proposal>& at(const std::string& image) const;
  std::size_t size() const { return items_.size(); }
  const std::vector<std::pair<std::string, std::vector<Proposal>>>& items() const {
    return items_;
  }

  /// Throws MissingInputError listing every key absent from the cache.
  void require(const std::vector<std::string>& keys) const;

 private:
  std::vector<std::pair<std::string, std::vector<Proposal>>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// JSONL, one object per image:
/// {"image": str, "proposals": [{"box": [x,y,w,h], "score": f}, ...]}
/// A null score marks the unscored whole-image fallback (-infinity).
void cache_write(const ProposalCache& cache, const std::filesystem::path& path);
ProposalCache cache_read(const std::filesystem::path& path);

}  // namespace objcrop
