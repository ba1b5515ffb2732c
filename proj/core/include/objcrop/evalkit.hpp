#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "objcrop/cropper.hpp"
#include "objcrop/manifest.hpp"
#include "objcrop/objectness.hpp"
#include "objcrop/ssl.hpp"

namespace objcrop {

struct ProbeConfig {
  double lr = 0.1;
  int epochs = 400;
  double l2 = 1e-4;
  bool frozen = true;  // backbone is never updated

  void validate() const;
};

struct FeatureSet {
  Eigen::MatrixXd features;  // n_images x feature_dim
  Eigen::MatrixXd labels;    // n_images x n_classes multi-hot
};

/// Backbone features for a deterministic center-crop view of each image
/// (largest center square, resized to the checkpoint's input side), plus
/// multi-hot labels. Throws on class ids >= n_classes.
FeatureSet extract_features(const Checkpoint& ck, const DatasetManifest& manifest,
                            int n_classes);

/// All-points average precision: stable sort by descending score (ties keep
/// original order), AP = mean of precision@k over positive ranks k.
/// nullopt when there is no positive label.
std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<bool>& labels);

struct ProbeResult {
  std::vector<std::optional<double>> per_class_ap;  // nullopt = no val positives
  double map = 0.0;
  std::vector<std::string> warnings;
};

/// One-vs-all logistic regression on frozen features (full-batch gradient
/// descent, deterministic zero init, per-dimension standardization from the
/// train split). AP is reported on the validation split.
ProbeResult linear_probe(const FeatureSet& train, const FeatureSet& val,
                         const ProbeConfig& cfg);

struct OverlapStats {
  int n_samples = 0;
  int n_empty = 0;  // pairs whose source boxes do not intersect
  double view_overlap_mean = 0.0;  // IoU of the two source boxes
  double view_overlap_std = 0.0;
  double object_fraction_mean = 0.0;  // GT-covered fraction of the intersection
  double object_fraction_std = 0.0;
};

/// Samples view pairs and measures how much of the view intersection lies on
/// ground-truth objects. Empty intersections contribute 0 to the overlap and
/// are excluded from the object fraction.
OverlapStats overlap_report(const DatasetManifest& manifest, Strategy strategy,
                            const CropConfig& cfg, const ProposalCache* cache,
                            int n_samples, std::uint64_t seed);

void overlap_stats_write(const OverlapStats& s, const std::filesystem::path& path);

/// Swept quantity for ablation grids.
enum class SweepParameter { Delta, ShiftRange, Temperature, NMax, ScaleLo };

const char* sweep_parameter_name(SweepParameter p);
SweepParameter sweep_parameter_from_name(const std::string& name);

struct SweepSpec {
  SweepParameter parameter = SweepParameter::Delta;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;

  void validate() const;
};

struct SweepContext {
  const DatasetManifest* train = nullptr;
  const DatasetManifest* val = nullptr;
  const ProposalCache* cache = nullptr;  // required by proposal strategies
  TrainConfig base;
  ProbeConfig probe;
  int n_classes = 32;
};

/// Runs pretrain+probe per (value, seed) grid point and appends rows
/// "parameter,value,seed,map,pos_sim,neg_sim" to the CSV. Existing rows are
/// skipped, so an interrupted sweep resumes where it stopped.
void sweep(const SweepSpec& spec, const SweepContext& ctx,
           const std::filesystem::path& csv_path);

struct BenchReport {
  int image_side = 0;
  int n_iters = 0;
  double fps_mean = 0.0;
  double fps_p50 = 0.0;
  double fps_p95 = 0.0;
  double ms_mean = 0.0;
};

/// Wall-clock proposal throughput on synthetic images, single thread, after
/// warmup.
BenchReport bench_proposals(const BingModel& model, int image_side, int n_iters,
                            std::uint64_t seed = 7);

void bench_report_write(const BenchReport& r, const std::filesystem::path& path);

/// Fraction of ground-truth boxes matched (IoU >= iou_thresh) by any of the
/// top-k cached proposals of their image.
double proposal_recall(const DatasetManifest& manifest, const ProposalCache& cache, int k,
                       double iou_thresh);

/// Uniform random boxes per image, the recall baseline.
ProposalCache random_box_cache(const DatasetManifest& manifest, int boxes_per_image,
                               std::uint64_t seed);

}  // namespace objcrop
