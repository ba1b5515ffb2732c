#include "objcrop/evalkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "objcrop/errors.hpp"
#include "objcrop/ppm.hpp"
#include "objcrop/synthgen.hpp"

namespace objcrop {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

void ProbeConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("probe: lr must be > 0");
  if (epochs < 0) throw ConfigError("probe: epochs must be >= 0");
  if (l2 < 0.0) throw ConfigError("probe: l2 must be >= 0");
  if (!frozen) throw ConfigError("probe: the backbone stays frozen (frozen must be true)");
}

FeatureSet extract_features(const Checkpoint& ck, const DatasetManifest& manifest,
                            int n_classes) {
  const int side = ck.state.input_side;
  FeatureSet out;
  out.features.resize(static_cast<Eigen::Index>(manifest.entries.size()),
                      ck.config.arch.feature_dim);
  out.labels = MatrixXd::Zero(static_cast<Eigen::Index>(manifest.entries.size()), n_classes);

  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    for (const auto& o : e.objects) {
      if (o.class_id >= n_classes)
        throw ConfigError("extract_features: class id " + std::to_string(o.class_id) +
                          " >= n_classes in " + e.image);
      out.labels(static_cast<Eigen::Index>(i), o.class_id) = 1.0;
    }
    const ImageRGB img = ppm_load(manifest.image_path(e));
    // Deterministic view: largest center square, resized to the input side.
    const int s = std::min(img.width, img.height);
    const BBox square{(img.width - s) / 2, (img.height - s) / 2, s, s};
    const ImageRGB view = resize_bilinear(crop(img, square), side, side);
    const VectorXd x = standardize_view(view, ck.state.norm_mean, ck.state.norm_std);
    const ForwardResult f = ssl_forward(ck.state.query, x, ViewRole::Object);
    out.features.row(static_cast<Eigen::Index>(i)) = f.features.col(0).transpose();
  }
  return out;
}

std::optional<double> average_precision(const std::vector<double>& scores,
                                        const std::vector<bool>& labels) {
  if (scores.size() != labels.size())
    throw ConfigError("average_precision: scores/labels size mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double hits = 0.0, sum = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]]) {
      hits += 1.0;
      sum += hits / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0.0) return std::nullopt;
  return sum / hits;
}

ProbeResult linear_probe(const FeatureSet& train, const FeatureSet& val,
                         const ProbeConfig& cfg) {
  cfg.validate();
  if (train.features.rows() != train.labels.rows() || val.features.rows() != val.labels.rows())
    throw ConfigError("linear_probe: features/labels row mismatch");
  if (train.labels.cols() != val.labels.cols())
    throw ConfigError("linear_probe: train/val class count mismatch");
  const Eigen::Index n = train.features.rows();
  const Eigen::Index d = train.features.cols();
  const Eigen::Index C = train.labels.cols();

  // Standardize feature dimensions with train statistics.
  const Eigen::RowVectorXd mean = train.features.colwise().mean();
  Eigen::RowVectorXd sd =
      ((train.features.rowwise() - mean).array().square().colwise().sum() /
       static_cast<double>(n))
          .sqrt();
  sd = sd.cwiseMax(1e-8);
  const MatrixXd Xt = (train.features.rowwise() - mean).array().rowwise() / sd.array();
  const MatrixXd Xv = (val.features.rowwise() - mean).array().rowwise() / sd.array();

  // One-vs-all logistic regression, full batch, zero init.
  MatrixXd W = MatrixXd::Zero(d, C);
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(C);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    MatrixXd P = ((Xt * W).rowwise() + b).unaryExpr([](double v) {
      return 1.0 / (1.0 + std::exp(-v));
    });
    P -= train.labels;
    W -= cfg.lr * ((Xt.transpose() * P) / static_cast<double>(n) + cfg.l2 * W);
    b -= cfg.lr * (P.colwise().sum() / static_cast<double>(n));
  }

  const MatrixXd scores = (Xv * W).rowwise() + b;
  ProbeResult res;
  double map_sum = 0.0;
  int map_count = 0;
  for (Eigen::Index c = 0; c < C; ++c) {
    std::vector<double> s(static_cast<std::size_t>(scores.rows()));
    std::vector<bool> y(static_cast<std::size_t>(scores.rows()));
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      s[static_cast<std::size_t>(i)] = scores(i, c);
      y[static_cast<std::size_t>(i)] = val.labels(i, c) > 0.5;
    }
    const auto ap = average_precision(s, y);
    res.per_class_ap.push_back(ap);
    if (ap) {
      map_sum += *ap;
      ++map_count;
    } else {
      res.warnings.push_back("class " + std::to_string(c) +
                             ": no validation positives, skipped");
    }
  }
  res.map = map_count > 0 ? map_sum / map_count : 0.0;
  return res;
}

OverlapStats overlap_report(const DatasetManifest& manifest, Strategy strategy,
                            const CropConfig& cfg, const ProposalCache* cache, int n_samples,
                            std::uint64_t seed) {
  if (manifest.entries.empty()) throw MissingInputError("overlap_report: empty manifest");
  if (strategy_needs_proposals(strategy) && !cache)
    throw MissingInputError("overlap_report: strategy requires a proposal cache");

  double s_min = cfg.scale_lo;
  if (cfg.s_min_override)
    s_min = *cfg.s_min_override;
  else if (strategy_needs_proposals(strategy))
    s_min = compute_smin(*cache, manifest, cfg.scale_lo);
  else if (strategy_needs_gt(strategy))
    s_min = compute_smin_gt(manifest, cfg.scale_lo);

  Rng rng(seed);
  std::vector<double> overlaps, fractions;
  OverlapStats st;
  st.n_samples = n_samples;
  for (int s = 0; s < n_samples; ++s) {
    const auto& e = manifest.entries[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(manifest.entries.size()) - 1))];
    const ImageRGB img = ppm_load(manifest.image_path(e));
    std::vector<BBox> boxes;
    if (strategy_needs_proposals(strategy)) {
      for (const auto& p : cache->at(e.image)) boxes.push_back(p.box);
    } else if (strategy_needs_gt(strategy)) {
      for (const auto& o : e.objects) boxes.push_back(o.box);
    }
    const ViewPair vp = sample_pair(img, boxes, strategy, cfg, s_min, rng);
    overlaps.push_back(iou(vp.src_a, vp.src_b));
    const auto inter = intersect(vp.src_a, vp.src_b);
    if (!inter) {
      ++st.n_empty;
      continue;
    }
    // Fraction of intersection pixels covered by any ground-truth box.
    std::int64_t covered = 0;
    for (int y = inter->y; y < inter->bottom(); ++y)
      for (int x = inter->x; x < inter->right(); ++x) {
        for (const auto& o : e.objects) {
          if (x >= o.box.x && x < o.box.right() && y >= o.box.y && y < o.box.bottom()) {
            ++covered;
            break;
          }
        }
      }
    fractions.push_back(static_cast<double>(covered) / static_cast<double>(inter->area()));
  }

  auto mean_std = [](const std::vector<double>& v) {
    if (v.empty()) return std::pair<double, double>{0.0, 0.0};
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::pair<double, double>{mean, std::sqrt(var / static_cast<double>(v.size()))};
  };
  std::tie(st.view_overlap_mean, st.view_overlap_std) = mean_std(overlaps);
  std::tie(st.object_fraction_mean, st.object_fraction_std) = mean_std(fractions);
  return st;
}

void overlap_stats_write(const OverlapStats& s, const std::filesystem::path& path) {
  json j{{"n_samples", s.n_samples},
         {"n_empty", s.n_empty},
         {"view_overlap_mean", s.view_overlap_mean},
         {"view_overlap_std", s.view_overlap_std},
         {"object_fraction_mean", s.object_fraction_mean},
         {"object_fraction_std", s.object_fraction_std}};
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw MissingInputError("cannot write overlap stats: " + path.string());
  f << j.dump(2) << '\n';
}

const char* sweep_parameter_name(SweepParameter p) {
  switch (p) {
    case SweepParameter::Delta: return "delta";
    case SweepParameter::ShiftRange: return "shift_range";
    case SweepParameter::Temperature: return "temperature";
    case SweepParameter::NMax: return "n_max";
    case SweepParameter::ScaleLo: return "scale_lo";
  }
  return "?";
}

SweepParameter sweep_parameter_from_name(const std::string& name) {
  for (SweepParameter p : {SweepParameter::Delta, SweepParameter::ShiftRange,
                           SweepParameter::Temperature, SweepParameter::NMax,
                           SweepParameter::ScaleLo})
    if (name == sweep_parameter_name(p)) return p;
  throw ConfigError("unknown sweep parameter \"" + name + "\"");
}

void SweepSpec::validate() const {
  if (values.empty()) throw ConfigError("sweep: need at least one value");
  if (seeds.empty()) throw ConfigError("sweep: need at least one seed");
}

void sweep(const SweepSpec& spec, const SweepContext& ctx,
           const std::filesystem::path& csv_path) {
  spec.validate();
  if (!ctx.train || !ctx.val) throw MissingInputError("sweep: train/val manifests required");

  // Completed (value, seed) pairs from a previous partial run.
  std::set<std::pair<double, std::uint64_t>> done;
  bool has_header = false;
  if (std::filesystem::exists(csv_path)) {
    std::ifstream in(csv_path);
    std::string line;
    while (std::getline(in, line)) {
      if (!has_header) {
        has_header = true;
        continue;
      }
      double value;
      unsigned long long seed;
      if (std::sscanf(line.c_str(), "%*[^,],%lf,%llu", &value, &seed) == 2)
        done.insert({value, seed});
    }
  }
  std::ofstream csv(csv_path, std::ios::app);
  if (!csv) throw MissingInputError("cannot write sweep csv: " + csv_path.string());
  if (!has_header) {
    csv << "parameter,value,seed,map,pos_sim,neg_sim\n";
    csv.flush();
  }

  for (double value : spec.values) {
    for (std::uint64_t seed : spec.seeds) {
      if (done.count({value, seed})) continue;
      TrainConfig cfg = ctx.base;
      cfg.seed = seed;
      const ProposalCache* cache = ctx.cache;
      ProposalCache truncated;
      switch (spec.parameter) {
        case SweepParameter::Delta:
          cfg.crop.delta = value;
          break;
        case SweepParameter::ShiftRange: {
          const double width = ctx.base.crop.shift_hi - ctx.base.crop.shift_lo;
          cfg.crop.shift_lo = value;
          cfg.crop.shift_hi = value + width;
          break;
        }
        case SweepParameter::Temperature:
          cfg.temperature = value;
          break;
        case SweepParameter::NMax: {
          const int keep = std::max(1, static_cast<int>(std::llround(value)));
          if (!ctx.cache) throw MissingInputError("sweep: n_max sweep requires a cache");
          for (const auto& [image, props] : ctx.cache->items()) {
            auto copy = props;
            if (copy.size() > static_cast<std::size_t>(keep)) copy.resize(keep);
            truncated.add(image, std::move(copy));
          }
          cache = &truncated;
          break;
        }
        case SweepParameter::ScaleLo:
          cfg.crop.scale_lo = value;
          break;
      }

      const PretrainResult run = pretrain(*ctx.train, cache, cfg, {});
      Checkpoint ck{run.state, cfg};
      const FeatureSet ftr = extract_features(ck, *ctx.train, ctx.n_classes);
      const FeatureSet fva = extract_features(ck, *ctx.val, ctx.n_classes);
      const ProbeResult probe = linear_probe(ftr, fva, ctx.probe);
      const double pos = run.metrics.empty() ? 0.0 : run.metrics.back().pos_sim;
      const double neg = run.metrics.empty() ? 0.0 : run.metrics.back().neg_sim;
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s,%.17g,%llu,%.17g,%.17g,%.17g\n",
                    sweep_parameter_name(spec.parameter), value,
                    static_cast<unsigned long long>(seed), probe.map, pos, neg);
      csv << buf;
      csv.flush();
    }
  }
}

BenchReport bench_proposals(const BingModel& model, int image_side, int n_iters,
                            std::uint64_t seed) {
  if (n_iters < 1) throw ConfigError("bench: n_iters must be >= 1");
  SynthConfig scfg;
  scfg.img_side = image_side;
  scfg.objects_lo = 2;
  scfg.objects_hi = 8;
  scfg.obj_scale_lo = 0.05;
  scfg.obj_scale_hi = 0.2;
  scfg.seed = seed;

  const int n_images = std::min(n_iters, 16);
  std::vector<ImageRGB> images;
  for (int i = 0; i < n_images; ++i)
    images.push_back(synth_render(scfg, static_cast<std::uint64_t>(i)));

  ProposalConfig pcfg;
  // Warmup.
  for (int i = 0; i < 2; ++i) propose(images[static_cast<std::size_t>(i % n_images)], model, pcfg);

  std::vector<double> fps(static_cast<std::size_t>(n_iters));
  double total_ms = 0.0;
  for (int i = 0; i < n_iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    propose(images[static_cast<std::size_t>(i % n_images)], model, pcfg);
    const auto t1 = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    total_ms += ms;
    fps[static_cast<std::size_t>(i)] = ms > 0.0 ? 1000.0 / ms : 0.0;
  }
  std::sort(fps.begin(), fps.end());
  BenchReport r;
  r.image_side = image_side;
  r.n_iters = n_iters;
  r.fps_mean = std::accumulate(fps.begin(), fps.end(), 0.0) / static_cast<double>(n_iters);
  r.fps_p50 = fps[static_cast<std::size_t>(n_iters) / 2];
  r.fps_p95 = fps[std::min(static_cast<std::size_t>(n_iters) - 1,
                           static_cast<std::size_t>(0.95 * n_iters))];
  r.ms_mean = total_ms / static_cast<double>(n_iters);
  return r;
}

void bench_report_write(const BenchReport& r, const std::filesystem::path& path) {
  json j{{"image_side", r.image_side}, {"n_iters", r.n_iters},   {"fps_mean", r.fps_mean},
         {"fps_p50", r.fps_p50},       {"fps_p95", r.fps_p95},   {"ms_mean", r.ms_mean}};
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw MissingInputError("cannot write bench report: " + path.string());
  f << j.dump(2) << '\n';
}

double proposal_recall(const DatasetManifest& manifest, const ProposalCache& cache, int k,
                       double iou_thresh) {
  std::int64_t total = 0, hit = 0;
  for (const auto& e : manifest.entries) {
    const auto& props = cache.at(e.image);
    const std::size_t top = std::min<std::size_t>(props.size(), static_cast<std::size_t>(k));
    for (const auto& o : e.objects) {
      ++total;
      for (std::size_t i = 0; i < top; ++i)
        if (iou(props[i].box, o.box) >= iou_thresh) {
          ++hit;
          break;
        }
    }
  }
  if (total == 0) throw MissingInputError("proposal_recall: manifest has no ground-truth boxes");
  return static_cast<double>(hit) / static_cast<double>(total);
}

ProposalCache random_box_cache(const DatasetManifest& manifest, int boxes_per_image,
                               std::uint64_t seed) {
  ProposalCache cache;
  for (const auto& e : manifest.entries) {
    Rng rng = Rng::derive(seed, Rng::hash_str(e.image));
    std::vector<Proposal> props;
    for (int i = 0; i < boxes_per_image; ++i) {
      const int x1 = static_cast<int>(rng.uniform_int(0, e.width - 1));
      const int x2 = static_cast<int>(rng.uniform_int(0, e.width - 1));
      const int y1 = static_cast<int>(rng.uniform_int(0, e.height - 1));
      const int y2 = static_cast<int>(rng.uniform_int(0, e.height - 1));
      props.push_back({BBox{std::min(x1, x2), std::min(y1, y2), std::abs(x1 - x2) + 1,
                            std::abs(y1 - y2) + 1},
                       0.0});
    }
    cache.add(e.image, std::move(props));
  }
  return cache;
}

}  // namespace objcrop
