#include "objcrop/config_json.hpp"

#include <set>

#include "objcrop/errors.hpp"

namespace objcrop {

using nlohmann::json;

namespace {

// Strict section reader: every key must be consumed.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section \"" + name_ + "\" must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        out = it->get<T>();
      } catch (const json::exception&) {
        throw ConfigError("config key \"" + name_ + "." + key + "\" has the wrong type");
      }
    }
    seen_.insert(key);
  }

  template <class T, class Fn>
  void get_with(const char* key, T& out, Fn&& fn) {
    if (auto it = j_.find(key); it != j_.end()) out = fn(*it);
    seen_.insert(key);
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) { return j_.at(key); }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key))
        throw ConfigError("unknown config key \"" + name_ + "." + key + "\"");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace

json synth_config_to_json(const SynthConfig& c) {
  return json{{"n_images", c.n_images},
              {"img_side", c.img_side},
              {"objects_lo", c.objects_lo},
              {"objects_hi", c.objects_hi},
              {"n_classes", c.n_classes},
              {"obj_scale_lo", c.obj_scale_lo},
              {"obj_scale_hi", c.obj_scale_hi},
              {"longtail_exponent", c.longtail_exponent},
              {"min_distinct_classes", c.min_distinct_classes},
              {"allow_overlap", c.allow_overlap},
              {"bg", {{"cell", c.bg.cell}, {"base", c.bg.base}, {"amplitude", c.bg.amplitude}}},
              {"seed", c.seed},
              {"train_frac", c.train_frac}};
}

SynthConfig synth_config_from_json(const json& j) {
  SynthConfig c;
  Section s(j, "synth");
  s.get("n_images", c.n_images);
  s.get("img_side", c.img_side);
  s.get("objects_lo", c.objects_lo);
  s.get("objects_hi", c.objects_hi);
  s.get("n_classes", c.n_classes);
  s.get("obj_scale_lo", c.obj_scale_lo);
  s.get("obj_scale_hi", c.obj_scale_hi);
  s.get("longtail_exponent", c.longtail_exponent);
  s.get("min_distinct_classes", c.min_distinct_classes);
  s.get("allow_overlap", c.allow_overlap);
  if (s.has("bg")) {
    Section b(s.at("bg"), "synth.bg");
    b.get("cell", c.bg.cell);
    b.get("base", c.bg.base);
    b.get("amplitude", c.bg.amplitude);
    b.finish();
  }
  s.get("seed", c.seed);
  s.get("train_frac", c.train_frac);
  s.finish();
  return c;
}

json proposal_config_to_json(const ProposalConfig& c) {
  return json{{"n_max", c.n_max}, {"nms_iou", c.nms_iou}, {"per_size_keep", c.per_size_keep}};
}

ProposalConfig proposal_config_from_json(const json& j) {
  ProposalConfig c;
  Section s(j, "proposals");
  s.get("n_max", c.n_max);
  s.get("nms_iou", c.nms_iou);
  s.get("per_size_keep", c.per_size_keep);
  s.finish();
  return c;
}

json bing_train_config_to_json(const BingTrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"lr", c.lr},
              {"l2", c.l2},
              {"negatives_per_image", c.negatives_per_image},
              {"negative_iou_max", c.negative_iou_max},
              {"seed", c.seed}};
}

BingTrainConfig bing_train_config_from_json(const json& j) {
  BingTrainConfig c;
  Section s(j, "bing_train");
  s.get("epochs", c.epochs);
  s.get("lr", c.lr);
  s.get("l2", c.l2);
  s.get("negatives_per_image", c.negatives_per_image);
  s.get("negative_iou_max", c.negative_iou_max);
  s.get("seed", c.seed);
  s.finish();
  return c;
}

json crop_config_to_json(const CropConfig& c) {
  json j{{"target", c.target},
         {"scale_lo", c.scale_lo},
         {"scale_hi", c.scale_hi},
         {"ratio_lo", c.ratio_lo},
         {"ratio_hi", c.ratio_hi},
         {"delta", c.delta},
         {"shift_lo", c.shift_lo},
         {"shift_hi", c.shift_hi},
         {"min_crop_side", c.min_crop_side},
         {"flip_prob", c.flip_prob}};
  j["s_min_override"] = c.s_min_override ? json(*c.s_min_override) : json(nullptr);
  return j;
}

CropConfig crop_config_from_json(const json& j) {
  CropConfig c;
  Section s(j, "crop");
  s.get("target", c.target);
  s.get("scale_lo", c.scale_lo);
  s.get("scale_hi", c.scale_hi);
  s.get("ratio_lo", c.ratio_lo);
  s.get("ratio_hi", c.ratio_hi);
  s.get("delta", c.delta);
  s.get("shift_lo", c.shift_lo);
  s.get("shift_hi", c.shift_hi);
  s.get_with("s_min_override", c.s_min_override, [](const json& v) {
    return v.is_null() ? std::optional<double>{} : std::optional<double>{v.get<double>()};
  });
  s.get("min_crop_side", c.min_crop_side);
  s.get("flip_prob", c.flip_prob);
  s.finish();
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"temperature", c.temperature},
              {"momentum", c.momentum},
              {"queue_size", c.queue_size},
              {"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"seed", c.seed},
              {"strategy", strategy_name(c.strategy)},
              {"crop", crop_config_to_json(c.crop)},
              {"arch",
               {{"hidden", c.arch.hidden},
                {"feature_dim", c.arch.feature_dim},
                {"head_hidden", c.arch.head_hidden},
                {"embed_dim", c.arch.embed_dim}}},
              {"cosine_lr", c.cosine_lr},
              {"swap_views", c.swap_views}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  Section s(j, "train");
  s.get("temperature", c.temperature);
  s.get("momentum", c.momentum);
  s.get("queue_size", c.queue_size);
  s.get("lr", c.lr);
  s.get("weight_decay", c.weight_decay);
  s.get("batch_size", c.batch_size);
  s.get("epochs", c.epochs);
  s.get("seed", c.seed);
  s.get_with("strategy", c.strategy,
             [](const json& v) { return strategy_from_name(v.get<std::string>()); });
  if (s.has("crop")) c.crop = crop_config_from_json(s.at("crop"));
  if (s.has("arch")) {
    Section a(s.at("arch"), "train.arch");
    a.get("hidden", c.arch.hidden);
    a.get("feature_dim", c.arch.feature_dim);
    a.get("head_hidden", c.arch.head_hidden);
    a.get("embed_dim", c.arch.embed_dim);
    a.finish();
  }
  s.get("cosine_lr", c.cosine_lr);
  s.get("swap_views", c.swap_views);
  s.finish();
  return c;
}

json probe_config_to_json(const ProbeConfig& c) {
  return json{{"lr", c.lr}, {"epochs", c.epochs}, {"l2", c.l2}, {"frozen", c.frozen}};
}

ProbeConfig probe_config_from_json(const json& j) {
  ProbeConfig c;
  Section s(j, "probe");
  s.get("lr", c.lr);
  s.get("epochs", c.epochs);
  s.get("l2", c.l2);
  s.get("frozen", c.frozen);
  s.finish();
  return c;
}

json sweep_spec_to_json(const SweepSpec& s) {
  return json{{"parameter", sweep_parameter_name(s.parameter)},
              {"values", s.values},
              {"seeds", s.seeds}};
}

SweepSpec sweep_spec_from_json(const json& j) {
  SweepSpec spec;
  Section s(j, "sweep");
  s.get_with("parameter", spec.parameter,
             [](const json& v) { return sweep_parameter_from_name(v.get<std::string>()); });
  s.get("values", spec.values);
  s.get("seeds", spec.seeds);
  s.finish();
  return spec;
}

}  // namespace objcrop
