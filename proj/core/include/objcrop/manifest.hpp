#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "objcrop/box.hpp"
#include "objcrop/rng.hpp"

namespace objcrop {

struct GtObject {
  int class_id = 0;
  BBox box;
  bool operator==(const GtObject&) const = default;
};

/// One dataset image: path relative to the manifest's directory plus its
/// annotated objects.
struct ManifestEntry {
  std::string image;  // relative path
  int width = 0;
  int height = 0;
  std::vector<GtObject> objects;
  bool operator==(const ManifestEntry&) const = default;
};

/// Dataset manifest, one JSONL record per image:
/// {"image": relpath, "width": w, "height": h,
///  "objects": [{"class": c, "box": [x,y,w,h]}, ...]}
struct DatasetManifest {
  std::filesystem::path root;  // directory the image paths are relative to
  std::vector<ManifestEntry> entries;

  std::filesystem::path image_path(const ManifestEntry& e) const { return root / e.image; }
};

DatasetManifest manifest_read(const std::filesystem::path& path);
void manifest_write(const DatasetManifest& m, const std::filesystem::path& path);

/// Deterministic shuffle split: disjoint, exhaustive, floor(n * train_frac)
/// entries in the train half.
std::pair<DatasetManifest, DatasetManifest> manifest_split(const DatasetManifest& m,
                                                           double train_frac,
                                                           std::uint64_t seed);

}  // namespace objcrop
