#include "objcrop/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "objcrop/errors.hpp"

namespace objcrop {

using nlohmann::json;

DatasetManifest manifest_read(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw MissingInputError("cannot open manifest: " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    ManifestEntry e;
    e.image = j.at("image").get<std::string>();
    e.width = j.at("width").get<int>();
    e.height = j.at("height").get<int>();
    for (const auto& o : j.at("objects")) {
      GtObject g;
      g.class_id = o.at("class").get<int>();
      const auto& b = o.at("box");
      g.box = BBox{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
      if (g.box.w <= 0 || g.box.h <= 0 || g.box.x < 0 || g.box.y < 0 ||
          g.box.right() > e.width || g.box.bottom() > e.height)
        throw ParseError("manifest line " + std::to_string(lineno) + ": box outside image");
      e.objects.push_back(g);
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void manifest_write(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw MissingInputError("cannot write manifest: " + path.string());
  for (const auto& e : m.entries) {
    json objs = json::array();
    for (const auto& o : e.objects)
      objs.push_back({{"class", o.class_id}, {"box", {o.box.x, o.box.y, o.box.w, o.box.h}}});
    json j{{"image", e.image}, {"width", e.width}, {"height", e.height}, {"objects", objs}};
    f << j.dump() << '\n';
  }
}

std::pair<DatasetManifest, DatasetManifest> manifest_split(const DatasetManifest& m,
                                                           double train_frac,
                                                           std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw ConfigError("split: train_frac must be in (0,1)");
  std::vector<std::size_t> idx(m.entries.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  // Fisher-Yates with the project RNG so the split is platform-stable.
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  const auto n_train = static_cast<std::size_t>(
      static_cast<double>(m.entries.size()) * train_frac);
  DatasetManifest train{m.root, {}}, val{m.root, {}};
  for (std::size_t i = 0; i < idx.size(); ++i)
    (i < n_train ? train : val).entries.push_back(m.entries[idx[i]]);
  return {train, val};
}

}  // namespace objcrop
