#include "advforge/config.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

namespace advforge {

namespace {

LayerSpec layer_from_json(const nlohmann::json& j) {
  LayerSpec s;
  s.kind = layer_kind_from_name(j.at("kind").get<std::string>());
  s.units = j.value("units", 0);
  s.channels = j.value("channels", 0);
  s.kernel = j.value("kernel", 0);
  s.stride = j.value("stride", s.kind == LayerKind::maxpool2d ? j.value("kernel", 0) : 1);
  s.padding = j.value("padding", 0);
  return s;
}

nlohmann::json layer_to_json(const LayerSpec& s) {
  nlohmann::json j;
  j["kind"] = layer_kind_name(s.kind);
  if (s.units) j["units"] = s.units;
  if (s.channels) j["channels"] = s.channels;
  if (s.kernel) j["kernel"] = s.kernel;
  if (s.kind == LayerKind::conv2d || s.kind == LayerKind::maxpool2d) {
    j["stride"] = s.stride;
    if (s.kind == LayerKind::conv2d) j["padding"] = s.padding;
  }
  return j;
}

WarpModel warp_from_name(const std::string& name) {
  if (name == "identity") return WarpModel::identity;
  if (name == "translation") return WarpModel::translation;
  if (name == "affine") return WarpModel::affine;
  throw ConfigError("unknown warp model: " + name);
}

std::string warp_name(WarpModel m) {
  switch (m) {
    case WarpModel::identity: return "identity";
    case WarpModel::translation: return "translation";
    case WarpModel::affine: return "affine";
  }
  throw std::logic_error("unreachable warp model");
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  try {
    const auto& ds = j.at("dataset");
    const std::string type = ds.at("type").get<std::string>();
    if (type == "idx") {
      cfg.idx_images = ds.at("images").get<std::string>();
      cfg.idx_labels = ds.at("labels").get<std::string>();
      cfg.num_classes = ds.at("num_classes").get<int>();
    } else if (type == "synthetic") {
      SyntheticSpec s;
      s.num_classes = ds.value("num_classes", s.num_classes);
      s.height = ds.value("height", s.height);
      s.width = ds.value("width", s.width);
      s.samples_per_class = ds.value("samples_per_class", s.samples_per_class);
      s.noise_sigma = ds.value("noise_sigma", s.noise_sigma);
      s.max_shift = ds.value("max_shift", s.max_shift);
      s.seed = ds.value("seed", s.seed);
      cfg.synthetic = s;
      cfg.num_classes = s.num_classes;
    } else {
      throw ConfigError("dataset.type must be \"idx\" or \"synthetic\"");
    }

    for (const auto& zj : j.at("zoo")) {
      ZooEntry e;
      e.id = zj.at("id").get<std::string>();
      e.family = zj.at("family").get<std::string>();
      e.seed = zj.at("seed").get<std::uint64_t>();
      for (const auto& lj : zj.at("layers")) e.layers.push_back(layer_from_json(lj));
      const auto& hj = zj.at("hyper");
      e.hyper.lr = hj.at("lr").get<double>();
      e.hyper.momentum = hj.at("momentum").get<double>();
      e.hyper.batch_size = hj.at("batch_size").get<int>();
      e.hyper.epochs = hj.at("epochs").get<int>();
      e.hyper.seed = e.seed;
      e.hyper.holdout_fraction = hj.value("holdout_fraction", e.hyper.holdout_fraction);
      cfg.zoo.push_back(std::move(e));
    }

    cfg.per_class = j.value("per_class", cfg.per_class);
    for (const auto& a : j.at("attacks")) cfg.attacks.push_back(attack_from_name(a.get<std::string>()));
    cfg.warp = warp_from_name(j.value("warp", "identity"));
    cfg.pass_threshold = j.value("pass_threshold", cfg.pass_threshold);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.global_seed = j.value("global_seed", cfg.global_seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  nlohmann::json j;
  nlohmann::json ds;
  if (cfg.synthetic) {
    ds["type"] = "synthetic";
    ds["num_classes"] = cfg.synthetic->num_classes;
    ds["height"] = cfg.synthetic->height;
    ds["width"] = cfg.synthetic->width;
    ds["samples_per_class"] = cfg.synthetic->samples_per_class;
    ds["noise_sigma"] = cfg.synthetic->noise_sigma;
    ds["max_shift"] = cfg.synthetic->max_shift;
    ds["seed"] = cfg.synthetic->seed;
  } else {
    ds["type"] = "idx";
    ds["images"] = *cfg.idx_images;
    ds["labels"] = *cfg.idx_labels;
    ds["num_classes"] = cfg.num_classes;
  }
  j["dataset"] = std::move(ds);
  nlohmann::json zoo = nlohmann::json::array();
  for (const auto& e : cfg.zoo) {
    nlohmann::json zj;
    zj["id"] = e.id;
    zj["family"] = e.family;
    zj["seed"] = e.seed;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : e.layers) layers.push_back(layer_to_json(l));
    zj["layers"] = std::move(layers);
    nlohmann::json hj;
    hj["lr"] = e.hyper.lr;
    hj["momentum"] = e.hyper.momentum;
    hj["batch_size"] = e.hyper.batch_size;
    hj["epochs"] = e.hyper.epochs;
    hj["holdout_fraction"] = e.hyper.holdout_fraction;
    zj["hyper"] = std::move(hj);
    zoo.push_back(std::move(zj));
  }
  j["zoo"] = std::move(zoo);
  j["per_class"] = cfg.per_class;
  nlohmann::json attacks = nlohmann::json::array();
  for (AttackType a : cfg.attacks) attacks.push_back(attack_name(a));
  j["attacks"] = std::move(attacks);
  j["warp"] = warp_name(cfg.warp);
  j["pass_threshold"] = cfg.pass_threshold;
  j["out_dir"] = cfg.out_dir;
  j["global_seed"] = cfg.global_seed;
  return j.dump(2) + "\n";
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

void validate_config(const RunConfig& cfg) {
  if (cfg.idx_images) {
    if (!std::filesystem::exists(*cfg.idx_images))
      throw ConfigError("dataset images path does not exist: " + *cfg.idx_images);
    if (!std::filesystem::exists(*cfg.idx_labels))
      throw ConfigError("dataset labels path does not exist: " + *cfg.idx_labels);
  } else if (!cfg.synthetic) {
    throw ConfigError("config declares no dataset");
  }
  if (cfg.zoo.empty()) throw ConfigError("config declares an empty zoo");
  for (const auto& e : cfg.zoo) {
    if (e.id.empty()) throw ConfigError("zoo entry with empty id");
    if (e.layers.empty()) throw ConfigError("zoo entry " + e.id + " has no layers");
    if (e.hyper.lr <= 0 || e.hyper.batch_size <= 0 || e.hyper.epochs < 0)
      throw ConfigError("zoo entry " + e.id + " has invalid hyperparameters");
  }
  for (size_t i = 0; i < cfg.zoo.size(); ++i)
    for (size_t k = i + 1; k < cfg.zoo.size(); ++k)
      if (cfg.zoo[i].id == cfg.zoo[k].id)
        throw ConfigError("duplicate zoo id: " + cfg.zoo[i].id);
  if (cfg.per_class <= 0) throw ConfigError("per_class must be positive");
  if (cfg.attacks.empty()) throw ConfigError("config declares no attacks");
}

LabeledDataset load_dataset(const RunConfig& cfg) {
  if (cfg.synthetic) return generate_synthetic(*cfg.synthetic);
  return load_idx_dataset(*cfg.idx_images, *cfg.idx_labels, cfg.num_classes);
}

}  // namespace advforge
