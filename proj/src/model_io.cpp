#include "advforge/model_io.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstring>
#include <fstream>
#include <vector>

namespace advforge {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'V', 'Z', 'O', 'O', '0', '1'};

const std::array<std::uint64_t, 256>& crc_table() {
  static const std::array<std::uint64_t, 256> table = [] {
    std::array<std::uint64_t, 256> t{};
    const std::uint64_t poly = 0xC96C5795D7870F42ULL;  // reflected ECMA-182
    for (std::uint64_t i = 0; i < 256; ++i) {
      std::uint64_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? (c >> 1) ^ poly : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  return table;
}

void append_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void append_u64_le(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void append_f64_le(std::vector<unsigned char>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  append_u64_le(out, bits);
}

std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::uint64_t crc64(const unsigned char* data, size_t len, std::uint64_t crc) {
  crc = ~crc;
  for (size_t i = 0; i < len; ++i) crc = crc_table()[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

void save_model(const Model& model, const std::string& path) {
  nlohmann::json header;
  header["id"] = model.id();
  header["family"] = model.family();
  header["seed"] = model.seed();
  header["num_classes"] = model.num_classes();
  header["input_shape"] = model.input_shape();
  if (model.top1_error())
    header["top1_error"] = *model.top1_error();
  else
    header["top1_error"] = nullptr;
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& layer : model.layers()) {
    nlohmann::json j;
    j["kind"] = layer_kind_name(layer.spec.kind);
    j["units"] = layer.spec.units;
    j["channels"] = layer.spec.channels;
    j["kernel"] = layer.spec.kernel;
    j["stride"] = layer.spec.stride;
    j["padding"] = layer.spec.padding;
    j["weight_shape"] = layer.weight.shape();
    j["bias_shape"] = layer.bias.shape();
    layers.push_back(std::move(j));
  }
  header["layers"] = std::move(layers);
  const std::string header_str = header.dump();

  std::vector<unsigned char> buf;
  buf.insert(buf.end(), kMagic, kMagic + 8);
  append_u32_le(buf, static_cast<std::uint32_t>(header_str.size()));
  buf.insert(buf.end(), header_str.begin(), header_str.end());
  for (const Layer& layer : model.layers()) {
    if (!layer.has_params()) continue;
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) append_f64_le(buf, layer.weight[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) append_f64_le(buf, layer.bias[i]);
  }
  append_u64_le(buf, crc64(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContainerError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw ContainerError("write failed for " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError("cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 8 + 4 + 8) throw ContainerError("truncated container: " + path);
  if (std::memcmp(buf.data(), kMagic, 8) != 0)
    throw ContainerError("bad magic/version in " + path + " (expected ADVZOO01)");

  const std::uint64_t stored_crc = read_u64_le(buf.data() + buf.size() - 8);
  if (crc64(buf.data(), buf.size() - 8) != stored_crc)
    throw ContainerError("checksum failure in " + path);

  std::uint32_t header_len = 0;
  for (int i = 0; i < 4; ++i) header_len |= std::uint32_t(buf[8 + i]) << (8 * i);
  if (8 + 4 + size_t(header_len) + 8 > buf.size())
    throw ContainerError("truncated header in " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.begin() + 12, buf.begin() + 12 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw ContainerError("malformed header in " + path + ": " + e.what());
  }

  std::vector<LayerSpec> specs;
  Eigen::Index expected_doubles = 0;
  std::vector<std::pair<std::vector<int>, std::vector<int>>> declared_shapes;
  for (const auto& j : header.at("layers")) {
    LayerSpec s;
    s.kind = layer_kind_from_name(j.at("kind").get<std::string>());
    s.units = j.at("units").get<int>();
    s.channels = j.at("channels").get<int>();
    s.kernel = j.at("kernel").get<int>();
    s.stride = j.at("stride").get<int>();
    s.padding = j.at("padding").get<int>();
    specs.push_back(s);
    const auto ws = j.at("weight_shape").get<std::vector<int>>();
    const auto bs = j.at("bias_shape").get<std::vector<int>>();
    declared_shapes.emplace_back(ws, bs);
    if (!ws.empty()) expected_doubles += Tensor::shape_size(ws);
    if (!bs.empty()) expected_doubles += Tensor::shape_size(bs);
  }

  const size_t blob_len = buf.size() - 12 - header_len - 8;
  if (blob_len != static_cast<size_t>(expected_doubles) * 8)
    throw ContainerError("header shapes inconsistent with weight blob length in " + path);

  Model model(header.at("id").get<std::string>(), header.at("family").get<std::string>(),
              header.at("input_shape").get<std::vector<int>>(),
              header.at("num_classes").get<int>(), specs, header.at("seed").get<std::uint64_t>());
  if (!header.at("top1_error").is_null()) model.set_top1_error(header.at("top1_error").get<double>());

  const unsigned char* p = buf.data() + 12 + header_len;
  size_t li = 0;
  for (Layer& layer : model.layers()) {
    const auto& [ws, bs] = declared_shapes[li++];
    if (layer.weight.shape() != ws || layer.bias.shape() != bs)
      throw ContainerError("declared layer shapes do not type-check in " + path);
    if (!layer.has_params()) continue;
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i, p += 8) {
      std::uint64_t bits = read_u64_le(p);
      std::memcpy(&layer.weight[i], &bits, 8);
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i, p += 8) {
      std::uint64_t bits = read_u64_le(p);
      std::memcpy(&layer.bias[i], &bits, 8);
    }
  }
  return model;
}

}  // namespace advforge
