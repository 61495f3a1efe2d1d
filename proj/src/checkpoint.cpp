#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "bifleet/common.hpp"
#include "bifleet/train.hpp"

namespace bifleet {

using nlohmann::json;

// Defined in ce_graph.cpp.
json inventory_to_json(const LabelInventory& inv);
LabelInventory inventory_from_json(const json& j);

namespace {

constexpr char kMagic[8] = {'B', 'F', 'L', 'T', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

json kv_to_json(const std::map<std::string, std::string>& kv) {
  json j = json::object();
  for (const auto& [k, v] : kv) j[k] = v;
  return j;
}

std::map<std::string, std::string> kv_from_json(const json& j) {
  std::map<std::string, std::string> kv;
  for (auto it = j.begin(); it != j.end(); ++it) kv[it.key()] = it.value().get<std::string>();
  return kv;
}

}  // namespace

void save_checkpoint(const std::string& path, const BiFleetModel& model,
                     const CheckpointMeta& meta) {
  json manifest;
  manifest["model_config"] = kv_to_json(model.config().to_kv());
  manifest["train_config"] = kv_to_json(meta.train_config);
  manifest["graph"] = json::parse(model.graph().to_json());
  manifest["vocab"]["words"] = model.vocab().words();
  std::vector<int> chars;
  for (char c : model.vocab().charset()) chars.push_back(static_cast<unsigned char>(c));
  manifest["vocab"]["chars"] = chars;
  manifest["epoch"] = meta.epoch;
  manifest["rng"] = meta.rng_state;

  json tensors = json::array();
  const ParamStore& params = model.params();
  for (int i = 0; i < params.size(); ++i) {
    const auto& p = params.at(i);
    tensors.push_back({{"name", p.name},
                       {"shape", p.value.shape()},
                       {"count", p.value.numel()},
                       {"trainable", p.trainable}});
  }
  manifest["tensors"] = tensors;

  const std::string manifest_text = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  const uint64_t manifest_len = manifest_text.size();
  write_pod(out, manifest_len);
  out.write(manifest_text.data(), static_cast<std::streamsize>(manifest_text.size()));
  for (int i = 0; i < params.size(); ++i) {
    const auto& v = params.at(i).value;
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.numel() * sizeof(double)));
  }
  if (!out) throw IoError("checkpoint write failed: " + path);
}

BiFleetModel load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("not a checkpoint file: " + path);
  }
  uint32_t version = 0;
  read_pod(in, version);
  if (version != kVersion) {
    throw ParseError(cat("unsupported checkpoint version ", version));
  }
  uint64_t manifest_len = 0;
  read_pod(in, manifest_len);
  std::string manifest_text(manifest_len, '\0');
  in.read(manifest_text.data(), static_cast<std::streamsize>(manifest_len));
  if (!in) throw ParseError("truncated checkpoint manifest: " + path);

  json manifest;
  try {
    manifest = json::parse(manifest_text);
  } catch (const json::exception& e) {
    throw ParseError(cat("invalid checkpoint manifest: ", e.what()));
  }

  ModelConfig config = ModelConfig::from_kv(kv_from_json(manifest.at("model_config")));
  CEGraph graph = CEGraph::from_json(manifest.at("graph").dump());
  std::vector<std::string> words = manifest.at("vocab").at("words").get<std::vector<std::string>>();
  std::string chars;
  for (int c : manifest.at("vocab").at("chars")) chars.push_back(static_cast<char>(c));
  Vocabulary vocab = Vocabulary::from_lists(std::move(words), std::move(chars));

  ParamStore store;
  for (const auto& t : manifest.at("tensors")) {
    const std::vector<int64_t> shape = t.at("shape").get<std::vector<int64_t>>();
    Tensor value(shape);
    in.read(reinterpret_cast<char*>(value.data()),
            static_cast<std::streamsize>(value.numel() * sizeof(double)));
    if (!in) throw ParseError("truncated checkpoint payload: " + path);
    store.add(t.at("name").get<std::string>(), std::move(value), t.at("trainable").get<bool>());
  }

  if (meta) {
    meta->train_config = kv_from_json(manifest.at("train_config"));
    meta->epoch = manifest.at("epoch").get<int>();
    meta->rng_state = manifest.at("rng").get<std::string>();
  }
  return BiFleetModel(config, std::move(graph), std::move(vocab), std::move(store));
}

}  // namespace bifleet
