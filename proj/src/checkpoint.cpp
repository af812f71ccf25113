#include "lawn/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace lawn::training {

namespace {

using nlohmann::json;

json layer_to_json(const nn::LayerSpec& layer) {
  json j;
  if (const auto* c = std::get_if<nn::ConvSpec>(&layer)) {
    j = {{"type", "conv"}, {"out_channels", c->out_channels}, {"kernel", c->kernel}};
  } else if (const auto* s = std::get_if<nn::SepConvSpec>(&layer)) {
    j = {{"type", "sepconv"}, {"out_channels", s->out_channels}, {"kernel", s->kernel}};
  } else if (const auto* b = std::get_if<nn::BatchNormSpec>(&layer)) {
    j = {{"type", "batchnorm"}, {"epsilon", b->epsilon}, {"momentum", b->momentum}};
  } else if (const auto* e = std::get_if<nn::EluSpec>(&layer)) {
    j = {{"type", "elu"}, {"alpha", e->alpha}};
  } else if (std::holds_alternative<nn::MaxPoolSpec>(layer)) {
    j = {{"type", "maxpool"}};
  } else if (const auto* d = std::get_if<nn::DropoutSpec>(&layer)) {
    j = {{"type", "dropout"}, {"rate", d->rate}};
  } else if (std::holds_alternative<nn::FlattenSpec>(layer)) {
    j = {{"type", "flatten"}};
  } else if (const auto* f = std::get_if<nn::DenseSpec>(&layer)) {
    j = {{"type", "dense"}, {"out_features", f->out_features}};
  }
  return j;
}

nn::LayerSpec layer_from_json(const json& j) {
  const std::string type = j.at("type");
  if (type == "conv")
    return nn::ConvSpec{j.at("out_channels").get<int>(), j.at("kernel").get<int>()};
  if (type == "sepconv")
    return nn::SepConvSpec{j.at("out_channels").get<int>(), j.at("kernel").get<int>()};
  if (type == "batchnorm")
    return nn::BatchNormSpec{j.at("epsilon").get<double>(), j.at("momentum").get<double>()};
  if (type == "elu") return nn::EluSpec{j.at("alpha").get<double>()};
  if (type == "maxpool") return nn::MaxPoolSpec{};
  if (type == "dropout") return nn::DropoutSpec{j.at("rate").get<double>()};
  if (type == "flatten") return nn::FlattenSpec{};
  if (type == "dense") return nn::DenseSpec{j.at("out_features").get<int>()};
  throw CheckpointError(CheckpointError::Kind::description, "unknown layer type " + type);
}

json describe(const Checkpoint& ckpt) {
  json layers = json::array();
  for (const nn::LayerSpec& l : ckpt.spec.layers) layers.push_back(layer_to_json(l));
  json j = {
      {"format", "lawnbench-checkpoint"},
      {"model",
       {{"in_h", ckpt.spec.in_h},
        {"in_w", ckpt.spec.in_w},
        {"in_c", ckpt.spec.in_c},
        {"l2_lambda", ckpt.spec.l2_lambda},
        {"layers", layers}}},
      {"train",
       {{"epochs", ckpt.config.epochs},
        {"batch_size", ckpt.config.batch_size},
        {"optimizer", to_string(ckpt.config.optimizer)},
        {"learning_rate", ckpt.config.learning_rate},
        {"momentum", ckpt.config.momentum},
        {"beta1", ckpt.config.beta1},
        {"beta2", ckpt.config.beta2},
        {"adam_epsilon", ckpt.config.adam_epsilon},
        {"seed", ckpt.config.seed},
        {"shuffle", ckpt.config.shuffle},
        {"target_standardize", ckpt.config.target_standardize},
        {"patience", ckpt.config.early_stop_patience ? json(*ckpt.config.early_stop_patience)
                                                     : json(nullptr)}}},
      {"pipeline", ckpt.pipeline},
      {"preprocess",
       {{"fixed_threshold", ckpt.preprocess.fixed_threshold
                                ? json(*ckpt.preprocess.fixed_threshold)
                                : json(nullptr)},
        {"contour_blur_sigma", ckpt.preprocess.contour_blur_sigma},
        {"canny_sigma", ckpt.preprocess.canny.sigma},
        {"canny_low", ckpt.preprocess.canny.low},
        {"canny_high", ckpt.preprocess.canny.high}}},
      {"target",
       {{"mean", ckpt.target_mean}, {"std", ckpt.target_std}, {"standardized", ckpt.standardized}}},
      {"optimizer", {{"kind", to_string(ckpt.opt.kind)}, {"step", ckpt.opt.step}}},
  };
  return j;
}

void parse_description(const std::string& text, Checkpoint& ckpt) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointError::Kind::description,
                          std::string("bad description: ") + e.what());
  }
  try {
    const json& m = j.at("model");
    ckpt.spec.in_h = m.at("in_h").get<int>();
    ckpt.spec.in_w = m.at("in_w").get<int>();
    ckpt.spec.in_c = m.at("in_c").get<int>();
    ckpt.spec.l2_lambda = m.at("l2_lambda").get<double>();
    ckpt.spec.layers.clear();
    for (const json& lj : m.at("layers")) ckpt.spec.layers.push_back(layer_from_json(lj));

    const json& t = j.at("train");
    ckpt.config.epochs = t.at("epochs").get<int>();
    ckpt.config.batch_size = t.at("batch_size").get<int>();
    ckpt.config.optimizer = parse_optimizer(t.at("optimizer").get<std::string>());
    ckpt.config.learning_rate = t.at("learning_rate").get<double>();
    ckpt.config.momentum = t.at("momentum").get<double>();
    ckpt.config.beta1 = t.at("beta1").get<double>();
    ckpt.config.beta2 = t.at("beta2").get<double>();
    ckpt.config.adam_epsilon = t.at("adam_epsilon").get<double>();
    ckpt.config.seed = t.at("seed").get<uint64_t>();
    ckpt.config.shuffle = t.at("shuffle").get<bool>();
    ckpt.config.target_standardize = t.at("target_standardize").get<bool>();
    if (t.at("patience").is_null()) ckpt.config.early_stop_patience.reset();
    else ckpt.config.early_stop_patience = t.at("patience").get<int>();

    ckpt.pipeline = j.at("pipeline").get<std::string>();
    const json& pp = j.at("preprocess");
    if (pp.at("fixed_threshold").is_null()) ckpt.preprocess.fixed_threshold.reset();
    else ckpt.preprocess.fixed_threshold = pp.at("fixed_threshold").get<int>();
    ckpt.preprocess.contour_blur_sigma = pp.at("contour_blur_sigma").get<double>();
    ckpt.preprocess.canny.sigma = pp.at("canny_sigma").get<double>();
    ckpt.preprocess.canny.low = pp.at("canny_low").get<uint8_t>();
    ckpt.preprocess.canny.high = pp.at("canny_high").get<uint8_t>();

    const json& tg = j.at("target");
    ckpt.target_mean = tg.at("mean").get<double>();
    ckpt.target_std = tg.at("std").get<double>();
    ckpt.standardized = tg.at("standardized").get<bool>();

    ckpt.opt.kind = parse_optimizer(j.at("optimizer").at("kind").get<std::string>());
    ckpt.opt.step = j.at("optimizer").at("step").get<int64_t>();
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointError::Kind::description,
                          std::string("bad description: ") + e.what());
  }
}

void append_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void append_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_tensor(std::string& buf, const std::string& name, const nn::Tensor& t) {
  if (name.size() > 0xffff)
    throw CheckpointError(CheckpointError::Kind::io, "tensor name too long");
  append_u16(buf, static_cast<uint16_t>(name.size()));
  buf.append(name);
  buf.push_back(static_cast<char>(t.rank()));
  for (int64_t d : t.shape()) append_u32(buf, static_cast<uint32_t>(d));
  size_t bytes = static_cast<size_t>(t.numel()) * sizeof(float);
  size_t off = buf.size();
  buf.resize(off + bytes);
  std::memcpy(buf.data() + off, t.data(), bytes);  // little-endian host
}

class Reader {
 public:
  Reader(const char* data, size_t n) : data_(data), n_(n) {}
  size_t remaining() const { return n_ - pos_; }
  const char* take(size_t n) {
    if (pos_ + n > n_)
      throw CheckpointError(CheckpointError::Kind::truncated, "unexpected end of file");
    const char* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  uint16_t u16() {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(2));
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
  }
  uint32_t u32() {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(take(4));
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  }
  uint8_t u8() { return static_cast<uint8_t>(*take(1)); }

 private:
  const char* data_;
  size_t n_;
  size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::string buf;
  buf.reserve(1 << 20);
  buf.append("LAWN");
  append_u32(buf, kCheckpointVersion);
  std::string desc = describe(ckpt).dump();
  append_u32(buf, static_cast<uint32_t>(desc.size()));
  buf.append(desc);
  for (const auto& [key, t] : ckpt.params) append_tensor(buf, "p." + key, t);
  for (const auto& [key, t] : ckpt.opt.m) append_tensor(buf, "m." + key, t);
  for (const auto& [key, t] : ckpt.opt.v) append_tensor(buf, "v." + key, t);
  for (const auto& [key, t] : ckpt.opt.velocity) append_tensor(buf, "vel." + key, t);

  uint32_t crc = static_cast<uint32_t>(
      crc32(0, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
  append_u32(buf, crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 16) throw CheckpointError(CheckpointError::Kind::truncated, "file too short");

  uint32_t stored_crc;
  {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(buf.data() + buf.size() - 4);
    stored_crc = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                 (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  }
  uint32_t crc = static_cast<uint32_t>(crc32(
      0, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size() - 4)));
  if (crc != stored_crc)
    throw CheckpointError(CheckpointError::Kind::crc, "CRC mismatch in " + path.string());

  Reader r(buf.data(), buf.size() - 4);
  if (std::memcmp(r.take(4), "LAWN", 4) != 0)
    throw CheckpointError(CheckpointError::Kind::magic, "bad magic in " + path.string());
  uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointError::Kind::version,
                          "unsupported version " + std::to_string(version));
  uint32_t desc_len = r.u32();
  std::string desc(r.take(desc_len), desc_len);

  Checkpoint ckpt;
  parse_description(desc, ckpt);

  while (r.remaining() > 0) {
    uint16_t name_len = r.u16();
    std::string name(r.take(name_len), name_len);
    uint8_t rank = r.u8();
    if (rank == 0 || rank > 8)
      throw CheckpointError(CheckpointError::Kind::truncated, "bad tensor rank for " + name);
    std::vector<int64_t> shape(rank);
    size_t numel = 1;
    for (int i = 0; i < rank; ++i) {
      shape[static_cast<size_t>(i)] = r.u32();
      numel *= static_cast<size_t>(shape[static_cast<size_t>(i)]);
    }
    size_t bytes = numel * sizeof(float);
    const char* data = r.take(bytes);
    std::vector<float> values(numel);
    std::memcpy(values.data(), data, bytes);
    nn::Tensor t(std::move(shape), std::move(values));

    if (name.rfind("p.", 0) == 0) ckpt.params[name.substr(2)] = std::move(t);
    else if (name.rfind("m.", 0) == 0) ckpt.opt.m[name.substr(2)] = std::move(t);
    else if (name.rfind("v.", 0) == 0 && name.rfind("vel.", 0) != 0)
      ckpt.opt.v[name.substr(2)] = std::move(t);
    else if (name.rfind("vel.", 0) == 0) ckpt.opt.velocity[name.substr(4)] = std::move(t);
    else
      throw CheckpointError(CheckpointError::Kind::description, "unknown tensor " + name);
  }
  return ckpt;
}

}  // namespace lawn::training
