#include "darkhash/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "darkhash/errors.hpp"

namespace darkhash {

namespace {

constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw FormatError("DHM1: truncated checkpoint");
  }
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const HashModel& model, const nlohmann::json& metadata) {
  Writer w;
  w.bytes("DHM1", 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(model.bits()));
  const Shape in = model.input_shape();
  w.u32(static_cast<std::uint32_t>(in.channels));
  w.u32(static_cast<std::uint32_t>(in.height));
  w.u32(static_cast<std::uint32_t>(in.width));
  w.u32(static_cast<std::uint32_t>(model.layer_count()));
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const Layer& l = model.layer(i);
    w.u8(static_cast<std::uint8_t>(l.kind()));
    w.u8(model.frozen(i) ? 1 : 0);
    std::uint32_t width = 0;
    if (l.kind() == LayerKind::Conv2d) width = static_cast<std::uint32_t>(static_cast<const Conv2d&>(l).out_channels());
    if (l.kind() == LayerKind::Dense) width = static_cast<std::uint32_t>(static_cast<const Dense&>(l).outputs());
    w.u32(width);
    w.u32(static_cast<std::uint32_t>(l.params().size()));
    for (double p : l.params()) w.f32(static_cast<float>(p));
  }
  const std::string meta = metadata.dump();
  w.u32(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta.data(), meta.size());
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.str(4) != "DHM1") throw FormatError("not a DHM1 checkpoint");
  if (const auto v = r.u32(); v != kVersion) throw FormatError("DHM1: unsupported version " + std::to_string(v));
  const int bits = static_cast<int>(r.u32());
  Shape shape;
  shape.channels = static_cast<int>(r.u32());
  shape.height = static_cast<int>(r.u32());
  shape.width = static_cast<int>(r.u32());
  const Shape input = shape;
  const std::uint32_t count = r.u32();
  std::vector<std::unique_ptr<Layer>> layers;
  std::vector<bool> frozen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto kind = static_cast<LayerKind>(r.u8());
    frozen.push_back(r.u8() != 0);
    const int width = static_cast<int>(r.u32());
    std::unique_ptr<Layer> layer;
    switch (kind) {
      case LayerKind::Conv2d: layer = std::make_unique<Conv2d>(shape, width); break;
      case LayerKind::Relu: layer = std::make_unique<Relu>(shape); break;
      case LayerKind::MaxPool2: layer = std::make_unique<MaxPool2>(shape); break;
      case LayerKind::Dense: layer = std::make_unique<Dense>(shape, width); break;
      case LayerKind::Tanh: layer = std::make_unique<Tanh>(shape); break;
      default: throw FormatError("DHM1: unknown layer kind " + std::to_string(static_cast<int>(kind)));
    }
    const std::uint32_t n = r.u32();
    if (n != layer->params().size()) throw FormatError("DHM1: parameter count mismatch in layer " + std::to_string(i));
    for (auto& p : layer->params()) p = static_cast<double>(r.f32());
    shape = layer->output_shape();
    layers.push_back(std::move(layer));
  }
  const std::uint32_t meta_len = r.u32();
  const std::string meta = r.str(meta_len);
  if (!r.done()) throw FormatError("DHM1: trailing bytes");

  Checkpoint ck{HashModel(input, bits, std::move(layers)), nlohmann::json::object()};
  for (std::size_t i = 0; i < frozen.size(); ++i) ck.model.set_frozen(i, frozen[i]);
  try {
    ck.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("DHM1: bad metadata: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const HashModel& model, const nlohmann::json& metadata) {
  const auto bytes = encode_checkpoint(model, metadata);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void round_to_float(HashModel& model) {
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    for (auto& p : model.layer(i).params()) p = static_cast<double>(static_cast<float>(p));
  }
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"optimizer", cfg.optimizer == OptimizerKind::Sgd ? "sgd" : "rmsprop"},
          {"learning_rate", cfg.learning_rate},
          {"batch_size", cfg.batch_size},
          {"epochs", cfg.epochs},
          {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.optimizer = j.value("optimizer", "rmsprop") == "sgd" ? OptimizerKind::Sgd : OptimizerKind::RmsProp;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

}  // namespace darkhash
