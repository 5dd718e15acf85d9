#include "unicorn/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "unicorn/errors.hpp"

namespace unicorn {

using json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kMagic = "UNICKPT1";
constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

template <typename T>
void append_le(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

template <typename T>
T read_le(std::string_view bytes, std::size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

std::uint32_t checksum(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + offset), chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

json dims_json(const VolumeDims& d) { return json::array({d.x, d.y, d.z}); }

struct TensorEntry {
  std::string name;
  Shape shape;
  std::span<const double> values;
};

}  // namespace

std::string to_string(PayloadType t) { return t == PayloadType::f64 ? "f64" : "f32"; }

PayloadType parse_payload_type(const std::string& text) {
  if (text == "f64") return PayloadType::f64;
  if (text == "f32") return PayloadType::f32;
  throw ValidationError("unknown payload dtype '" + text + "' (expected f64|f32)");
}

json model_config_to_json(const ModelConfig& c) {
  return json{{"modality", to_string(c.modality)},
              {"volume_dims", dims_json(c.volume_dims)},
              {"conv_channels", c.conv_channels},
              {"deconv_channels", c.deconv_channels},
              {"eeg_feature_dim", c.eeg_feature_dim},
              {"eeg_patches", c.eeg_patches},
              {"eeg_model_dim", c.eeg_model_dim},
              {"eeg_layers", c.eeg_layers},
              {"eeg_heads", c.eeg_heads},
              {"eeg_decoder_hidden", c.eeg_decoder_hidden},
              {"snapshot_dim", c.snapshot_dim},
              {"series_layers", c.series_layers},
              {"series_heads", c.series_heads},
              {"positional_encoding", c.positional_encoding},
              {"projection_bias", c.projection_bias},
              {"decoder_dim", c.decoder_dim},
              {"decoder_layers", c.decoder_layers},
              {"decoder_heads", c.decoder_heads}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.modality = parse_modality(j.at("modality").get<std::string>());
    const auto& d = j.at("volume_dims");
    c.volume_dims = {d.at(0).get<std::uint32_t>(), d.at(1).get<std::uint32_t>(), d.at(2).get<std::uint32_t>()};
    c.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
    c.deconv_channels = j.at("deconv_channels").get<std::vector<std::size_t>>();
    c.eeg_feature_dim = j.at("eeg_feature_dim").get<std::size_t>();
    c.eeg_patches = j.at("eeg_patches").get<std::size_t>();
    c.eeg_model_dim = j.at("eeg_model_dim").get<std::size_t>();
    c.eeg_layers = j.at("eeg_layers").get<std::size_t>();
    c.eeg_heads = j.at("eeg_heads").get<std::size_t>();
    c.eeg_decoder_hidden = j.at("eeg_decoder_hidden").get<std::size_t>();
    c.snapshot_dim = j.at("snapshot_dim").get<std::size_t>();
    c.series_layers = j.at("series_layers").get<std::size_t>();
    c.series_heads = j.at("series_heads").get<std::size_t>();
    c.positional_encoding = j.at("positional_encoding").get<bool>();
    c.projection_bias = j.at("projection_bias").get<bool>();
    c.decoder_dim = j.at("decoder_dim").get<std::size_t>();
    c.decoder_layers = j.at("decoder_layers").get<std::size_t>();
    c.decoder_heads = j.at("decoder_heads").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
  return c;
}

std::string encode_checkpoint(const ModelBundle& bundle, const TrainProgress& progress, const json& run_config,
                              PayloadType payload) {
  const auto params = bundle.parameters();
  std::vector<TensorEntry> entries;
  for (const auto& p : params) entries.push_back({p.name, p.tensor.shape(), p.tensor.data()});
  if (progress.optimizer) {
    for (const auto& [name, values] : progress.optimizer->first_moment)
      entries.push_back({"optimizer.m." + name, {values.size()}, values});
    for (const auto& [name, values] : progress.optimizer->second_moment)
      entries.push_back({"optimizer.v." + name, {values.size()}, values});
  }

  const std::size_t width = payload == PayloadType::f64 ? 8 : 4;
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& e : entries) {
    tensors.push_back({{"name", e.name}, {"shape", e.shape}, {"dtype", to_string(payload)}, {"offset", offset}});
    offset += e.values.size() * width;
  }

  json history = json::array();
  for (const auto& r : progress.history)
    history.push_back({{"phase", r.phase}, {"epoch", r.epoch}, {"split", r.split}, {"loss", r.loss},
                       {"wall_seconds", r.wall_seconds}});

  json optimizer = nullptr;
  if (progress.optimizer) {
    const AdamConfig cfg = progress.optimizer_config.value_or(AdamConfig{});
    optimizer = {{"kind", "adam"},
                 {"learning_rate", cfg.learning_rate},
                 {"beta1", cfg.beta1},
                 {"beta2", cfg.beta2},
                 {"epsilon", cfg.epsilon},
                 {"step", progress.optimizer->step}};
  }

  std::vector<int> phases(bundle.completed_phases().begin(), bundle.completed_phases().end());
  json header{{"format_version", kFormatVersion},
              {"model_config", model_config_to_json(bundle.config())},
              {"run_config", run_config},
              {"vocabulary", bundle.vocabulary().tokens()},
              {"seed", bundle.seed()},
              {"ablation", to_string(bundle.ablation())},
              {"completed_phases", phases},
              {"progress",
               {{"phase", progress.phase},
                {"next_epoch", progress.next_epoch},
                {"rng_state", progress.rng_state},
                {"history", history}}},
              {"optimizer", optimizer},
              {"payload_bytes", offset},
              {"tensors", tensors}};

  const std::string header_text = header.dump();
  std::string body;
  body.reserve(header_text.size() + offset);
  body += header_text;
  for (const auto& e : entries)
    for (double v : e.values) {
      if (payload == PayloadType::f64) {
        append_le(body, v);
      } else {
        append_le(body, static_cast<float>(v));
      }
    }

  std::string out;
  out.reserve(kMagic.size() + 8 + body.size() + 4);
  out += kMagic;
  append_le<std::uint64_t>(out, header_text.size());
  out += body;
  append_le<std::uint32_t>(out, checksum(body));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic)
    throw FormatError("not a checkpoint (bad magic)");
  const auto header_len = read_le<std::uint64_t>(bytes, kMagic.size());
  const std::size_t body_start = kMagic.size() + 8;
  if (bytes.size() < body_start + 4 || header_len > bytes.size() - body_start - 4)
    throw CorruptionError("checkpoint truncated");
  const std::string_view body = bytes.substr(body_start, bytes.size() - body_start - 4);
  if (checksum(body) != read_le<std::uint32_t>(bytes, bytes.size() - 4))
    throw CorruptionError("checkpoint checksum mismatch");

  json header;
  try {
    header = json::parse(body.substr(0, header_len));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  const std::string_view payload = body.substr(header_len);

  try {
    if (header.at("format_version").get<int>() != kFormatVersion)
      throw FormatError("unsupported checkpoint version");
    if (header.at("payload_bytes").get<std::size_t>() != payload.size())
      throw CorruptionError("checkpoint payload size mismatch");

    auto config = model_config_from_json(header.at("model_config"));
    auto vocabulary = Vocabulary::from_tokens(header.at("vocabulary").get<std::vector<std::string>>());
    ModelBundle bundle(config, std::move(vocabulary), header.at("seed").get<std::uint64_t>());
    bundle.set_ablation(parse_ablation(header.at("ablation").get<std::string>()));
    auto phases = header.at("completed_phases").get<std::vector<int>>();
    bundle.set_completed_phases({phases.begin(), phases.end()});

    std::map<std::string, Tensor> params;
    for (const auto& p : bundle.parameters()) params.emplace(p.name, p.tensor);

    TrainProgress progress;
    const auto& prog = header.at("progress");
    progress.phase = prog.at("phase").get<int>();
    progress.next_epoch = prog.at("next_epoch").get<std::size_t>();
    progress.rng_state = prog.at("rng_state").get<std::string>();
    for (const auto& r : prog.at("history"))
      progress.history.push_back({r.at("phase").get<int>(), r.at("epoch").get<std::size_t>(),
                                  r.at("split").get<std::string>(), r.at("loss").get<double>(),
                                  r.at("wall_seconds").get<double>()});
    const auto& opt = header.at("optimizer");
    if (!opt.is_null()) {
      AdamConfig cfg{opt.at("learning_rate").get<double>(), opt.at("beta1").get<double>(),
                     opt.at("beta2").get<double>(), opt.at("epsilon").get<double>()};
      progress.optimizer_config = cfg;
      progress.optimizer = AdamState{};
      progress.optimizer->step = opt.at("step").get<std::size_t>();
    }

    std::size_t loaded_params = 0;
    for (const auto& t : header.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto shape = t.at("shape").get<Shape>();
      const auto width = parse_payload_type(t.at("dtype").get<std::string>()) == PayloadType::f64 ? 8u : 4u;
      const auto offset = t.at("offset").get<std::size_t>();
      const std::size_t count = shape_size(shape);
      if (offset > payload.size() || count * width > payload.size() - offset)
        throw CorruptionError("tensor " + name + " exceeds the payload");
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i)
        values[i] = width == 8 ? read_le<double>(payload, offset + i * 8)
                               : static_cast<double>(read_le<float>(payload, offset + i * 4));

      if (name.rfind("optimizer.", 0) == 0) {
        if (!progress.optimizer) throw FormatError("optimizer tensor without optimizer header");
        const bool first = name.rfind("optimizer.m.", 0) == 0;
        auto& slot = first ? progress.optimizer->first_moment : progress.optimizer->second_moment;
        slot[name.substr(12)] = std::move(values);
        continue;
      }
      auto it = params.find(name);
      if (it == params.end()) throw FormatError("checkpoint tensor " + name + " does not belong to the model");
      if (it->second.shape() != shape) throw CorruptionError("shape mismatch for " + name);
      auto dst = it->second.data();
      std::copy(values.begin(), values.end(), dst.begin());
      ++loaded_params;
    }
    if (loaded_params != params.size()) throw FormatError("checkpoint is missing model parameters");
    return Checkpoint{std::move(bundle), std::move(progress), header.at("run_config")};
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle, const TrainProgress& progress,
                     const json& run_config, PayloadType payload) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto bytes = encode_checkpoint(bundle, progress, run_config, payload);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingPrerequisiteError("checkpoint not found: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_checkpoint(buffer.str());
}

}  // namespace unicorn
