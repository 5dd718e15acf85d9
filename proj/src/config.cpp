#include "unicorn/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "unicorn/errors.hpp"

namespace unicorn {

using json = nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string fmt(double v) {
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, v);
  return std::string(buffer, end);
}
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
  throw ValidationError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || end != value.data() + value.size()) bad_value(key, value, "a non-negative integer");
  return v;
}
std::size_t to_size(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(to_u64(key, value));
}
double to_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || end != value.data() + value.size()) bad_value(key, value, "a number");
  return v;
}
bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "true or false");
}
std::vector<std::size_t> to_sizes(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(to_size(key, trim(item)));
  if (out.empty()) bad_value(key, value, "a comma-separated list of integers");
  return out;
}

template <typename Parse>
auto wrap(const std::string& key, const std::string& value, Parse parse) {
  try {
    return parse(value);
  } catch (const ValidationError& e) {
    throw ValidationError("config key '" + key + "': " + e.what());
  }
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
};

#define SIZE_FIELD(name, member) \
  Field{name, [](const RunConfig& c) { return fmt(c.member); }, \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_size(k, v); }}
#define DOUBLE_FIELD(name, member) \
  Field{name, [](const RunConfig& c) { return fmt(c.member); }, \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_double(k, v); }}
#define BOOL_FIELD(name, member) \
  Field{name, [](const RunConfig& c) { return fmt(c.member); }, \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_bool(k, v); }}
#define SIZES_FIELD(name, member) \
  Field{name, [](const RunConfig& c) { return fmt(c.member); }, \
        [](RunConfig& c, const std::string& k, const std::string& v) { c.member = to_sizes(k, v); }}
#define STRING_FIELD(name, member) \
  Field{name, [](const RunConfig& c) { return c.member; }, \
        [](RunConfig& c, const std::string&, const std::string& v) { c.member = v; }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"preset", [](const RunConfig& c) { return c.preset; },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v != "desk" && v != "full_scale") bad_value(k, v, "desk or full_scale");
              c.preset = v;
            }},
      Field{"modality", [](const RunConfig& c) { return to_string(c.modality); },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.modality = wrap(k, v, parse_modality);
              c.model.modality = c.modality;
            }},
      Field{"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.seed = to_u64(k, v);
              c.training.seed = c.seed;
            }},

      STRING_FIELD("data.manifest", data.manifest),
      STRING_FIELD("data.eeg_features", data.eeg_features),
      SIZE_FIELD("data.series_length", data.series_length),
      SIZE_FIELD("data.stride", data.stride),
      DOUBLE_FIELD("data.lag_sec", data.lag_sec),
      BOOL_FIELD("data.drop_empty", data.drop_empty),

      Field{"split.method", [](const RunConfig& c) { return to_string(c.split.method); },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.split.method = wrap(k, v, parse_split_method);
            }},
      Field{"split.ratios", [](const RunConfig& c) { return format_ratios(c.split.ratios); },
            [](RunConfig& c, const std::string& k, const std::string& v) { c.split.ratios = wrap(k, v, parse_ratios); }},
      BOOL_FIELD("split.purge_overlap", split.purge_overlap),

      Field{"model.volume_dims",
            [](const RunConfig& c) {
              const auto& d = c.model.volume_dims;
              return fmt(std::vector<std::size_t>{d.x, d.y, d.z});
            },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              auto d = to_sizes(k, v);
              if (d.size() != 3) bad_value(k, v, "three integers X,Y,Z");
              c.model.volume_dims = {static_cast<std::uint32_t>(d[0]), static_cast<std::uint32_t>(d[1]), static_cast<std::uint32_t>(d[2])};
            }},
      SIZES_FIELD("model.conv_channels", model.conv_channels),
      SIZES_FIELD("model.deconv_channels", model.deconv_channels),
      SIZE_FIELD("model.eeg_feature_dim", model.eeg_feature_dim),
      SIZE_FIELD("model.eeg_patches", model.eeg_patches),
      SIZE_FIELD("model.eeg_model_dim", model.eeg_model_dim),
      SIZE_FIELD("model.eeg_layers", model.eeg_layers),
      SIZE_FIELD("model.eeg_heads", model.eeg_heads),
      SIZE_FIELD("model.eeg_decoder_hidden", model.eeg_decoder_hidden),
      SIZE_FIELD("model.snapshot_dim", model.snapshot_dim),
      SIZE_FIELD("model.series_layers", model.series_layers),
      SIZE_FIELD("model.series_heads", model.series_heads),
      BOOL_FIELD("model.positional_encoding", model.positional_encoding),
      BOOL_FIELD("model.projection_bias", model.projection_bias),
      SIZE_FIELD("model.decoder_dim", model.decoder_dim),
      SIZE_FIELD("model.decoder_layers", model.decoder_layers),
      SIZE_FIELD("model.decoder_heads", model.decoder_heads),

      DOUBLE_FIELD("phase1.lr", training.phase1.learning_rate),
      SIZE_FIELD("phase1.batch_size", training.phase1.batch_size),
      SIZE_FIELD("phase1.epochs", training.phase1.epochs),
      DOUBLE_FIELD("phase2.lr", training.phase2.learning_rate),
      SIZE_FIELD("phase2.batch_size", training.phase2.batch_size),
      SIZE_FIELD("phase2.epochs", training.phase2.epochs),
      SIZE_FIELD("phase2.series_length", training.series_length_phase2),
      DOUBLE_FIELD("phase3.lr", training.phase3.learning_rate),
      SIZE_FIELD("phase3.batch_size", training.phase3.batch_size),
      SIZE_FIELD("phase3.epochs", training.phase3.epochs),

      BOOL_FIELD("freeze.snapshot_encoder_p2", training.freeze.snapshot_encoder_p2),
      BOOL_FIELD("freeze.snapshot_decoder_p2", training.freeze.snapshot_decoder_p2),
      BOOL_FIELD("freeze.snapshot_encoder_p3", training.freeze.snapshot_encoder_p3),
      BOOL_FIELD("freeze.series_encoder_p3", training.freeze.series_encoder_p3),
      Field{"ablation", [](const RunConfig& c) { return to_string(c.training.ablation); },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.training.ablation = wrap(k, v, parse_ablation);
            }},

      Field{"eval.mode", [](const RunConfig& c) { return to_string(c.eval.decode.mode); },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.eval.decode.mode = wrap(k, v, parse_decode_mode);
            }},
      SIZE_FIELD("eval.beam_width", eval.decode.beam_width),
      SIZE_FIELD("eval.max_length", eval.decode.max_length),
      BOOL_FIELD("eval.sentence_bleu", eval.bleu.sentence_level),
      BOOL_FIELD("eval.bleu_smoothing", eval.bleu.smoothing),

      Field{"checkpoint.dtype", [](const RunConfig& c) { return to_string(c.checkpoint_dtype); },
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.checkpoint_dtype = wrap(k, v, parse_payload_type);
            }},
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD
#undef SIZES_FIELD
#undef STRING_FIELD

const Field& field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ValidationError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> parse_lines(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key=value");
    std::string key = trim(content.substr(0, eq));
    std::string value = trim(content.substr(eq + 1));
    field(key);
    if (!seen.insert(key).second) throw ValidationError("config key '" + key + "' given twice");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

template <typename Spec>
using SpecSetter = std::function<void(Spec&, const std::string&, const std::string&)>;

template <typename Spec>
Spec parse_spec(std::string_view text, const std::map<std::string, SpecSetter<Spec>>& setters) {
  Spec spec;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ValidationError("spec line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(content.substr(0, eq));
    auto it = setters.find(key);
    if (it == setters.end()) throw ValidationError("unknown spec key '" + key + "'");
    if (!seen.insert(key).second) throw ValidationError("spec key '" + key + "' given twice");
    it->second(spec, key, trim(content.substr(eq + 1)));
  }
  return spec;
}

}  // namespace

SyntheticSpec parse_synthetic_spec(std::string_view text) {
  using S = SyntheticSpec;
  static const std::map<std::string, SpecSetter<S>> setters = {
      {"n_subjects", [](S& s, const std::string& k, const std::string& v) { s.n_subjects = to_size(k, v); }},
      {"n_stimuli", [](S& s, const std::string& k, const std::string& v) { s.n_stimuli = to_size(k, v); }},
      {"frames_per_stimulus",
       [](S& s, const std::string& k, const std::string& v) { s.frames_per_stimulus = to_size(k, v); }},
      {"dims",
       [](S& s, const std::string& k, const std::string& v) {
         auto d = to_sizes(k, v);
         if (d.size() != 3) bad_value(k, v, "three integers X,Y,Z");
         s.dims = {static_cast<std::uint32_t>(d[0]), static_cast<std::uint32_t>(d[1]),
                   static_cast<std::uint32_t>(d[2])};
       }},
      {"vocab_size", [](S& s, const std::string& k, const std::string& v) { s.vocab_size = to_size(k, v); }},
      {"tr_seconds", [](S& s, const std::string& k, const std::string& v) { s.tr_seconds = to_double(k, v); }},
      {"noise_sigma", [](S& s, const std::string& k, const std::string& v) { s.noise_sigma = to_double(k, v); }},
  };
  return parse_spec<S>(text, setters);
}

SyntheticEegSpec parse_synthetic_eeg_spec(std::string_view text) {
  using S = SyntheticEegSpec;
  static const std::map<std::string, SpecSetter<S>> setters = {
      {"n_subjects", [](S& s, const std::string& k, const std::string& v) { s.n_subjects = to_size(k, v); }},
      {"n_sentences", [](S& s, const std::string& k, const std::string& v) { s.n_sentences = to_size(k, v); }},
      {"min_words", [](S& s, const std::string& k, const std::string& v) { s.min_words = to_size(k, v); }},
      {"max_words", [](S& s, const std::string& k, const std::string& v) { s.max_words = to_size(k, v); }},
      {"feature_dim", [](S& s, const std::string& k, const std::string& v) { s.feature_dim = to_size(k, v); }},
      {"vocab_size", [](S& s, const std::string& k, const std::string& v) { s.vocab_size = to_size(k, v); }},
      {"noise_sigma", [](S& s, const std::string& k, const std::string& v) { s.noise_sigma = to_double(k, v); }},
  };
  return parse_spec<S>(text, setters);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

RunConfig RunConfig::defaults(const std::string& preset, Modality modality) {
  RunConfig c;
  c.preset = preset;
  c.modality = modality;
  if (preset == "desk") {
    c.model = modality == Modality::fmri ? ModelConfig::desk_fmri() : ModelConfig::desk_eeg();
    c.training = TrainingConfig::desk(modality);
  } else if (preset == "full_scale") {
    c.model = modality == Modality::fmri ? ModelConfig::full_scale_fmri() : ModelConfig::full_scale_eeg();
    c.training = TrainingConfig::full_scale(modality);
  } else {
    throw ValidationError("unknown preset '" + preset + "' (expected desk or full_scale)");
  }
  c.training.seed = c.seed;
  return c;
}

RunConfig RunConfig::parse(std::string_view text) {
  const auto lines = parse_lines(text);
  std::string preset = "desk";
  Modality modality = Modality::fmri;
  for (const auto& [key, value] : lines) {
    if (key == "preset") preset = value;
    if (key == "modality") modality = wrap(key, value, parse_modality);
  }
  RunConfig c = defaults(preset, modality);
  for (const auto& [key, value] : lines) c.set(key, value);
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

void RunConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, key, value); }

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(*this));
  return out;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return names;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + "=" + v + "\n";
  return out;
}

json RunConfig::to_json() const {
  json out = json::object();
  for (const auto& [k, v] : entries()) out[k] = v;
  return out;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw FormatError("run config echo is not an object");
  std::string text;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw FormatError("run config echo: value of '" + k + "' is not a string");
    text += k + "=" + v.get<std::string>() + "\n";
  }
  return parse(text);
}

void RunConfig::apply_environment() {
  if (const char* env = std::getenv("UNICORN_SEED"); env && *env) set("seed", env);
}

void RunConfig::validate() const {
  if (model.modality != modality) throw ValidationError("model modality differs from run modality");
  if (data.series_length == 0) throw ValidationError("data.series_length must be positive");
  if (eval.decode.beam_width == 0) throw ValidationError("eval.beam_width must be positive");
  split.ratios.validate();
  model.validate();
  training.validate();
}

WindowingOptions RunConfig::windowing() const {
  return {data.series_length, data.stride, data.lag_sec, data.drop_empty};
}

}  // namespace unicorn
