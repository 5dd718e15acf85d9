#include "unicorn/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "unicorn/errors.hpp"

namespace unicorn {

std::string to_string(Modality m) { return m == Modality::fmri ? "fmri" : "eeg"; }

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::wo_p1: return "wo_p1";
    case Ablation::wo_p2: return "wo_p2";
    case Ablation::wo_p1p2: return "wo_p1p2";
  }
  return "full";
}

Modality parse_modality(const std::string& text) {
  if (text == "fmri") return Modality::fmri;
  if (text == "eeg") return Modality::eeg;
  throw ValidationError("unknown modality '" + text + "' (expected fmri|eeg)");
}

Ablation parse_ablation(const std::string& text) {
  if (text == "full") return Ablation::full;
  if (text == "wo_p1") return Ablation::wo_p1;
  if (text == "wo_p2") return Ablation::wo_p2;
  if (text == "wo_p1p2") return Ablation::wo_p1p2;
  throw ValidationError("unknown ablation '" + text + "' (expected full|wo_p1|wo_p2|wo_p1p2)");
}

bool runs_phase1(Ablation a) { return a == Ablation::full || a == Ablation::wo_p2; }
bool runs_phase2(Ablation a) { return a == Ablation::full || a == Ablation::wo_p1; }
bool uses_series_encoder(Ablation a) { return a != Ablation::wo_p2; }

std::string to_string(DecodeMode m) {
  switch (m) {
    case DecodeMode::teacher_forced: return "teacher_forced";
    case DecodeMode::greedy: return "greedy";
    case DecodeMode::beam: return "beam";
  }
  return "teacher_forced";
}

DecodeMode parse_decode_mode(const std::string& text) {
  if (text == "teacher_forced") return DecodeMode::teacher_forced;
  if (text == "greedy") return DecodeMode::greedy;
  if (text == "beam") return DecodeMode::beam;
  throw ValidationError("unknown decode mode '" + text + "' (expected teacher_forced|greedy|beam)");
}

ModelConfig ModelConfig::desk_fmri() { return ModelConfig{}; }

ModelConfig ModelConfig::desk_eeg() {
  ModelConfig c;
  c.modality = Modality::eeg;
  return c;
}

ModelConfig ModelConfig::full_scale_fmri() {
  ModelConfig c;
  c.volume_dims = {64, 64, 27};
  c.snapshot_dim = 1024;
  c.decoder_dim = 1024;
  c.deconv_channels = {32, 16};
  c.series_heads = 8;
  c.decoder_heads = 8;
  return c;
}

ModelConfig ModelConfig::full_scale_eeg() {
  ModelConfig c = full_scale_fmri();
  c.modality = Modality::eeg;
  c.eeg_model_dim = 1024;
  c.eeg_heads = 8;
  c.eeg_decoder_hidden = 1024;
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ValidationError(std::string("model.") + name + " must be positive");
  };
  positive(snapshot_dim, "snapshot_dim");
  positive(decoder_dim, "decoder_dim");
  positive(series_heads, "series_heads");
  positive(decoder_heads, "decoder_heads");
  if (snapshot_dim % series_heads != 0) throw ValidationError("model.snapshot_dim must be divisible by series_heads");
  if (decoder_dim % decoder_heads != 0) throw ValidationError("model.decoder_dim must be divisible by decoder_heads");
  if (modality == Modality::fmri) {
    if (volume_dims.voxel_count() == 0) throw ValidationError("model.volume_dims must be positive");
    if (conv_channels.empty()) throw ValidationError("model.conv_channels must be nonempty");
    if (deconv_channels.empty()) throw ValidationError("model.deconv_channels must be nonempty");
    if (deconv_channels.size() >= conv_channels.size())
      throw ValidationError("snapshot decoder must have fewer blocks than the encoder");
  } else {
    positive(eeg_patches, "eeg_patches");
    positive(eeg_model_dim, "eeg_model_dim");
    positive(eeg_heads, "eeg_heads");
    if (eeg_feature_dim % eeg_patches != 0)
      throw ValidationError("model.eeg_feature_dim must be divisible by eeg_patches");
    if (eeg_model_dim % eeg_heads != 0) throw ValidationError("model.eeg_model_dim must be divisible by eeg_heads");
  }
}

Shape ModelConfig::signal_shape() const {
  if (modality == Modality::fmri) return {1, volume_dims.x, volume_dims.y, volume_dims.z};
  return {eeg_feature_dim};
}

Tensor volume_to_tensor(const FmriVolume& volume) {
  volume.validate();
  std::vector<double> values(volume.voxels.begin(), volume.voxels.end());
  return Tensor::from({1, volume.dims.x, volume.dims.y, volume.dims.z}, std::move(values));
}

Tensor eeg_to_tensor(const EegWordFeature& feature) {
  for (double v : feature.features)
    if (!std::isfinite(v)) throw ValidationError("non-finite EEG feature");
  return Tensor::from({feature.features.size()}, feature.features);
}

namespace {

Shape downsample(const Shape& dims, const ConvGeometry& g) {
  return {g.conv_out(dims[0]), g.conv_out(dims[1]), g.conv_out(dims[2])};
}

}  // namespace

// --- fMRI snapshot encoder / decoder ---------------------------------------

ConvSnapshotEncoder::ConvSnapshotEncoder(const ModelConfig& config, Rng& rng) : dims_(config.volume_dims) {
  Shape grid{dims_.x, dims_.y, dims_.z};
  std::size_t in_channels = 1;
  const std::size_t kvol = geom_.kernel * geom_.kernel * geom_.kernel;
  for (std::size_t out_channels : config.conv_channels) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in_channels * kvol));
    weights_.push_back(nn::uniform_parameter({out_channels, in_channels, geom_.kernel, geom_.kernel, geom_.kernel},
                                             bound, rng));
    biases_.push_back(nn::zero_parameter({out_channels}));
    grid = downsample(grid, geom_);
    in_channels = out_channels;
  }
  head_ = nn::Linear(in_channels * shape_size(grid), config.snapshot_dim, true, rng);
}

Tensor ConvSnapshotEncoder::encode(const Tensor& signal) const {
  const Shape expected{1, dims_.x, dims_.y, dims_.z};
  if (signal.shape() != expected) {
    throw ShapeError("snapshot encoder expects " + shape_to_string(expected) + ", got " +
                     shape_to_string(signal.shape()));
  }
  Tensor h = signal;
  for (std::size_t b = 0; b < weights_.size(); ++b) h = ops::relu(ops::conv3d(h, weights_[b], biases_[b], geom_));
  return head_.forward(ops::reshape(h, {1, h.size()}));
}

nn::ParameterList ConvSnapshotEncoder::parameters() const {
  nn::ParameterList out;
  for (std::size_t b = 0; b < weights_.size(); ++b) {
    out.push_back({"conv" + std::to_string(b) + ".weight", weights_[b]});
    out.push_back({"conv" + std::to_string(b) + ".bias", biases_[b]});
  }
  nn::append_prefixed(out, "head", head_.parameters());
  return out;
}

ConvSnapshotDecoder::ConvSnapshotDecoder(const ModelConfig& config, Rng& rng)
    : channels_(config.deconv_channels), snapshot_dim_(config.snapshot_dim) {
  const std::size_t blocks = channels_.size();
  Shape grid{config.volume_dims.x, config.volume_dims.y, config.volume_dims.z};
  grids_.assign(blocks + 1, Shape{});
  grids_[blocks] = grid;
  for (std::size_t b = blocks; b-- > 0;) grids_[b] = downsample(grids_[b + 1], geom_);

  expand_ = nn::Linear(config.snapshot_dim, channels_[0] * shape_size(grids_[0]), true, rng);
  const std::size_t kvol = geom_.kernel * geom_.kernel * geom_.kernel;
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t in_ch = channels_[b];
    const std::size_t out_ch = b + 1 < blocks ? channels_[b + 1] : 1;
    // Each output voxel of a stride-2 transposed conv sees ~in_ch*k^3/8 taps.
    const double fan_in = static_cast<double>(in_ch * kvol) / 8.0;
    const double bound = std::sqrt((b + 1 < blocks ? 6.0 : 3.0) / fan_in);
    weights_.push_back(nn::uniform_parameter({in_ch, out_ch, geom_.kernel, geom_.kernel, geom_.kernel}, bound, rng));
    biases_.push_back(nn::zero_parameter({out_ch}));
  }
}

Tensor ConvSnapshotDecoder::decode(const Tensor& embedding) const {
  if (embedding.size() != snapshot_dim_) {
    throw ShapeError("snapshot decoder expects a " + std::to_string(snapshot_dim_) + "-dim embedding, got " +
                     shape_to_string(embedding.shape()));
  }
  Tensor e = embedding.rank() == 2 ? embedding : ops::reshape(embedding, {1, snapshot_dim_});
  const Shape& coarse = grids_[0];
  Tensor h = ops::relu(ops::reshape(expand_.forward(e), {channels_[0], coarse[0], coarse[1], coarse[2]}));
  for (std::size_t b = 0; b < weights_.size(); ++b) {
    h = ops::conv_transpose3d(h, weights_[b], biases_[b], geom_, grids_[b + 1]);
    if (b + 1 < weights_.size()) h = ops::relu(h);
  }
  return h;
}

nn::ParameterList ConvSnapshotDecoder::parameters() const {
  nn::ParameterList out;
  nn::append_prefixed(out, "expand", expand_.parameters());
  for (std::size_t b = 0; b < weights_.size(); ++b) {
    out.push_back({"deconv" + std::to_string(b) + ".weight", weights_[b]});
    out.push_back({"deconv" + std::to_string(b) + ".bias", biases_[b]});
  }
  return out;
}

// --- EEG snapshot encoder / decoder ----------------------------------------

EegSnapshotEncoder::EegSnapshotEncoder(const ModelConfig& config, Rng& rng)
    : feature_dim_(config.eeg_feature_dim),
      patches_(config.eeg_patches),
      patch_size_(config.eeg_feature_dim / config.eeg_patches),
      model_dim_(config.eeg_model_dim),
      patch_embed_(patch_size_, model_dim_, true, rng) {
  for (std::size_t l = 0; l < config.eeg_layers; ++l)
    layers_.emplace_back(model_dim_, config.eeg_heads, 4 * model_dim_, rng);
  head_ = nn::Linear(patches_ * model_dim_, config.snapshot_dim, true, rng);
}

Tensor EegSnapshotEncoder::encode(const Tensor& signal) const {
  if (signal.size() != feature_dim_) {
    throw ShapeError("EEG encoder expects " + std::to_string(feature_dim_) + " features, got " +
                     shape_to_string(signal.shape()));
  }
  Tensor patches = ops::reshape(signal, {patches_, patch_size_});
  Tensor h = ops::add(patch_embed_.forward(patches), nn::sinusoidal_positions(patches_, model_dim_));
  for (const auto& layer : layers_) h = layer.forward(h);
  return head_.forward(ops::reshape(h, {1, patches_ * model_dim_}));
}

nn::ParameterList EegSnapshotEncoder::parameters() const {
  nn::ParameterList out;
  nn::append_prefixed(out, "patch_embed", patch_embed_.parameters());
  for (std::size_t l = 0; l < layers_.size(); ++l)
    nn::append_prefixed(out, "layer" + std::to_string(l), layers_[l].parameters());
  nn::append_prefixed(out, "head", head_.parameters());
  return out;
}

EegSnapshotDecoder::EegSnapshotDecoder(const ModelConfig& config, Rng& rng)
    : hidden_(config.snapshot_dim, config.eeg_decoder_hidden, true, rng),
      out_(config.eeg_decoder_hidden, config.eeg_feature_dim, true, rng),
      snapshot_dim_(config.snapshot_dim) {}

Tensor EegSnapshotDecoder::decode(const Tensor& embedding) const {
  if (embedding.size() != snapshot_dim_) throw ShapeError("EEG decoder: embedding size mismatch");
  Tensor e = embedding.rank() == 2 ? embedding : ops::reshape(embedding, {1, snapshot_dim_});
  Tensor y = out_.forward(ops::gelu(hidden_.forward(e)));
  return ops::reshape(y, {out_.out_features()});
}

nn::ParameterList EegSnapshotDecoder::parameters() const {
  nn::ParameterList out;
  nn::append_prefixed(out, "hidden", hidden_.parameters());
  nn::append_prefixed(out, "out", out_.parameters());
  return out;
}

// --- Series encoder and projection -----------------------------------------

SeriesEncoder::SeriesEncoder(const ModelConfig& config, Rng& rng)
    : dim_(config.snapshot_dim), positional_(config.positional_encoding) {
  for (std::size_t l = 0; l < config.series_layers; ++l)
    layers_.emplace_back(dim_, config.series_heads, 4 * dim_, rng);
}

Tensor SeriesEncoder::encode(const Tensor& snapshots) const {
  if (!snapshots.defined() || snapshots.rank() != 2 || snapshots.dim(0) == 0)
    throw ValidationError("series encoder needs a nonempty [T, D] sequence");
  if (snapshots.dim(1) != dim_) throw ShapeError("series encoder: embedding dim mismatch");
  Tensor h = positional_ ? ops::add(snapshots, nn::sinusoidal_positions(snapshots.dim(0), dim_)) : snapshots;
  for (const auto& layer : layers_) h = layer.forward(h);
  return h;
}

nn::ParameterList SeriesEncoder::parameters() const {
  nn::ParameterList out;
  for (std::size_t l = 0; l < layers_.size(); ++l)
    nn::append_prefixed(out, "layer" + std::to_string(l), layers_[l].parameters());
  return out;
}

Projection::Projection(std::size_t in, std::size_t out, bool bias, Rng& rng) : linear_(in, out, bias, rng) {}

Tensor Projection::project(const Tensor& serialized) const {
  if (serialized.rank() != 2 || serialized.dim(1) != linear_.in_features())
    throw ShapeError("projection expects [T, " + std::to_string(linear_.in_features()) + "], got " +
                     shape_to_string(serialized.shape()));
  return linear_.forward(serialized);
}

nn::ParameterList Projection::parameters() const { return linear_.parameters(); }

// --- Text decoder ------------------------------------------------------------

TinyTextDecoder::TinyTextDecoder(const ModelConfig& config, std::size_t vocab_size, Rng& rng)
    : dim_(config.decoder_dim), vocab_size_(vocab_size), final_norm_(config.decoder_dim) {
  if (vocab_size <= Vocabulary::kSpecialCount) throw ValidationError("text decoder: empty vocabulary");
  embeddings_ = nn::uniform_parameter({vocab_size, dim_}, std::sqrt(3.0 / static_cast<double>(dim_)), rng);
  for (std::size_t l = 0; l < config.decoder_layers; ++l)
    layers_.emplace_back(dim_, config.decoder_heads, 4 * dim_, rng);
}

Tensor TinyTextDecoder::logits(const Tensor& memory, std::span<const std::size_t> input_ids) const {
  if (!memory.defined() || memory.rank() != 2 || memory.dim(0) == 0)
    throw ValidationError("text decoder needs nonempty embeddings");
  if (memory.dim(1) != dim_) throw ShapeError("text decoder: memory dim mismatch");
  if (input_ids.empty()) throw ValidationError("text decoder needs at least one input token");
  Tensor h = ops::add(ops::embedding(embeddings_, input_ids), nn::sinusoidal_positions(input_ids.size(), dim_));
  for (const auto& layer : layers_) h = layer.forward(h, memory);
  return ops::matmul_nt(final_norm_.forward(h), embeddings_);
}

nn::ParameterList TinyTextDecoder::parameters() const {
  nn::ParameterList out{{"embeddings", embeddings_}};
  for (std::size_t l = 0; l < layers_.size(); ++l)
    nn::append_prefixed(out, "layer" + std::to_string(l), layers_[l].parameters());
  nn::append_prefixed(out, "final_norm", final_norm_.parameters());
  return out;
}

namespace {

std::size_t argmax_row(std::span<const double> values, std::size_t row, std::size_t width) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < width; ++j)
    if (values[row * width + j] > values[row * width + best]) best = j;
  return best;
}

std::vector<double> last_row_log_softmax(const Tensor& logits) {
  const std::size_t rows = logits.dim(0), vocab = logits.dim(1);
  auto v = logits.data().subspan((rows - 1) * vocab, vocab);
  const double mx = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double x : v) z += std::exp(x - mx);
  const double log_z = mx + std::log(z);
  std::vector<double> out(vocab);
  for (std::size_t j = 0; j < vocab; ++j) out[j] = v[j] - log_z;
  return out;
}

}  // namespace

DecodeResult decode_text(const TextDecoder& decoder, const Tensor& memory,
                         const std::optional<std::vector<std::size_t>>& gold, const DecodeOptions& options) {
  if (!memory.defined() || memory.rank() != 2 || memory.dim(0) == 0)
    throw ValidationError("decode_text: empty embeddings");
  DecodeResult result;
  const std::size_t vocab = decoder.vocab_size();

  if (options.mode == DecodeMode::teacher_forced) {
    if (!gold) throw ValidationError("teacher-forced decoding needs the gold sequence");
    std::vector<std::size_t> inputs{Vocabulary::kBos};
    inputs.insert(inputs.end(), gold->begin(), gold->end());
    result.logits = decoder.logits(memory, inputs);
    for (std::size_t t = 0; t < inputs.size(); ++t) result.predicted.push_back(argmax_row(result.logits.data(), t, vocab));
    return result;
  }

  NoGradGuard no_grad;
  const std::size_t max_length = options.max_length ? options.max_length : 4 * memory.dim(0);

  if (options.mode == DecodeMode::greedy) {
    std::vector<std::size_t> inputs{Vocabulary::kBos};
    while (result.predicted.size() < max_length) {
      auto log_probs = last_row_log_softmax(decoder.logits(memory, inputs));
      const std::size_t next = argmax_row(log_probs, 0, vocab);
      result.predicted.push_back(next);
      if (next == Vocabulary::kEos) break;
      inputs.push_back(next);
    }
    return result;
  }

  if (options.beam_width == 0) throw ValidationError("beam width must be >= 1");
  struct Hypothesis {
    std::vector<std::size_t> tokens;  // generated, without bos
    double score = 0.0;
    bool finished = false;
  };
  std::vector<Hypothesis> beams{Hypothesis{}};
  for (std::size_t step = 0; step < max_length; ++step) {
    struct Candidate {
      double score;
      std::size_t beam, token;  // token == npos carries a finished hypothesis
    };
    std::vector<Candidate> candidates;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      if (beams[b].finished) {
        candidates.push_back({beams[b].score, b, std::numeric_limits<std::size_t>::max()});
        continue;
      }
      std::vector<std::size_t> inputs{Vocabulary::kBos};
      inputs.insert(inputs.end(), beams[b].tokens.begin(), beams[b].tokens.end());
      auto log_probs = last_row_log_softmax(decoder.logits(memory, inputs));
      for (std::size_t v = 0; v < vocab; ++v) candidates.push_back({beams[b].score + log_probs[v], b, v});
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.beam != b.beam) return a.beam < b.beam;
      return a.token < b.token;
    });
    std::vector<Hypothesis> next;
    for (const auto& c : candidates) {
      if (next.size() == options.beam_width) break;
      Hypothesis h = beams[c.beam];
      if (c.token != std::numeric_limits<std::size_t>::max()) {
        h.tokens.push_back(c.token);
        h.score = c.score;
        h.finished = c.token == Vocabulary::kEos;
      }
      next.push_back(std::move(h));
    }
    beams = std::move(next);
    if (std::all_of(beams.begin(), beams.end(), [](const Hypothesis& h) { return h.finished; })) break;
  }
  // Beams are kept sorted by score, so the front is the best hypothesis.
  result.predicted = beams.front().tokens;
  return result;
}

// --- Bundle ----------------------------------------------------------------------

ModelBundle::ModelBundle(ModelConfig config, Vocabulary vocabulary, std::uint64_t seed)
    : config_(std::move(config)), vocabulary_(std::move(vocabulary)), seed_(seed) {
  config_.validate();
  Rng rng(derive_seed(seed, 0x6d6f64656cULL));
  if (config_.modality == Modality::fmri) {
    snapshot_encoder_ = std::make_unique<ConvSnapshotEncoder>(config_, rng);
    snapshot_decoder_ = std::make_unique<ConvSnapshotDecoder>(config_, rng);
  } else {
    snapshot_encoder_ = std::make_unique<EegSnapshotEncoder>(config_, rng);
    snapshot_decoder_ = std::make_unique<EegSnapshotDecoder>(config_, rng);
  }
  series_encoder_ = SeriesEncoder(config_, rng);
  projection_ = Projection(config_.snapshot_dim, config_.decoder_dim, config_.projection_bias, rng);
  text_decoder_ = std::make_unique<TinyTextDecoder>(config_, vocabulary_.size(), rng);
}

void ModelBundle::set_text_decoder(std::unique_ptr<TextDecoder> decoder) {
  if (!decoder || decoder->model_dim() != config_.decoder_dim)
    throw ShapeError("text decoder width must match the projection output");
  text_decoder_ = std::move(decoder);
}

nn::ParameterList ModelBundle::component_parameters(const std::string& component) const {
  if (component == "snapshot_encoder") return snapshot_encoder_->parameters();
  if (component == "snapshot_decoder") return snapshot_decoder_->parameters();
  if (component == "series_encoder") return series_encoder_.parameters();
  if (component == "projection") return projection_.parameters();
  if (component == "text_decoder") return text_decoder_->parameters();
  throw ValidationError("unknown component '" + component + "'");
}

nn::ParameterList ModelBundle::parameters() const {
  nn::ParameterList out;
  for (const char* name : {"snapshot_encoder", "snapshot_decoder", "series_encoder", "projection", "text_decoder"})
    nn::append_prefixed(out, name, component_parameters(name));
  return out;
}

void ModelBundle::copy_parameters_from(const ModelBundle& other) {
  auto mine = parameters();
  auto theirs = other.parameters();
  if (mine.size() != theirs.size()) throw ShapeError("copy_parameters_from: layout mismatch");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].name != theirs[i].name || mine[i].tensor.shape() != theirs[i].tensor.shape())
      throw ShapeError("copy_parameters_from: mismatch at " + mine[i].name);
    auto dst = mine[i].tensor.data();
    auto src = theirs[i].tensor.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  completed_phases_ = other.completed_phases_;
  ablation_ = other.ablation_;
}

Tensor ModelBundle::encode_snapshots(const std::vector<Tensor>& frames) const {
  if (frames.empty()) throw ValidationError("encode_snapshots: no frames");
  std::vector<Tensor> rows;
  rows.reserve(frames.size());
  for (const auto& f : frames) rows.push_back(snapshot_encoder_->encode(f));
  return ops::stack_rows(rows);
}

Tensor ModelBundle::serialize(const Tensor& snapshots) const {
  return uses_series_encoder(ablation_) ? series_encoder_.encode(snapshots) : snapshots;
}

Tensor ModelBundle::embed(const std::vector<Tensor>& frames) const {
  return projection_.project(serialize(encode_snapshots(frames)));
}

}  // namespace unicorn
