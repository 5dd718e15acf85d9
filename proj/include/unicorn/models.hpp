#pragma once

// Snapshot encoder/decoder, series encoder, projection and text decoder, plus
// the bundle that wires them into the two-stage pipeline.

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "unicorn/datamodel.hpp"
#include "unicorn/nn.hpp"
#include "unicorn/vocabulary.hpp"

namespace unicorn {

enum class Modality { fmri, eeg };

/// Which reconstruction phases run before text decoding.
enum class Ablation { full, wo_p1, wo_p2, wo_p1p2 };

std::string to_string(Modality m);
std::string to_string(Ablation a);
Modality parse_modality(const std::string& text);
Ablation parse_ablation(const std::string& text);

bool runs_phase1(Ablation a);
bool runs_phase2(Ablation a);
/// wo_p2 bypasses the series encoder and projects snapshot embeddings directly.
bool uses_series_encoder(Ablation a);

struct ModelConfig {
  Modality modality = Modality::fmri;

  // fMRI snapshot path
  VolumeDims volume_dims{16, 16, 8};
  std::vector<std::size_t> conv_channels{16, 32, 64, 128};
  /// Channels entering each transposed block; the first is the coarse grid.
  std::vector<std::size_t> deconv_channels{32, 16};

  // EEG snapshot path
  std::size_t eeg_feature_dim = kDefaultEegFeatureDim;
  std::size_t eeg_patches = 8;
  std::size_t eeg_model_dim = 64;
  std::size_t eeg_layers = 2;
  std::size_t eeg_heads = 4;
  std::size_t eeg_decoder_hidden = 128;

  std::size_t snapshot_dim = 64;

  std::size_t series_layers = 2;
  std::size_t series_heads = 4;
  bool positional_encoding = true;

  bool projection_bias = false;

  std::size_t decoder_dim = 64;
  std::size_t decoder_layers = 2;
  std::size_t decoder_heads = 4;

  static ModelConfig desk_fmri();
  static ModelConfig desk_eeg();
  /// 64x64x27 volumes, 1024-dim embeddings.
  static ModelConfig full_scale_fmri();
  static ModelConfig full_scale_eeg();

  void validate() const;
  /// Shape of one snapshot signal tensor: [1,X,Y,Z] or [D_eeg].
  Shape signal_shape() const;
};

Tensor volume_to_tensor(const FmriVolume& volume);
Tensor eeg_to_tensor(const EegWordFeature& feature);

/// Maps one snapshot signal to a [1, D_snap] embedding E^i.
class SnapshotEncoder {
 public:
  virtual ~SnapshotEncoder() = default;
  virtual Tensor encode(const Tensor& signal) const = 0;
  virtual nn::ParameterList parameters() const = 0;
};

/// Maps a [1, D_snap] embedding back to a signal-shaped tensor.
class SnapshotDecoder {
 public:
  virtual ~SnapshotDecoder() = default;
  virtual Tensor decode(const Tensor& embedding) const = 0;
  virtual nn::ParameterList parameters() const = 0;
};

/// Strided 3D convolution stack followed by an affine head.
class ConvSnapshotEncoder : public SnapshotEncoder {
 public:
  ConvSnapshotEncoder(const ModelConfig& config, Rng& rng);
  Tensor encode(const Tensor& signal) const override;
  nn::ParameterList parameters() const override;

 private:
  VolumeDims dims_;
  ConvGeometry geom_;
  std::vector<Tensor> weights_, biases_;
  nn::Linear head_;
};

/// Affine map to a coarse grid followed by transposed-convolution blocks.
class ConvSnapshotDecoder : public SnapshotDecoder {
 public:
  ConvSnapshotDecoder(const ModelConfig& config, Rng& rng);
  Tensor decode(const Tensor& embedding) const override;
  nn::ParameterList parameters() const override;

 private:
  ConvGeometry geom_;
  std::vector<Shape> grids_;  // spatial dims after each block, coarse first
  std::vector<std::size_t> channels_;
  nn::Linear expand_;
  std::vector<Tensor> weights_, biases_;
  std::size_t snapshot_dim_;
};

/// Patches the feature vector, runs a transformer over the patches, then
/// flattens and projects to the embedding size.
class EegSnapshotEncoder : public SnapshotEncoder {
 public:
  EegSnapshotEncoder(const ModelConfig& config, Rng& rng);
  Tensor encode(const Tensor& signal) const override;
  nn::ParameterList parameters() const override;

 private:
  std::size_t feature_dim_, patches_, patch_size_, model_dim_;
  nn::Linear patch_embed_;
  std::vector<nn::EncoderLayer> layers_;
  nn::Linear head_;
};

class EegSnapshotDecoder : public SnapshotDecoder {
 public:
  EegSnapshotDecoder(const ModelConfig& config, Rng& rng);
  Tensor decode(const Tensor& embedding) const override;
  nn::ParameterList parameters() const override;

 private:
  nn::Linear hidden_, out_;
  std::size_t snapshot_dim_;
};

/// Transformer encoder over a series of snapshot embeddings; length preserving.
class SeriesEncoder {
 public:
  SeriesEncoder() = default;
  SeriesEncoder(const ModelConfig& config, Rng& rng);

  /// [T, D_snap] -> [T, D_snap]
  Tensor encode(const Tensor& snapshots) const;
  nn::ParameterList parameters() const;
  void set_positional_encoding(bool enabled) { positional_ = enabled; }

 private:
  std::size_t dim_ = 0;
  bool positional_ = true;
  std::vector<nn::EncoderLayer> layers_;
};

/// E = E^e W^P (+ b when enabled).
class Projection {
 public:
  Projection() = default;
  Projection(std::size_t in, std::size_t out, bool bias, Rng& rng);

  Tensor project(const Tensor& serialized) const;
  nn::ParameterList parameters() const;
  Tensor& weight() { return linear_.weight(); }

 private:
  nn::Linear linear_;
};

/// Sequence decoder conditioned on projected embeddings.
class TextDecoder {
 public:
  virtual ~TextDecoder() = default;
  /// memory [n, D_dec], inputs = decoder input ids (bos-prefixed) -> [L, |V|].
  virtual Tensor logits(const Tensor& memory, std::span<const std::size_t> input_ids) const = 0;
  virtual nn::ParameterList parameters() const = 0;
  virtual std::size_t model_dim() const = 0;
  virtual std::size_t vocab_size() const = 0;
};

/// Hooks an external pretrained sequence-to-sequence model would implement:
/// its encoder consumes the projected embeddings in place of token
/// embeddings, and fine-tuning may cover all or part of its weights.
class PretrainedSeq2SeqAdapter : public TextDecoder {
 public:
  enum class FineTuneScope { full, decoder_only, frozen };
  virtual std::vector<std::string> tokenize(const std::string& text) const = 0;
  virtual void set_fine_tune_scope(FineTuneScope scope) = 0;
};

/// Small pre-norm transformer decoder with learned token embeddings, fixed
/// sinusoidal positions and an output head tied to the embedding table. The
/// encoder side is the identity over the projected embeddings.
class TinyTextDecoder : public TextDecoder {
 public:
  TinyTextDecoder(const ModelConfig& config, std::size_t vocab_size, Rng& rng);
  Tensor logits(const Tensor& memory, std::span<const std::size_t> input_ids) const override;
  nn::ParameterList parameters() const override;
  std::size_t model_dim() const override { return dim_; }
  std::size_t vocab_size() const override { return vocab_size_; }

 private:
  std::size_t dim_, vocab_size_;
  Tensor embeddings_;
  std::vector<nn::DecoderLayer> layers_;
  nn::LayerNorm final_norm_;
};

enum class DecodeMode { teacher_forced, greedy, beam };

std::string to_string(DecodeMode m);
DecodeMode parse_decode_mode(const std::string& text);

struct DecodeOptions {
  DecodeMode mode = DecodeMode::teacher_forced;
  std::size_t beam_width = 4;
  /// Generation cap; 0 means 4 tokens per memory position.
  std::size_t max_length = 0;
};

struct DecodeResult {
  Tensor logits;                      // [L, |V|], teacher-forced only
  std::vector<std::size_t> predicted;  // generated ids (eos-terminated when produced)
};

/// Teacher forcing feeds bos + gold and predicts gold + eos position by
/// position; greedy and beam generate from bos until eos or the cap.
DecodeResult decode_text(const TextDecoder& decoder, const Tensor& memory,
                         const std::optional<std::vector<std::size_t>>& gold, const DecodeOptions& options);

/// All learnable components of one pipeline.
class ModelBundle {
 public:
  ModelBundle(ModelConfig config, Vocabulary vocabulary, std::uint64_t seed);

  ModelBundle(const ModelBundle&) = delete;
  ModelBundle& operator=(const ModelBundle&) = delete;
  ModelBundle(ModelBundle&&) = default;
  ModelBundle& operator=(ModelBundle&&) = default;

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocabulary() const { return vocabulary_; }
  std::uint64_t seed() const { return seed_; }

  SnapshotEncoder& snapshot_encoder() { return *snapshot_encoder_; }
  const SnapshotEncoder& snapshot_encoder() const { return *snapshot_encoder_; }
  SnapshotDecoder& snapshot_decoder() { return *snapshot_decoder_; }
  const SnapshotDecoder& snapshot_decoder() const { return *snapshot_decoder_; }
  SeriesEncoder& series_encoder() { return series_encoder_; }
  const SeriesEncoder& series_encoder() const { return series_encoder_; }
  Projection& projection() { return projection_; }
  const Projection& projection() const { return projection_; }
  const TextDecoder& text_decoder() const { return *text_decoder_; }
  void set_text_decoder(std::unique_ptr<TextDecoder> decoder);

  Ablation ablation() const { return ablation_; }
  void set_ablation(Ablation a) { ablation_ = a; }
  const std::set<int>& completed_phases() const { return completed_phases_; }
  void mark_phase_completed(int phase) { completed_phases_.insert(phase); }
  void set_completed_phases(std::set<int> phases) { completed_phases_ = std::move(phases); }

  /// Every parameter, prefixed by component name.
  nn::ParameterList parameters() const;
  nn::ParameterList component_parameters(const std::string& component) const;

  /// Copies parameter values from another bundle with identical layout.
  void copy_parameters_from(const ModelBundle& other);

  /// Frames -> stacked snapshot embeddings E^i [T, D_snap].
  Tensor encode_snapshots(const std::vector<Tensor>& frames) const;
  /// E^i -> E^e, or E^i unchanged when the ablation bypasses the series encoder.
  Tensor serialize(const Tensor& snapshots) const;
  /// Frames -> projected embeddings E [T, D_dec].
  Tensor embed(const std::vector<Tensor>& frames) const;

 private:
  ModelConfig config_;
  Vocabulary vocabulary_;
  std::uint64_t seed_;
  Ablation ablation_ = Ablation::full;
  std::set<int> completed_phases_;
  std::unique_ptr<SnapshotEncoder> snapshot_encoder_;
  std::unique_ptr<SnapshotDecoder> snapshot_decoder_;
  SeriesEncoder series_encoder_;
  Projection projection_;
  std::unique_ptr<TextDecoder> text_decoder_;
};

}  // namespace unicorn
