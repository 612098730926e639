#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "itowave/nn/autograd.hpp"
#include "itowave/nn/checkpoint.hpp"
#include "itowave/score_model.hpp"
#include "itowave/sde.hpp"

namespace itowave {

enum class OutputScaling { kNone, kInverseStd };

struct ScoreNetConfig {
  int residual_layers = 30;
  int residual_channels = 64;
  int skip_channels = 64;
  int dilation_cycle = 10;
  int kernel_size = 3;
  int mel_bins = 80;
  std::array<int, 2> upsample_strides{16, 16};
  int time_embed_dim = 128;
  // Sinusoid argument is t * time_scale * freq, freq in [1e-3, 1].
  double time_scale = 50.0;
  // Log-mel is fed as (m - mel_offset) / mel_scale.
  double mel_offset = -5.0;
  double mel_scale = 5.0;
  OutputScaling output_scaling = OutputScaling::kInverseStd;

  /// 30 layers of 64 channels, dilations 1..512 repeating.
  static ScoreNetConfig full();
  /// 8 layers of 32 channels, dilation cycle 4; sized for CI.
  static ScoreNetConfig desk();

  int hop_length() const { return upsample_strides[0] * upsample_strides[1]; }
  int dilation(int block) const { return 1 << (block % dilation_cycle); }
  /// Throws ConfigError; `hop_length` is the feature hop the strides must match.
  void validate(int hop_length) const;

  bool operator==(const ScoreNetConfig&) const = default;
};

/// The conditional score estimator S_theta(x(t), t, m): 1x1 input conv,
/// sinusoidal time embedding + 2-layer MLP, two transposed-conv mel upsamplers,
/// a stack of gated dilated residual blocks with state/skip outputs, and a
/// two-conv head over the summed skips.
class ScoreNet {
 public:
  ScoreNet(const ScoreNetConfig& config, const SdeSpec& sde, std::uint64_t init_seed = 0);

  ScoreNet(const ScoreNet&) = delete;
  ScoreNet& operator=(const ScoreNet&) = delete;
  ScoreNet(ScoreNet&&) = default;

  const ScoreNetConfig& config() const { return config_; }
  const SdeSpec& sde() const { return sde_; }

  std::vector<nn::Parameter*> parameters();
  std::size_t parameter_count() const;
  nn::Parameter& parameter(const std::string& name);

  /// Parameter values (and optionally Adam moments) as named tensors.
  std::vector<nn::NamedTensor> state(bool include_optimizer = false) const;
  /// Loads values by name; every network parameter must be present with a
  /// matching shape. Adam moments are restored when present.
  void load_state(const std::vector<nn::NamedTensor>& tensors);

  /// Interleaved [sin(w0 s), cos(w0 s), sin(w1 s), ...] with s = t * time_scale.
  std::vector<double> sinusoidal_embedding(double t) const;
  /// [B, time_embed_dim] after the MLP.
  nn::Var embed_time(nn::Tape& tape, std::span<const double> t);
  /// mel [B, mel_bins, F] -> [B, residual_channels, F * hop].
  nn::Var upsample_mel(nn::Tape& tape, nn::Var mel);
  /// Per-block 1x1 projection of the upsampled mel, cropped to `length`.
  nn::Var mel_condition(nn::Tape& tape, int block, nn::Var mel_up, std::size_t length);

  struct BlockOutput {
    nn::Var next_state;
    nn::Var skip;
  };
  /// time_vec is the embedded time [B, time_embed_dim]; mel_cond comes from
  /// mel_condition() for the same block.
  BlockOutput residual_block(nn::Tape& tape, int block, nn::Var state, nn::Var time_vec,
                             nn::Var mel_cond);

  /// x_t [B, L], t one per row, mel [B, mel_bins, F] with F * hop >= L.
  /// Returns a score estimate [B, L].
  nn::Var forward(nn::Tape& tape, nn::Var x_t, std::span<const double> t, nn::Var mel);

  /// Gradient-free forward.
  nn::Tensor score(const nn::Tensor& x_t, std::span<const double> t, const nn::Tensor& mel);

  /// Score model bound to one mel [1, mel_bins, F] with the upsampled
  /// conditioning cached; every batch row shares the condition.
  std::unique_ptr<ScoreModel> bind(const nn::Tensor& mel);

  /// Output sample range influenced by mel frame `frame` (half-open), before
  /// clipping to the signal.
  std::pair<long, long> frame_receptive_field(long frame) const;

 private:
  struct Block {
    std::size_t time_w, time_b, conv_w, conv_b, mel_w, mel_b, res_w, res_b, skip_w, skip_b;
  };

  std::size_t add_param(std::string name, nn::Shape shape);
  nn::Var p(nn::Tape& tape, std::size_t idx) { return tape.parameter(params_[idx]); }
  void check_time(std::span<const double> t) const;
  nn::Var head(nn::Tape& tape, nn::Var x_t, std::span<const double> t, nn::Var time_vec,
               const std::vector<nn::Var>& mel_conds);

  class Bound;

  ScoreNetConfig config_;
  SdeSpec sde_;
  std::vector<nn::Parameter> params_;
  std::size_t in_w_, in_b_, t1_w_, t1_b_, t2_w_, t2_b_, up1_w_, up1_b_, up2_w_, up2_b_;
  std::size_t out1_w_, out1_b_, out2_w_, out2_b_;
  std::vector<Block> blocks_;
};

}  // namespace itowave
