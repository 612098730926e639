#include "itowave/score_net.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "itowave/errors.hpp"
#include "itowave/nn/ops.hpp"

namespace itowave {

using nn::NamedTensor;
using nn::Parameter;
using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;

ScoreNetConfig ScoreNetConfig::full() { return ScoreNetConfig{}; }

ScoreNetConfig ScoreNetConfig::desk() {
  ScoreNetConfig c;
  c.residual_layers = 8;
  c.residual_channels = 32;
  c.skip_channels = 32;
  c.dilation_cycle = 4;
  c.time_embed_dim = 64;
  return c;
}

void ScoreNetConfig::validate(int hop) const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ConfigError(std::string("model.") + name + " must be >= 1");
  };
  positive(residual_layers, "residual_layers");
  positive(residual_channels, "residual_channels");
  positive(skip_channels, "skip_channels");
  positive(dilation_cycle, "dilation_cycle");
  positive(kernel_size, "kernel_size");
  positive(mel_bins, "mel_bins");
  positive(upsample_strides[0], "upsample_strides[0]");
  positive(upsample_strides[1], "upsample_strides[1]");
  positive(time_embed_dim, "time_embed_dim");
  if (kernel_size % 2 == 0) throw ConfigError("model.kernel_size must be odd");
  if (time_embed_dim % 2 != 0) throw ConfigError("model.time_embed_dim must be even");
  if (upsample_strides[0] % 2 != 0 || upsample_strides[1] % 2 != 0) {
    throw ConfigError("model.upsample_strides must be even");
  }
  if (dilation_cycle > 20) throw ConfigError("model.dilation_cycle must be <= 20");
  if (hop_length() != hop) {
    std::ostringstream msg;
    msg << "model.upsample_strides product " << hop_length()
        << " does not equal feature.hop_length " << hop;
    throw ConfigError(msg.str());
  }
  if (!(time_scale > 0.0)) throw ConfigError("model.time_scale must be > 0");
  if (!(mel_scale > 0.0)) throw ConfigError("model.mel_scale must be > 0");
}

std::size_t ScoreNet::add_param(std::string name, Shape shape) {
  params_.emplace_back(std::move(name), Tensor(std::move(shape)));
  return params_.size() - 1;
}

ScoreNet::ScoreNet(const ScoreNetConfig& config, const SdeSpec& sde, std::uint64_t init_seed)
    : config_(config), sde_(sde) {
  config_.validate(config_.hop_length());
  sde_.validate();
  const std::size_t C = config_.residual_channels, S = config_.skip_channels;
  const std::size_t E = config_.time_embed_dim, K = config_.kernel_size;
  const std::size_t M = config_.mel_bins;
  const std::size_t s1 = config_.upsample_strides[0], s2 = config_.upsample_strides[1];

  params_.reserve(14 + 10 * static_cast<std::size_t>(config_.residual_layers));
  in_w_ = add_param("input.weight", {C, 1, 1});
  in_b_ = add_param("input.bias", {C});
  t1_w_ = add_param("time_mlp.0.weight", {E, E});
  t1_b_ = add_param("time_mlp.0.bias", {E});
  t2_w_ = add_param("time_mlp.1.weight", {E, E});
  t2_b_ = add_param("time_mlp.1.bias", {E});
  up1_w_ = add_param("upsample.0.weight", {M, C, 2 * s1});
  up1_b_ = add_param("upsample.0.bias", {C});
  up2_w_ = add_param("upsample.1.weight", {C, C, 2 * s2});
  up2_b_ = add_param("upsample.1.bias", {C});
  for (int i = 0; i < config_.residual_layers; ++i) {
    const std::string pre = "blocks." + std::to_string(i) + ".";
    Block b{};
    b.time_w = add_param(pre + "time_proj.weight", {C, E});
    b.time_b = add_param(pre + "time_proj.bias", {C});
    b.conv_w = add_param(pre + "dilated_conv.weight", {2 * C, C, K});
    b.conv_b = add_param(pre + "dilated_conv.bias", {2 * C});
    b.mel_w = add_param(pre + "mel_proj.weight", {2 * C, C, 1});
    b.mel_b = add_param(pre + "mel_proj.bias", {2 * C});
    b.res_w = add_param(pre + "res_proj.weight", {C, C, 1});
    b.res_b = add_param(pre + "res_proj.bias", {C});
    b.skip_w = add_param(pre + "skip_proj.weight", {S, C, 1});
    b.skip_b = add_param(pre + "skip_proj.bias", {S});
    blocks_.push_back(b);
  }
  out1_w_ = add_param("output.0.weight", {S, S, 1});
  out1_b_ = add_param("output.0.bias", {S});
  out2_w_ = add_param("output.1.weight", {1, S, 1});
  out2_b_ = add_param("output.1.bias", {1});

  // Kaiming-uniform weights (relu gain), zero biases, zero output head.
  RandomNoise rng(init_seed, 0x5eed);
  auto kaiming = [&](std::size_t idx, double fan_in) {
    const double bound = std::sqrt(6.0 / fan_in);
    for (double& v : params_[idx].value.data()) v = rng.uniform(-bound, bound);
  };
  kaiming(in_w_, 1.0);
  kaiming(t1_w_, static_cast<double>(E));
  kaiming(t2_w_, static_cast<double>(E));
  kaiming(up1_w_, static_cast<double>(M * 2));
  kaiming(up2_w_, static_cast<double>(C * 2));
  for (const Block& b : blocks_) {
    kaiming(b.time_w, static_cast<double>(E));
    kaiming(b.conv_w, static_cast<double>(C * K));
    kaiming(b.mel_w, static_cast<double>(C));
    kaiming(b.res_w, static_cast<double>(C));
    kaiming(b.skip_w, static_cast<double>(C));
  }
  kaiming(out1_w_, static_cast<double>(S));
}

std::vector<Parameter*> ScoreNet::parameters() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

std::size_t ScoreNet::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

Parameter& ScoreNet::parameter(const std::string& name) {
  for (Parameter& p : params_) {
    if (p.name == name) return p;
  }
  throw ConfigError("no parameter named '" + name + "'");
}

std::vector<NamedTensor> ScoreNet::state(bool include_optimizer) const {
  std::vector<NamedTensor> out;
  for (const Parameter& p : params_) out.push_back({p.name, p.value});
  if (include_optimizer) {
    for (const Parameter& p : params_) {
      out.push_back({p.name + "#adam_m", p.adam_m});
      out.push_back({p.name + "#adam_v", p.adam_v});
    }
  }
  return out;
}

void ScoreNet::load_state(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const NamedTensor& t : tensors) by_name[t.name] = &t.value;
  auto fetch = [&](const std::string& name, const Shape& shape, bool required) -> const Tensor* {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      if (required) throw FormatError("checkpoint is missing parameter '" + name + "'");
      return nullptr;
    }
    if (it->second->shape() != shape) {
      throw FormatError("checkpoint parameter '" + name + "' has shape " +
                        nn::shape_string(it->second->shape()) + ", model expects " +
                        nn::shape_string(shape));
    }
    return it->second;
  };
  // Validate everything before mutating.
  for (const Parameter& p : params_) fetch(p.name, p.value.shape(), true);
  for (Parameter& p : params_) {
    p.value = *fetch(p.name, p.value.shape(), true);
    if (const Tensor* m = fetch(p.name + "#adam_m", p.value.shape(), false)) p.adam_m = *m;
    if (const Tensor* v = fetch(p.name + "#adam_v", p.value.shape(), false)) p.adam_v = *v;
  }
}

void ScoreNet::check_time(std::span<const double> t) const {
  for (double v : t) {
    if (!(v >= 0.0 && v <= sde_.t_max)) {
      std::ostringstream msg;
      msg << "time embedding: t = " << v << " outside [0, " << sde_.t_max << "]";
      throw DomainError(msg.str());
    }
  }
}

std::vector<double> ScoreNet::sinusoidal_embedding(double t) const {
  check_time(std::span(&t, 1));
  const int half = config_.time_embed_dim / 2;
  std::vector<double> out(config_.time_embed_dim);
  const double s = t * config_.time_scale;
  for (int i = 0; i < half; ++i) {
    // Frequencies geometric from 1 down to 1e-3.
    const double freq = half > 1 ? std::pow(10.0, -3.0 * i / (half - 1)) : 1.0;
    out[2 * i] = std::sin(s * freq);
    out[2 * i + 1] = std::cos(s * freq);
  }
  return out;
}

Var ScoreNet::embed_time(Tape& tape, std::span<const double> t) {
  check_time(t);
  const std::size_t E = config_.time_embed_dim;
  Tensor base({t.size(), E});
  for (std::size_t b = 0; b < t.size(); ++b) {
    const std::vector<double> row = sinusoidal_embedding(t[b]);
    std::copy(row.begin(), row.end(), base.ptr() + b * E);
  }
  Var h = nn::silu(nn::linear(tape.constant(std::move(base)), p(tape, t1_w_), p(tape, t1_b_)));
  return nn::silu(nn::linear(h, p(tape, t2_w_), p(tape, t2_b_)));
}

Var ScoreNet::upsample_mel(Tape& tape, Var mel) {
  // Copy: recording ops may reallocate the tape's node storage.
  const nn::Shape mel_shape = mel.value().shape();
  if (mel_shape.size() != 3 || mel_shape[1] != static_cast<std::size_t>(config_.mel_bins)) {
    throw ShapeError("upsample_mel: expected mel [batch, " + std::to_string(config_.mel_bins) +
                     ", frames], got " + nn::shape_string(mel_shape));
  }
  const std::size_t s1 = config_.upsample_strides[0], s2 = config_.upsample_strides[1];
  Var x = nn::scale(mel, 1.0 / config_.mel_scale);
  Tensor offset(mel_shape, -config_.mel_offset / config_.mel_scale);
  x = nn::add(x, tape.constant(std::move(offset)));
  x = nn::leaky_relu(nn::conv_transpose1d(x, p(tape, up1_w_), p(tape, up1_b_), s1, s1 / 2));
  x = nn::leaky_relu(nn::conv_transpose1d(x, p(tape, up2_w_), p(tape, up2_b_), s2, s2 / 2));
  return x;
}

Var ScoreNet::mel_condition(Tape& tape, int block, Var mel_up, std::size_t length) {
  const Block& b = blocks_.at(block);
  const std::size_t have = mel_up.value().dim(2);
  if (have < length) {
    throw ShapeError("upsampled mel covers " + std::to_string(have) +
                     " samples but the waveform has " + std::to_string(length));
  }
  Var cropped = have == length ? mel_up : nn::crop_length(mel_up, 0, length);
  return nn::conv1d(cropped, p(tape, b.mel_w), p(tape, b.mel_b), 1, 0);
}

ScoreNet::BlockOutput ScoreNet::residual_block(Tape& tape, int block, Var state, Var time_vec,
                                               Var mel_cond) {
  const Block& b = blocks_.at(block);
  const std::size_t C = config_.residual_channels;
  const std::size_t dil = config_.dilation(block);
  const std::size_t pad = dil * (config_.kernel_size - 1) / 2;
  Var tproj = nn::linear(time_vec, p(tape, b.time_w), p(tape, b.time_b));
  Var y = nn::add_channel_vector(state, tproj);
  Var z = nn::conv1d(y, p(tape, b.conv_w), p(tape, b.conv_b), dil, pad);
  if (z.shape() != mel_cond.shape()) {
    throw ShapeError("residual_block: mel condition " + nn::shape_string(mel_cond.shape()) +
                     " does not match gate input " + nn::shape_string(z.shape()));
  }
  z = nn::add(z, mel_cond);
  Var gate = nn::mul(nn::tanh(nn::slice_channels(z, 0, C)),
                     nn::sigmoid(nn::slice_channels(z, C, C)));
  Var res = nn::conv1d(gate, p(tape, b.res_w), p(tape, b.res_b), 1, 0);
  Var skip = nn::conv1d(gate, p(tape, b.skip_w), p(tape, b.skip_b), 1, 0);
  Var next = nn::scale(nn::add(state, res), 1.0 / std::sqrt(2.0));
  return {next, skip};
}

Var ScoreNet::head(Tape& tape, Var x_t, std::span<const double> t, Var time_vec,
                   const std::vector<Var>& mel_conds) {
  const Tensor& xv = x_t.value();
  const std::size_t batch = xv.dim(0), len = xv.dim(1);
  Var x = nn::reshape(x_t, {batch, 1, len});
  Var state = nn::relu(nn::conv1d(x, p(tape, in_w_), p(tape, in_b_), 1, 0));
  std::optional<Var> skip_sum;
  for (int i = 0; i < config_.residual_layers; ++i) {
    BlockOutput out = residual_block(tape, i, state, time_vec, mel_conds[i]);
    state = out.next_state;
    skip_sum = skip_sum ? nn::add(*skip_sum, out.skip) : out.skip;
  }
  Var h = nn::scale(*skip_sum, 1.0 / std::sqrt(static_cast<double>(config_.residual_layers)));
  h = nn::relu(nn::conv1d(h, p(tape, out1_w_), p(tape, out1_b_), 1, 0));
  h = nn::conv1d(h, p(tape, out2_w_), p(tape, out2_b_), 1, 0);
  h = nn::reshape(h, {batch, len});
  if (config_.output_scaling == OutputScaling::kInverseStd) {
    std::vector<double> inv(batch);
    for (std::size_t b = 0; b < batch; ++b) inv[b] = 1.0 / std::sqrt(clamped_variance(sde_, t[b]));
    h = nn::scale_batch(h, inv);
  }
  return h;
}

Var ScoreNet::forward(Tape& tape, Var x_t, std::span<const double> t, Var mel) {
  const Tensor& xv = x_t.value();
  if (xv.rank() != 2) {
    throw ShapeError("score_net.forward: x_t must be [batch, samples], got " +
                     nn::shape_string(xv.shape()));
  }
  const std::size_t batch = xv.dim(0), len = xv.dim(1);
  if (t.size() != batch) {
    throw ShapeError("score_net.forward: " + std::to_string(t.size()) + " times for batch " +
                     std::to_string(batch));
  }
  if (mel.value().rank() != 3 || mel.value().dim(0) != batch) {
    throw ShapeError("score_net.forward: mel " + nn::shape_string(mel.value().shape()) +
                     " does not match batch " + std::to_string(batch));
  }
  Var time_vec = embed_time(tape, t);
  Var mel_up = upsample_mel(tape, mel);
  std::vector<Var> conds;
  for (int i = 0; i < config_.residual_layers; ++i) {
    conds.push_back(mel_condition(tape, i, mel_up, len));
  }
  return head(tape, x_t, t, time_vec, conds);
}

Tensor ScoreNet::score(const Tensor& x_t, std::span<const double> t, const Tensor& mel) {
  Tape tape(nn::GradMode::kDisabled);
  return forward(tape, tape.constant(x_t), t, tape.constant(mel)).value();
}

class ScoreNet::Bound final : public ScoreModel {
 public:
  Bound(ScoreNet& net, const Tensor& mel) : net_(net) {
    if (mel.rank() != 3 || mel.dim(0) != 1) {
      throw ShapeError("bind: mel must be [1, mel_bins, frames], got " +
                       nn::shape_string(mel.shape()));
    }
    Tape tape(nn::GradMode::kDisabled);
    Var up = net_.upsample_mel(tape, tape.constant(mel));
    length_ = up.value().dim(2);
    for (int i = 0; i < net_.config_.residual_layers; ++i) {
      conds_.push_back(net_.mel_condition(tape, i, up, length_).value());
    }
  }

  Tensor score(const Tensor& x, std::span<const double> t) const override {
    if (x.rank() != 2 || x.dim(1) > length_) {
      throw ShapeError("bound score model: state " + nn::shape_string(x.shape()) +
                       " exceeds conditioned length " + std::to_string(length_));
    }
    const std::size_t batch = x.dim(0), len = x.dim(1);
    Tape tape(nn::GradMode::kDisabled);
    std::vector<Var> conds;
    for (const Tensor& c : conds_) {
      const std::size_t ch = c.dim(1);
      Tensor tiled({batch, ch, len});
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t k = 0; k < ch; ++k)
          std::copy_n(c.ptr() + k * length_, len, tiled.ptr() + (b * ch + k) * len);
      conds.push_back(tape.constant(std::move(tiled)));
    }
    Var time_vec = net_.embed_time(tape, t);
    return net_.head(tape, tape.constant(x), t, time_vec, conds).value();
  }

 private:
  ScoreNet& net_;
  std::size_t length_ = 0;
  std::vector<Tensor> conds_;
};

std::unique_ptr<ScoreModel> ScoreNet::bind(const Tensor& mel) {
  return std::make_unique<Bound>(*this, mel);
}

std::pair<long, long> ScoreNet::frame_receptive_field(long frame) const {
  const long s1 = config_.upsample_strides[0], s2 = config_.upsample_strides[1];
  // Transposed conv with kernel 2s, padding s/2: input i reaches [i s - s/2, i s + 3s/2).
  const long lo1 = frame * s1 - s1 / 2, hi1 = frame * s1 + 3 * s1 / 2;
  const long lo2 = lo1 * s2 - s2 / 2, hi2 = (hi1 - 1) * s2 + 3 * s2 / 2;
  long radius = 0;
  for (int i = 0; i < config_.residual_layers; ++i) {
    radius += static_cast<long>(config_.dilation(i)) * (config_.kernel_size - 1) / 2;
  }
  return {lo2 - radius, hi2 + radius};
}

}  // namespace itowave
