#pragma once

#include <torch/torch.h>

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "fusionfm/errors.hpp"

// Time-conditioned U-Net parameterising the vector field v(t, x_t; x0A, x0B).
namespace fusionfm::net {

struct NetSpec {
  int base_channels = 64;
  std::vector<int> channel_multipliers = {1, 1, 1, 1};  // residual blocks per downsampling stage
  int down_stages = 4;
  int up_stages = 4;
  int image_channels = 1;    // channels of x_t (and of each source)
  int time_embed_dim = 512;
  int groups = 8;

  [[nodiscard]] int in_channels() const { return 3 * image_channels; }
  [[nodiscard]] int out_channels() const { return image_channels; }
  [[nodiscard]] int spatial_multiple() const { return 1 << down_stages; }

  // Full-scale default.
  static NetSpec full() { return {}; }
  // Desk-scale profile used for training at 64x64.
  static NetSpec desk() {
    NetSpec s;
    s.base_channels = 32;
    s.time_embed_dim = 256;
    return s;
  }
  // Tiny network for gradient checks.
  static NetSpec reduced() {
    NetSpec s;
    s.base_channels = 8;
    s.channel_multipliers = {1, 1};
    s.down_stages = 2;
    s.up_stages = 2;
    s.time_embed_dim = 16;
    s.groups = 4;
    return s;
  }

  void validate() const {
    if (base_channels <= 0 || time_embed_dim <= 0 || time_embed_dim % 2 != 0) {
      throw ConfigError("NetSpec: base_channels must be > 0 and time_embed_dim even and > 0");
    }
    if (down_stages < 1 || up_stages != down_stages) {
      throw ConfigError("NetSpec: up_stages must equal down_stages (>= 1)");
    }
    if (static_cast<int>(channel_multipliers.size()) != down_stages) {
      throw ConfigError("NetSpec: channel_multipliers needs one entry per down stage");
    }
    for (int m : channel_multipliers) {
      if (m < 1) throw ConfigError("NetSpec: every stage needs at least one residual block");
    }
    if (groups < 1 || base_channels % groups != 0) {
      throw ConfigError("NetSpec: groups must divide base_channels");
    }
    if (image_channels != 1 && image_channels != 3) throw ConfigError("NetSpec: image_channels must be 1 or 3");
  }

  bool operator==(const NetSpec&) const = default;
};

inline void to_json(nlohmann::json& j, const NetSpec& s) {
  j = nlohmann::json{{"base_channels", s.base_channels},
                     {"channel_multipliers", s.channel_multipliers},
                     {"down_stages", s.down_stages},
                     {"up_stages", s.up_stages},
                     {"image_channels", s.image_channels},
                     {"time_embed_dim", s.time_embed_dim},
                     {"groups", s.groups}};
}

inline void from_json(const nlohmann::json& j, NetSpec& s) {
  s.base_channels = j.at("base_channels").get<int>();
  s.channel_multipliers = j.at("channel_multipliers").get<std::vector<int>>();
  s.down_stages = j.at("down_stages").get<int>();
  s.up_stages = j.at("up_stages").get<int>();
  s.image_channels = j.at("image_channels").get<int>();
  s.time_embed_dim = j.at("time_embed_dim").get<int>();
  s.groups = j.at("groups").get<int>();
  s.validate();
}

// Sinusoidal features of t (scaled to the conventional 0..1000 step range)
// with log-spaced frequencies; t has shape [N].
[[nodiscard]] inline torch::Tensor sinusoidal_embedding(const torch::Tensor& t, int dim) {
  const int half = dim / 2;
  auto opts = torch::TensorOptions().dtype(t.scalar_type());
  auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, opts) / half);
  auto args = (t.reshape({-1, 1}) * 1000.0) * freqs.reshape({1, -1});
  return torch::cat({torch::sin(args), torch::cos(args)}, 1);
}

struct ResBlockImpl : torch::nn::Module {
  ResBlockImpl(int in_ch, int out_ch, int temb_dim, int groups) {
    norm1 = register_module("norm1", torch::nn::GroupNorm(torch::nn::GroupNormOptions(groups, in_ch)));
    conv1 = register_module("conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 3).padding(1)));
    temb_proj = register_module("temb_proj", torch::nn::Linear(temb_dim, out_ch));
    norm2 = register_module("norm2", torch::nn::GroupNorm(torch::nn::GroupNormOptions(groups, out_ch)));
    conv2 = register_module("conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(out_ch, out_ch, 3).padding(1)));
    if (in_ch != out_ch) {
      skip = register_module("skip", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 1)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb) {
    auto h = conv1(torch::silu(norm1(x)));
    h = h + temb_proj(torch::silu(temb)).unsqueeze(-1).unsqueeze(-1);
    h = conv2(torch::silu(norm2(h)));
    return (skip ? skip(x) : x) + h;
  }

  torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
  torch::nn::Linear temb_proj{nullptr};
};
TORCH_MODULE(ResBlock);

// Encoder: one level per resolution (down_stages + 1 levels), each with the
// stage's residual blocks; strided-conv downsampling between levels. Every
// block and downsample output is kept as a skip. Decoder: blocks+1 residual
// blocks per level, each consuming one skip by concatenation; nearest
// upsampling followed by a conv between levels. Output conv is zero-initialised.
struct VectorFieldNetImpl : torch::nn::Module {
  explicit VectorFieldNetImpl(NetSpec spec_in) : spec(std::move(spec_in)) {
    spec.validate();
    const int c = spec.base_channels;
    const int td = spec.time_embed_dim;
    time_mlp1 = register_module("time_mlp1", torch::nn::Linear(td, td));
    time_mlp2 = register_module("time_mlp2", torch::nn::Linear(td, td));
    in_conv = register_module("in_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(spec.in_channels(), c, 3).padding(1)));

    down_blocks = register_module("down_blocks", torch::nn::ModuleList());
    downsamplers = register_module("downsamplers", torch::nn::ModuleList());
    for (int level = 0; level <= spec.down_stages; ++level) {
      for (int b = 0; b < blocks_at(level); ++b) down_blocks->push_back(ResBlock(c, c, td, spec.groups));
      if (level < spec.down_stages) {
        downsamplers->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3).stride(2).padding(1)));
      }
    }
    mid_blocks = register_module("mid_blocks", torch::nn::ModuleList());
    mid_blocks->push_back(ResBlock(c, c, td, spec.groups));
    mid_blocks->push_back(ResBlock(c, c, td, spec.groups));

    up_blocks = register_module("up_blocks", torch::nn::ModuleList());
    upsamplers = register_module("upsamplers", torch::nn::ModuleList());
    for (int level = spec.down_stages; level >= 0; --level) {
      for (int b = 0; b < blocks_at(level) + 1; ++b) up_blocks->push_back(ResBlock(2 * c, c, td, spec.groups));
      if (level > 0) upsamplers->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(c, c, 3).padding(1)));
    }
    out_norm = register_module("out_norm", torch::nn::GroupNorm(torch::nn::GroupNormOptions(spec.groups, c)));
    out_conv = register_module("out_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(c, spec.out_channels(), 3).padding(1)));
    torch::NoGradGuard guard;
    out_conv->weight.zero_();
    out_conv->bias.zero_();
  }

  // The deepest level reuses the last stage's block count.
  [[nodiscard]] int blocks_at(int level) const {
    return spec.channel_multipliers[std::min<int>(level, spec.down_stages - 1)];
  }

  torch::Tensor time_embed(const torch::Tensor& t) {
    auto e = sinusoidal_embedding(t, spec.time_embed_dim);
    return time_mlp2(torch::silu(time_mlp1(e)));
  }

  // t: [N] (or scalar, broadcast); xt, x0a, x0b: [N, C, H, W].
  torch::Tensor forward(torch::Tensor t, const torch::Tensor& xt, const torch::Tensor& x0a,
                        const torch::Tensor& x0b) {
    if (xt.dim() != 4 || !xt.sizes().equals(x0a.sizes()) || !xt.sizes().equals(x0b.sizes())) {
      throw DimensionError("vector field: x_t, x0A and x0B must be [N,C,H,W] tensors of equal shape");
    }
    if (xt.size(1) != spec.image_channels) {
      throw DimensionError("vector field: expected " + std::to_string(spec.image_channels) +
                           " image channels, got " + std::to_string(xt.size(1)));
    }
    const int mult = spec.spatial_multiple();
    if (xt.size(2) % mult != 0 || xt.size(3) % mult != 0) {
      throw DimensionError("vector field: spatial size " + std::to_string(xt.size(2)) + "x" +
                           std::to_string(xt.size(3)) + " must be a multiple of " + std::to_string(mult));
    }
    if (t.dim() == 0) t = t.expand({xt.size(0)});
    t = t.to(xt.scalar_type());
    const auto temb = time_embed(t);

    std::vector<torch::Tensor> skips;
    auto h = in_conv(torch::cat({xt, x0a, x0b}, 1));
    skips.push_back(h);
    std::size_t bi = 0;
    for (int level = 0; level <= spec.down_stages; ++level) {
      for (int b = 0; b < blocks_at(level); ++b) {
        h = down_blocks[bi++]->as<ResBlock>()->forward(h, temb);
        skips.push_back(h);
      }
      if (level < spec.down_stages) {
        h = downsamplers[static_cast<std::size_t>(level)]->as<torch::nn::Conv2d>()->forward(h);
        skips.push_back(h);
      }
    }
    for (const auto& m : *mid_blocks) h = m->as<ResBlock>()->forward(h, temb);

    bi = 0;
    std::size_t ui = 0;
    for (int level = spec.down_stages; level >= 0; --level) {
      for (int b = 0; b < blocks_at(level) + 1; ++b) {
        h = torch::cat({h, skips.back()}, 1);
        skips.pop_back();
        h = up_blocks[bi++]->as<ResBlock>()->forward(h, temb);
      }
      if (level > 0) {
        h = torch::upsample_nearest2d(h, std::vector<int64_t>{h.size(2) * 2, h.size(3) * 2});
        h = upsamplers[ui++]->as<torch::nn::Conv2d>()->forward(h);
      }
    }
    return out_conv(torch::silu(out_norm(h)));
  }

  NetSpec spec;
  torch::nn::Linear time_mlp1{nullptr}, time_mlp2{nullptr};
  torch::nn::Conv2d in_conv{nullptr}, out_conv{nullptr};
  torch::nn::ModuleList down_blocks{nullptr}, downsamplers{nullptr}, mid_blocks{nullptr};
  torch::nn::ModuleList up_blocks{nullptr}, upsamplers{nullptr};
  torch::nn::GroupNorm out_norm{nullptr};
};
TORCH_MODULE(VectorFieldNet);

[[nodiscard]] inline std::int64_t parameter_count(const torch::nn::Module& m) {
  std::int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

// Constructs the network with initialisation drawn from `seed`.
[[nodiscard]] inline VectorFieldNet make_net(const NetSpec& spec, std::uint64_t seed,
                                             torch::Dtype dtype = torch::kFloat32) {
  torch::manual_seed(seed);
  VectorFieldNet net(spec);
  net->to(dtype);
  return net;
}

}  // namespace fusionfm::net
