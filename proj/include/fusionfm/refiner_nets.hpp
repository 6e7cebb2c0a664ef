#pragma once

#include <torch/torch.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "fusionfm/checkpoint.hpp"
#include "fusionfm/errors.hpp"
#include "fusionfm/image.hpp"
#include "fusionfm/metrics.hpp"
#include "fusionfm/refiner_ops.hpp"
#include "fusionfm/tensor_bridge.hpp"

// Learned parts of the refiner: the decomposition unit (two autoencoders
// splitting a fused image into per-modality parts) and the fusion integrator
// (dual-branch encoder-decoder re-fusing the refined parts), plus the fusion
// losses they are trained with.
namespace fusionfm::refiner {

struct AutoencoderSpec {
  std::vector<int> widths = {16, 32, 32};
  int downsamples = 1;  // the first `downsamples` layers after the stem use stride 2
  int channels = 1;

  void validate() const {
    if (widths.empty()) throw ConfigError("AutoencoderSpec: widths must not be empty");
    if (downsamples < 0 || downsamples >= static_cast<int>(widths.size())) {
      throw ConfigError("AutoencoderSpec: downsamples must be < number of layers");
    }
    if (channels != 1 && channels != 3) throw ConfigError("AutoencoderSpec: channels must be 1 or 3");
  }
  bool operator==(const AutoencoderSpec&) const = default;
};

struct IntegratorSpec {
  int width = 32;
  int encoder_layers = 3;
  int decoder_layers = 3;
  int channels = 1;

  void validate() const {
    if (width < 1 || encoder_layers < 1 || decoder_layers < 1) {
      throw ConfigError("IntegratorSpec: width and layer counts must be positive");
    }
    if (channels != 1 && channels != 3) throw ConfigError("IntegratorSpec: channels must be 1 or 3");
  }
  bool operator==(const IntegratorSpec&) const = default;
};

inline void to_json(nlohmann::json& j, const AutoencoderSpec& s) {
  j = {{"widths", s.widths}, {"downsamples", s.downsamples}, {"channels", s.channels}};
}
inline void from_json(const nlohmann::json& j, AutoencoderSpec& s) {
  s.widths = j.at("widths").get<std::vector<int>>();
  s.downsamples = j.at("downsamples").get<int>();
  s.channels = j.at("channels").get<int>();
  s.validate();
}
inline void to_json(nlohmann::json& j, const IntegratorSpec& s) {
  j = {{"width", s.width}, {"encoder_layers", s.encoder_layers}, {"decoder_layers", s.decoder_layers},
       {"channels", s.channels}};
}
inline void from_json(const nlohmann::json& j, IntegratorSpec& s) {
  s.width = j.at("width").get<int>();
  s.encoder_layers = j.at("encoder_layers").get<int>();
  s.decoder_layers = j.at("decoder_layers").get<int>();
  s.channels = j.at("channels").get<int>();
  s.validate();
}

inline torch::nn::Conv2d conv3(int in, int out, int stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

// Conv encoder, nearest-upsampling mirrored decoder, sigmoid output.
struct AutoencoderImpl : torch::nn::Module {
  explicit AutoencoderImpl(AutoencoderSpec s) : spec(std::move(s)) {
    spec.validate();
    encoder = register_module("encoder", torch::nn::ModuleList());
    decoder = register_module("decoder", torch::nn::ModuleList());
    int in = spec.channels;
    for (std::size_t i = 0; i < spec.widths.size(); ++i) {
      const bool down = i >= 1 && static_cast<int>(i) <= spec.downsamples;
      encoder->push_back(conv3(in, spec.widths[i], down ? 2 : 1));
      in = spec.widths[i];
    }
    for (std::size_t i = spec.widths.size(); i-- > 1;) {
      decoder->push_back(conv3(in, spec.widths[i - 1]));
      in = spec.widths[i - 1];
    }
    decoder->push_back(conv3(in, spec.channels));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto h = x;
    for (const auto& m : *encoder) h = torch::relu(m->as<torch::nn::Conv2d>()->forward(h));
    const std::size_t n_dec = decoder->size();
    for (std::size_t i = 0; i < n_dec; ++i) {
      // Restore one resolution level before each of the first `downsamples` decoder convs.
      if (static_cast<int>(i) < spec.downsamples) {
        const int remaining = spec.downsamples - static_cast<int>(i) - 1;
        const auto th = (x.size(2) + (1 << remaining) - 1) >> remaining;
        const auto tw = (x.size(3) + (1 << remaining) - 1) >> remaining;
        h = torch::upsample_nearest2d(h, std::vector<int64_t>{th, tw});
      }
      h = decoder[i]->as<torch::nn::Conv2d>()->forward(h);
      if (i + 1 < n_dec) h = torch::relu(h);
    }
    return torch::sigmoid(h);
  }

  AutoencoderSpec spec;
  torch::nn::ModuleList encoder{nullptr}, decoder{nullptr};
};
TORCH_MODULE(Autoencoder);

struct DecompositionUnitImpl : torch::nn::Module {
  explicit DecompositionUnitImpl(const AutoencoderSpec& s) : spec(s) {
    branch_a = register_module("branch_a", Autoencoder(s));
    branch_b = register_module("branch_b", Autoencoder(s));
    trained = register_buffer("trained", torch::zeros({1}));
  }

  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& fused) {
    return {branch_a->forward(fused), branch_b->forward(fused)};
  }

  [[nodiscard]] bool is_trained() const { return trained.item<float>() != 0.0f; }
  void mark_trained() {
    torch::NoGradGuard g;
    trained.fill_(1.0);
  }

  AutoencoderSpec spec;
  Autoencoder branch_a{nullptr}, branch_b{nullptr};
  torch::Tensor trained;
};
TORCH_MODULE(DecompositionUnit);

// Two conv encoders, channel concat, conv decoder predicting a residual on the
// mean of its inputs; the last conv starts at zero. Output clamped to [0,1].
struct FusionIntegratorImpl : torch::nn::Module {
  explicit FusionIntegratorImpl(IntegratorSpec s) : spec(std::move(s)) {
    spec.validate();
    enc_a = register_module("enc_a", torch::nn::ModuleList());
    enc_b = register_module("enc_b", torch::nn::ModuleList());
    dec = register_module("dec", torch::nn::ModuleList());
    for (int i = 0; i < spec.encoder_layers; ++i) {
      const int in = i == 0 ? spec.channels : spec.width;
      enc_a->push_back(conv3(in, spec.width));
      enc_b->push_back(conv3(in, spec.width));
    }
    for (int i = 0; i < spec.decoder_layers; ++i) {
      const int in = i == 0 ? 2 * spec.width : spec.width;
      const int out = i + 1 == spec.decoder_layers ? spec.channels : spec.width;
      dec->push_back(conv3(in, out));
    }
    torch::NoGradGuard g;
    auto last = dec[static_cast<std::size_t>(spec.decoder_layers - 1)]->as<torch::nn::Conv2d>();
    last->weight.zero_();
    last->bias.zero_();
    trained = register_buffer("trained", torch::zeros({1}));
  }

  torch::Tensor forward(const torch::Tensor& a, const torch::Tensor& b) {
    if (!a.sizes().equals(b.sizes())) throw DimensionError("fusion integrator: input shapes differ");
    auto ha = a, hb = b;
    for (std::size_t i = 0; i < enc_a->size(); ++i) {
      ha = torch::relu(enc_a[i]->as<torch::nn::Conv2d>()->forward(ha));
      hb = torch::relu(enc_b[i]->as<torch::nn::Conv2d>()->forward(hb));
    }
    auto h = torch::cat({ha, hb}, 1);
    for (std::size_t i = 0; i < dec->size(); ++i) {
      h = dec[i]->as<torch::nn::Conv2d>()->forward(h);
      if (i + 1 < dec->size()) h = torch::relu(h);
    }
    return ((a + b) / 2.0 + h).clamp(0.0, 1.0);
  }

  [[nodiscard]] bool is_trained() const { return trained.item<float>() != 0.0f; }
  void mark_trained() {
    torch::NoGradGuard g;
    trained.fill_(1.0);
  }

  IntegratorSpec spec;
  torch::nn::ModuleList enc_a{nullptr}, enc_b{nullptr}, dec{nullptr};
  torch::Tensor trained;
};
TORCH_MODULE(FusionIntegrator);

// ---- losses -----------------------------------------------------------------

// Per-image mean SSIM over the valid region, Gaussian 11x11 window, unit range.
[[nodiscard]] inline torch::Tensor ssim_batch(const torch::Tensor& x, const torch::Tensor& y) {
  const int c = static_cast<int>(x.size(1));
  const Kernel g = Kernel::gaussian(metrics::kSsimWindow, metrics::kSsimSigma);
  auto w = torch::empty({metrics::kSsimWindow, metrics::kSsimWindow}, torch::kFloat64);
  std::copy(g.weights().begin(), g.weights().end(), w.data_ptr<double>());
  w = w.to(x.scalar_type()).reshape({1, 1, metrics::kSsimWindow, metrics::kSsimWindow}).repeat({c, 1, 1, 1});
  auto blur = [&](const torch::Tensor& t) {
    return torch::nn::functional::conv2d(t, w, torch::nn::functional::Conv2dFuncOptions().groups(c));
  };
  const double c1 = std::pow(metrics::kSsimK1, 2), c2 = std::pow(metrics::kSsimK2, 2);
  auto mx = blur(x);
  auto my = blur(y);
  auto sxx = blur(x * x) - mx * mx;
  auto syy = blur(y * y) - my * my;
  auto sxy = blur(x * y) - mx * my;
  auto map = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
  return map.mean({1, 2, 3});
}

// Sobel magnitude per channel with reflect-101 borders.
[[nodiscard]] inline torch::Tensor sobel_magnitude(const torch::Tensor& x, double eps = 1e-12) {
  const int c = static_cast<int>(x.size(1));
  auto opts = x.options();
  auto kx = torch::tensor({-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0}, opts).reshape({1, 1, 3, 3});
  auto ky = kx.transpose(2, 3).contiguous();
  auto padded = torch::nn::functional::pad(x, torch::nn::functional::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReflect));
  auto gx = torch::nn::functional::conv2d(padded, kx.repeat({c, 1, 1, 1}), torch::nn::functional::Conv2dFuncOptions().groups(c));
  auto gy = torch::nn::functional::conv2d(padded, ky.repeat({c, 1, 1, 1}), torch::nn::functional::Conv2dFuncOptions().groups(c));
  return torch::sqrt(gx * gx + gy * gy + eps);
}

struct FusionLossWeights {
  double ssim = 1.0;
  double texture = 1.0;
  double intensity = 1.0;
  double gamma = 1.0;  // pseudo-label consistency
};

// 1 - (ssim(F,A) + ssim(F,B))/2 + |grad F - max(grad A, grad B)| + |F - max(A,B)|
[[nodiscard]] inline torch::Tensor fusion_loss(const torch::Tensor& f, const torch::Tensor& a, const torch::Tensor& b,
                                               const FusionLossWeights& w = {}) {
  auto l_ssim = 1.0 - (ssim_batch(f, a) + ssim_batch(f, b)).mean() / 2.0;
  auto l_tex = (sobel_magnitude(f) - torch::max(sobel_magnitude(a), sobel_magnitude(b))).abs().mean();
  auto l_int = (f - torch::max(a, b)).abs().mean();
  return w.ssim * l_ssim + w.texture * l_tex + w.intensity * l_int;
}

[[nodiscard]] inline torch::Tensor hybrid_loss(const torch::Tensor& f, const torch::Tensor& a, const torch::Tensor& b,
                                               const torch::Tensor& pseudo, const FusionLossWeights& w = {}) {
  return fusion_loss(f, a, b, w) + w.gamma * (f - pseudo).abs().mean();
}

// ---- the assembled refiner --------------------------------------------------

struct DecomposedPair {
  Image part_a;
  Image part_b;
};

struct Refiner {
  AutoencoderSpec du_spec;
  IntegratorSpec fi_spec;
  RefinerParams params;
  DecompositionUnit du{nullptr};
  FusionIntegrator fi{nullptr};
  torch::Tensor alpha_a;
  torch::Tensor alpha_b;

  Refiner(AutoencoderSpec du_s, IntegratorSpec fi_s, RefinerParams p, std::uint64_t seed)
      : du_spec(std::move(du_s)), fi_spec(std::move(fi_s)), params(p) {
    torch::manual_seed(seed);
    du = DecompositionUnit(du_spec);
    fi = FusionIntegrator(fi_spec);
    alpha_a = torch::full({1}, p.alpha_a, torch::kFloat32).set_requires_grad(true);
    alpha_b = torch::full({1}, p.alpha_b, torch::kFloat32).set_requires_grad(true);
  }

  [[nodiscard]] RefinerParams current_params() const {
    RefinerParams p = params;
    p.alpha_a = alpha_a.item<double>();
    p.alpha_b = alpha_b.item<double>();
    return p;
  }
};

[[nodiscard]] inline DecomposedPair decompose(const Image& fused, DecompositionUnit& du) {
  if (!du->is_trained()) throw StateError("decompose: the decomposition unit has not been trained");
  torch::NoGradGuard g;
  du->eval();
  auto [pa, pb] = du->forward(to_tensor(fused).unsqueeze(0));
  return {to_image(pa), to_image(pb)};
}

[[nodiscard]] inline Image integrate(const Image& part_a_plus, const Image& part_b_plus, FusionIntegrator& fi) {
  if (!fi->is_trained()) throw StateError("integrate: the fusion integrator has not been trained");
  require_same_shape(part_a_plus, part_b_plus, "integrate");
  torch::NoGradGuard g;
  fi->eval();
  return to_image(fi->forward(to_tensor(part_a_plus).unsqueeze(0), to_tensor(part_b_plus).unsqueeze(0)));
}

// decompose -> refine_component for both parts -> integrate
[[nodiscard]] inline Image refine(const Image& fused, const Image& a, const Image& b, Refiner& r) {
  require_same_shape(fused, a, "refine");
  require_same_shape(fused, b, "refine");
  const auto p = r.current_params();
  const auto parts = decompose(fused, r.du);
  const Kernel h = p.kernel();
  const Image pa = refine_component(fused, parts.part_a, a, p.alpha_a, p.threshold, h, p.sigmoid_slope);
  const Image pb = refine_component(fused, parts.part_b, b, p.alpha_b, p.threshold, h, p.sigmoid_slope);
  return integrate(pa, pb, r.fi);
}

inline void save_refiner(const std::filesystem::path& path, const Refiner& r, std::uint64_t seed,
                         const nlohmann::json& extra = nlohmann::json::object()) {
  TensorArchive ar;
  const auto p = r.current_params();
  ar.meta["kind"] = "refiner";
  ar.meta["du_spec"] = r.du_spec;
  ar.meta["fi_spec"] = r.fi_spec;
  ar.meta["params"] = {{"threshold", p.threshold}, {"kernel_side", p.kernel_side}, {"sigmoid_slope", p.sigmoid_slope}};
  ar.meta["seed"] = seed;
  ar.meta["extra"] = extra;
  store_module(ar, *r.du, "du/");
  store_module(ar, *r.fi, "fi/");
  ar.add("alpha_a", r.alpha_a);
  ar.add("alpha_b", r.alpha_b);
  ar.save(path);
}

[[nodiscard]] inline Refiner load_refiner(const std::filesystem::path& path) {
  const auto ar = TensorArchive::load(path);
  if (ar.meta.value("kind", "") != "refiner") throw DataError("'" + path.string() + "' is not a refiner checkpoint");
  RefinerParams p;
  const auto& jp = ar.meta.at("params");
  p.threshold = jp.at("threshold").get<double>();
  p.kernel_side = jp.at("kernel_side").get<int>();
  p.sigmoid_slope = jp.at("sigmoid_slope").get<double>();
  Refiner r(ar.meta.at("du_spec").get<AutoencoderSpec>(), ar.meta.at("fi_spec").get<IntegratorSpec>(), p,
            ar.meta.at("seed").get<std::uint64_t>());
  restore_module(ar, *r.du, "du/");
  restore_module(ar, *r.fi, "fi/");
  torch::NoGradGuard g;
  r.alpha_a.copy_(ar.at("alpha_a"));
  r.alpha_b.copy_(ar.at("alpha_b"));
  return r;
}

}  // namespace fusionfm::refiner
