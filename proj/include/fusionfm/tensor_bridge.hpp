#pragma once

#include <torch/torch.h>

#include <vector>

#include "fusionfm/errors.hpp"
#include "fusionfm/image.hpp"

namespace fusionfm {

// Image (HWC doubles) -> tensor [C,H,W].
[[nodiscard]] inline torch::Tensor to_tensor(const Image& img, torch::Dtype dtype = torch::kFloat32) {
  auto t = torch::empty({img.height(), img.width(), img.channels()}, torch::kFloat64);
  std::copy(img.data().begin(), img.data().end(), t.data_ptr<double>());
  return t.permute({2, 0, 1}).contiguous().to(dtype);
}

// Tensor [C,H,W] or [1,C,H,W] -> Image.
[[nodiscard]] inline Image to_image(const torch::Tensor& t_in) {
  auto t = t_in.detach();
  if (t.dim() == 4) {
    if (t.size(0) != 1) throw DimensionError("to_image expects a single image, got a batch");
    t = t.squeeze(0);
  }
  if (t.dim() != 3) throw DimensionError("to_image expects a [C,H,W] tensor");
  t = t.permute({1, 2, 0}).contiguous().to(torch::kFloat64).cpu();
  Image img(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), static_cast<int>(t.size(2)));
  const double* p = t.data_ptr<double>();
  std::copy(p, p + img.size(), img.data().begin());
  return img;
}

[[nodiscard]] inline torch::Tensor stack_images(const std::vector<Image>& imgs,
                                                torch::Dtype dtype = torch::kFloat32) {
  std::vector<torch::Tensor> ts;
  ts.reserve(imgs.size());
  for (const auto& i : imgs) ts.push_back(to_tensor(i, dtype));
  return torch::stack(ts);
}

}  // namespace fusionfm
