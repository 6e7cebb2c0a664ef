#pragma once

#include <torch/torch.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fusionfm/errors.hpp"
#include "fusionfm/optim.hpp"
#include "fusionfm/unet.hpp"

// Checkpoint container, format version 1:
//
//   offset 0   8 bytes   magic "FUSIONFM"
//   offset 8   u32 LE    format version
//   offset 12  u64 LE    header length L
//   offset 20  L bytes   UTF-8 JSON header
//   offset 20+L          tensor payload
//
// The header is {"format_version": 1, "meta": {...}, "tensors": [{"name",
// "dtype" ("float32"|"float64"), "shape", "offset", "nbytes"}, ...]} where
// offsets are relative to the start of the payload and tensor bytes are
// little-endian, row-major and contiguous. Readers reject unknown versions.
namespace fusionfm {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'F', 'U', 'S', 'I', 'O', 'N', 'F', 'M'};
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct TensorArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  void add(std::string name, const torch::Tensor& t) {
    tensors.emplace_back(std::move(name), t.detach().cpu().contiguous().clone());
  }

  [[nodiscard]] const torch::Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
      if (n == name) return &t;
    }
    return nullptr;
  }

  [[nodiscard]] const torch::Tensor& at(const std::string& name) const {
    if (const auto* t = find(name)) return *t;
    throw DataError("checkpoint has no tensor '" + name + "'");
  }

  void save(const std::filesystem::path& path) const {
    nlohmann::json header;
    header["format_version"] = kCheckpointFormatVersion;
    header["meta"] = meta;
    header["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
      std::string dtype;
      if (t.scalar_type() == torch::kFloat32) dtype = "float32";
      else if (t.scalar_type() == torch::kFloat64) dtype = "float64";
      else throw ConfigError("checkpoint: unsupported dtype for tensor '" + name + "'");
      const std::uint64_t nbytes = static_cast<std::uint64_t>(t.numel()) * t.element_size();
      header["tensors"].push_back(
          {{"name", name}, {"dtype", dtype}, {"shape", t.sizes().vec()}, {"offset", offset}, {"nbytes", nbytes}});
      offset += nbytes;
    }
    const std::string text = header.dump();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
    const std::uint32_t version = kCheckpointFormatVersion;
    const std::uint64_t len = text.size();
    out.write(kCheckpointMagic, 8);
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors) {
      out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * t.element_size()));
    }
    if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
  }

  [[nodiscard]] static TensorArchive load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&len), 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
      throw DataError("'" + path.string() + "' is not a fusionfm checkpoint");
    }
    if (version != kCheckpointFormatVersion) {
      throw DataError("'" + path.string() + "': unsupported checkpoint format version " + std::to_string(version));
    }
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw DataError("'" + path.string() + "': truncated header");
    const auto header = nlohmann::json::parse(text);
    TensorArchive ar;
    ar.meta = header.at("meta");
    const auto payload_start = in.tellg();
    for (const auto& e : header.at("tensors")) {
      const auto dtype = e.at("dtype").get<std::string>() == "float64" ? torch::kFloat64 : torch::kFloat32;
      auto t = torch::empty(e.at("shape").get<std::vector<std::int64_t>>(), torch::TensorOptions().dtype(dtype));
      const auto nbytes = e.at("nbytes").get<std::uint64_t>();
      if (nbytes != static_cast<std::uint64_t>(t.numel()) * t.element_size()) {
        throw DataError("'" + path.string() + "': size mismatch for tensor '" + e.at("name").get<std::string>() + "'");
      }
      in.seekg(payload_start + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
      in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
      if (!in) throw DataError("'" + path.string() + "': truncated payload");
      ar.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
    }
    return ar;
  }
};

inline void store_module(TensorArchive& ar, const torch::nn::Module& m, const std::string& prefix) {
  for (const auto& p : m.named_parameters()) ar.add(prefix + p.key(), p.value());
  for (const auto& b : m.named_buffers()) ar.add(prefix + b.key(), b.value());
}

inline void restore_module(const TensorArchive& ar, torch::nn::Module& m, const std::string& prefix) {
  torch::NoGradGuard guard;
  for (auto& p : m.named_parameters()) {
    const auto& src = ar.at(prefix + p.key());
    if (!src.sizes().equals(p.value().sizes())) {
      throw DataError("checkpoint tensor '" + prefix + p.key() + "' has the wrong shape");
    }
    p.value().copy_(src);
  }
  for (auto& b : m.named_buffers()) b.value().copy_(ar.at(prefix + b.key()));
}

inline void store_optimizer(TensorArchive& ar, Adam& opt, const std::string& prefix) {
  ar.meta[prefix + "steps"] = opt.steps_taken();
  for (std::size_t i = 0; i < opt.parameters().size(); ++i) {
    ar.add(prefix + "m/" + opt.parameters()[i].name, opt.first_moments()[i]);
    ar.add(prefix + "v/" + opt.parameters()[i].name, opt.second_moments()[i]);
  }
}

inline void restore_optimizer(const TensorArchive& ar, Adam& opt, const std::string& prefix) {
  torch::NoGradGuard guard;
  opt.set_steps_taken(ar.meta.at(prefix + "steps").get<std::int64_t>());
  for (std::size_t i = 0; i < opt.parameters().size(); ++i) {
    opt.first_moments()[i].copy_(ar.at(prefix + "m/" + opt.parameters()[i].name));
    opt.second_moments()[i].copy_(ar.at(prefix + "v/" + opt.parameters()[i].name));
  }
}

struct ModelCheckpoint {
  net::NetSpec spec;
  net::VectorFieldNet model{nullptr};
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  nlohmann::json extra = nlohmann::json::object();
};

inline void save_model(const std::filesystem::path& path, const net::VectorFieldNet& model, std::int64_t step,
                       std::uint64_t seed, Adam* optimizer = nullptr,
                       const nlohmann::json& extra = nlohmann::json::object()) {
  TensorArchive ar;
  ar.meta["kind"] = "vector_field";
  ar.meta["spec"] = model->spec;
  ar.meta["step"] = step;
  ar.meta["seed"] = seed;
  ar.meta["extra"] = extra;
  store_module(ar, *model, "model/");
  if (optimizer) store_optimizer(ar, *optimizer, "optim/");
  ar.save(path);
}

[[nodiscard]] inline ModelCheckpoint load_model(const std::filesystem::path& path) {
  const auto ar = TensorArchive::load(path);
  if (ar.meta.value("kind", "") != "vector_field") {
    throw DataError("'" + path.string() + "' is not a vector-field checkpoint");
  }
  ModelCheckpoint ck;
  ck.spec = ar.meta.at("spec").get<net::NetSpec>();
  ck.step = ar.meta.at("step").get<std::int64_t>();
  ck.seed = ar.meta.at("seed").get<std::uint64_t>();
  ck.extra = ar.meta.value("extra", nlohmann::json::object());
  ck.model = net::VectorFieldNet(ck.spec);
  const auto dtype = ar.at("model/out_conv.weight").scalar_type();
  ck.model->to(dtype);
  restore_module(ar, *ck.model, "model/");
  ck.model->eval();
  return ck;
}

}  // namespace fusionfm
