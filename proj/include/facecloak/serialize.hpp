#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "facecloak/config.hpp"
#include "facecloak/hash.hpp"
#include "facecloak/latent.hpp"
#include "facecloak/losses.hpp"
#include "facecloak/verification.hpp"

namespace facecloak {

using json = nlohmann::json;

// --------------------------------------------------------------------------
// Latent codes: 8-byte header (layer count, dim as little-endian uint32)
// followed by the flat float32 payload, little-endian. A small text sidecar
// carries what the numbers alone cannot: which image and encoder made them.

namespace detail {

inline void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline uint32_t get_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

static_assert(sizeof(float) == 4, "float must be 32-bit IEEE");

}  // namespace detail

inline std::string latent_to_bytes(const LatentCode& w) {
  std::string out;
  out.reserve(8 + 4 * w.data.size());
  detail::put_u32(out, static_cast<uint32_t>(w.layers));
  detail::put_u32(out, static_cast<uint32_t>(w.dim));
  for (float v : w.data) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    detail::put_u32(out, bits);
  }
  return out;
}

inline LatentCode latent_from_bytes(const std::string& bytes) {
  if (bytes.size() < 8) throw Error(Errc::io_error, "latent file shorter than its header");
  const auto* p = reinterpret_cast<const uint8_t*>(bytes.data());
  const uint32_t layers = detail::get_u32(p);
  const uint32_t dim = detail::get_u32(p + 4);
  const size_t expect = 8 + 4ull * layers * dim;
  if (layers == 0 || dim == 0 || bytes.size() != expect) {
    throw Error(Errc::io_error, "latent file payload does not match its header");
  }
  LatentCode w(static_cast<int>(layers), static_cast<int>(dim));
  for (size_t i = 0; i < w.data.size(); ++i) {
    const uint32_t bits = detail::get_u32(p + 8 + 4 * i);
    std::memcpy(&w.data[i], &bits, 4);
  }
  return w;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::io_error, "cannot open for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(Errc::io_error, "short write: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::io_error, "cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void save_latent(const std::string& path, const LatentCode& w,
                        const std::string& image_hash = "", const std::string& encoder_id = "") {
  write_file(path, latent_to_bytes(w));
  std::ostringstream meta;
  meta << "image_sha256 " << image_hash << "\n";
  meta << "encoder " << encoder_id << "\n";
  write_file(path + ".meta", meta.str());
}

inline LatentCode load_latent(const std::string& path) {
  return latent_from_bytes(read_file(path));
}

// --------------------------------------------------------------------------
// Per-run optimization trace.

inline std::string trace_to_csv(const std::vector<LossBreakdown>& trace) {
  std::ostringstream out;
  out << "iteration,l_clip,l_adv,l_latent,l_total\n";
  out.precision(17);
  for (size_t i = 0; i < trace.size(); ++i) {
    out << i << ',' << trace[i].l_clip << ',' << trace[i].l_adv << ',' << trace[i].l_latent
        << ',' << trace[i].l_total << '\n';
  }
  return out.str();
}

inline std::vector<LossBreakdown> trace_from_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != "iteration,l_clip,l_adv,l_latent,l_total") {
    throw Error(Errc::io_error, "trace csv header missing or unrecognized");
  }
  std::vector<LossBreakdown> trace;
  size_t expect = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    size_t iter;
    LossBreakdown b;
    if (!(row >> iter >> b.l_clip >> b.l_adv >> b.l_latent >> b.l_total) || iter != expect) {
      throw Error(Errc::io_error, "malformed trace row " + std::to_string(expect));
    }
    trace.push_back(b);
    ++expect;
  }
  return trace;
}

// --------------------------------------------------------------------------
// Provenance: everything needed to regenerate an output bitwise, plus the
// checksums proving what was actually produced.

inline json config_to_json(const ProtectionConfig& cfg) {
  json j;
  j["weights"] = {{"adv", cfg.weights.adv}, {"clip", cfg.weights.clip},
                  {"latent", cfg.weights.latent}};
  j["inversion_iters"] = cfg.inversion_iters;
  j["lambda2"] = cfg.lambda2;
  j["inversion_lr"] = cfg.inversion_lr;
  j["attack_iters"] = cfg.attack_iters;
  j["lr"] = cfg.lr;
  j["max_grad_norm"] = cfg.max_grad_norm;
  j["mask"] = cfg.mask.flags;
  j["mode"] = attack_mode_name(cfg.mode);
  j["seed"] = cfg.seed;
  return j;
}

inline ProtectionConfig config_from_json(const json& j) {
  ProtectionConfig cfg;
  if (j.contains("weights")) {
    cfg.weights.adv = j["weights"].value("adv", cfg.weights.adv);
    cfg.weights.clip = j["weights"].value("clip", cfg.weights.clip);
    cfg.weights.latent = j["weights"].value("latent", cfg.weights.latent);
  }
  cfg.inversion_iters = j.value("inversion_iters", cfg.inversion_iters);
  cfg.lambda2 = j.value("lambda2", cfg.lambda2);
  cfg.inversion_lr = j.value("inversion_lr", cfg.inversion_lr);
  cfg.attack_iters = j.value("attack_iters", cfg.attack_iters);
  cfg.lr = j.value("lr", cfg.lr);
  cfg.max_grad_norm = j.value("max_grad_norm", cfg.max_grad_norm);
  if (j.contains("mask")) cfg.mask.flags = j["mask"].get<std::vector<uint8_t>>();
  if (j.value("mode", "") == std::string("dodge-only")) cfg.mode = AttackMode::dodge_only;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

struct Provenance {
  ProtectionConfig config;
  std::string prompt;
  std::string image_id;
  std::string target_id;
  uint64_t world_seed = 0;  // the toy world is fully determined by this
  std::vector<std::string> surrogate_models;
  std::string blackbox_model;
  std::map<std::string, std::string> checksums;  // filename -> sha256
};

inline json provenance_to_json(const Provenance& p) {
  json j;
  j["config"] = config_to_json(p.config);
  j["prompt"] = p.prompt;
  j["image_id"] = p.image_id;
  j["target_id"] = p.target_id;
  j["world_seed"] = p.world_seed;
  j["surrogate_models"] = p.surrogate_models;
  j["blackbox_model"] = p.blackbox_model;
  j["checksums"] = p.checksums;
  return j;
}

inline Provenance provenance_from_json(const json& j) {
  Provenance p;
  p.config = config_from_json(j.at("config"));
  p.prompt = j.value("prompt", "");
  p.image_id = j.value("image_id", "");
  p.target_id = j.value("target_id", "");
  p.world_seed = j.value("world_seed", uint64_t{0});
  if (j.contains("surrogate_models")) {
    p.surrogate_models = j["surrogate_models"].get<std::vector<std::string>>();
  }
  p.blackbox_model = j.value("blackbox_model", "");
  if (j.contains("checksums")) {
    p.checksums = j["checksums"].get<std::map<std::string, std::string>>();
  }
  return p;
}

// --------------------------------------------------------------------------
// Evaluation report rendering: JSON for machines, a fixed-width table for
// terminals.

inline json report_to_json(const EvaluationReport& r) {
  json j;
  j["psr"] = r.psr;
  json ranks = json::object();
  for (const auto& [n, rates] : r.rank_n) {
    json cell;
    if (!std::isnan(rates.targeted)) cell["targeted"] = rates.targeted;
    if (!std::isnan(rates.untargeted)) cell["untargeted"] = rates.untargeted;
    ranks[std::to_string(n)] = cell;
  }
  j["rank_n"] = ranks;
  j["fid"] = r.fid;
  j["psnr"] = r.psnr;
  j["ssim"] = r.ssim;
  j["dataset"] = r.dataset;
  j["prompt"] = r.prompt;
  j["target_model"] = r.target_model;
  j["surrogate_models"] = r.surrogate_models;
  j["mode"] = r.mode;
  j["images_evaluated"] = r.images_evaluated;
  j["images_missing"] = r.images_missing;
  j["fid_degenerate"] = r.fid_degenerate;
  return j;
}

inline EvaluationReport report_from_json(const json& j) {
  EvaluationReport r;
  r.psr = j.value("psr", 0.0);
  if (j.contains("rank_n")) {
    for (const auto& [key, cell] : j["rank_n"].items()) {
      RankRates rates;
      if (cell.contains("targeted")) rates.targeted = cell["targeted"].get<double>();
      if (cell.contains("untargeted")) rates.untargeted = cell["untargeted"].get<double>();
      r.rank_n[std::stoi(key)] = rates;
    }
  }
  r.fid = j.value("fid", 0.0);
  r.psnr = j.value("psnr", 0.0);
  r.ssim = j.value("ssim", 0.0);
  r.dataset = j.value("dataset", "");
  r.prompt = j.value("prompt", "");
  r.target_model = j.value("target_model", "");
  if (j.contains("surrogate_models")) {
    r.surrogate_models = j["surrogate_models"].get<std::vector<std::string>>();
  }
  r.mode = j.value("mode", "");
  r.images_evaluated = j.value("images_evaluated", 0);
  r.images_missing = j.value("images_missing", 0);
  r.fid_degenerate = j.value("fid_degenerate", false);
  return r;
}

}  // namespace facecloak
