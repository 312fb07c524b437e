#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "facecloak/serialize.hpp"

namespace facecloak {

// A batch job description: which images to protect, with which prompts,
// toward which targets, against which models. JSON on disk.

struct ManifestImage {
  std::string id;
  std::string path;      // empty in toy mode (the id seeds the sample)
  std::string identity;  // label for identification protocols
};

struct JobManifest {
  std::string run_id = "run";
  std::string dataset_root;
  std::vector<ManifestImage> images;
  std::vector<std::string> prompts;
  std::vector<ManifestImage> targets;
  std::vector<std::string> surrogate_models;
  std::string blackbox_model;
  std::string output_dir = "out";
  int workers = 1;
  uint64_t world_seed = 42;  // toy mode
  bool toy = true;
  ProtectionConfig config;

  void validate() const {
    if (run_id.empty()) throw Error(Errc::bad_manifest, "run_id is empty");
    if (images.empty()) throw Error(Errc::bad_manifest, "manifest lists no images");
    if (prompts.empty()) throw Error(Errc::bad_manifest, "manifest lists no prompts");
    if (config.mode == AttackMode::impersonate_dodge && targets.empty()) {
      throw Error(Errc::bad_manifest, "impersonation runs need at least one target");
    }
    if (surrogate_models.empty()) {
      throw Error(Errc::bad_manifest, "no surrogate models listed");
    }
    if (blackbox_model.empty()) {
      throw Error(Errc::bad_manifest, "no blackbox model listed");
    }
    // leave-one-out: the held-out model must not inform the attack
    if (std::find(surrogate_models.begin(), surrogate_models.end(), blackbox_model) !=
        surrogate_models.end()) {
      throw Error(Errc::bad_manifest,
                  "blackbox model '" + blackbox_model + "' also listed as a surrogate");
    }
    std::set<std::string> ids;
    for (const auto& img : images) {
      if (img.id.empty()) throw Error(Errc::bad_manifest, "image entry without an id");
      if (!ids.insert(img.id).second) {
        throw Error(Errc::bad_manifest, "duplicate image id: " + img.id);
      }
      if (!toy && !std::filesystem::exists(resolve_path(img.path))) {
        throw Error(Errc::bad_manifest, "image file missing: " + img.path);
      }
    }
    for (const auto& tgt : targets) {
      if (tgt.id.empty()) throw Error(Errc::bad_manifest, "target entry without an id");
      if (!toy && !std::filesystem::exists(resolve_path(tgt.path))) {
        throw Error(Errc::bad_manifest, "target file missing: " + tgt.path);
      }
    }
    if (workers < 1) throw Error(Errc::bad_manifest, "workers must be >= 1");
    config.validate();
  }

  std::string resolve_path(const std::string& p) const {
    if (p.empty() || p.front() == '/' || dataset_root.empty()) return p;
    return (std::filesystem::path(dataset_root) / p).string();
  }
};

inline ManifestImage manifest_image_from_json(const json& j) {
  ManifestImage m;
  if (j.is_string()) {
    m.id = j.get<std::string>();
    return m;
  }
  m.id = j.value("id", "");
  m.path = j.value("path", "");
  m.identity = j.value("identity", m.id);
  return m;
}

inline JobManifest manifest_from_json(const json& j) {
  JobManifest m;
  m.run_id = j.value("run_id", m.run_id);
  m.dataset_root = j.value("dataset_root", "");
  for (const auto& e : j.value("images", json::array())) {
    m.images.push_back(manifest_image_from_json(e));
  }
  for (const auto& e : j.value("targets", json::array())) {
    m.targets.push_back(manifest_image_from_json(e));
  }
  if (j.contains("prompts")) m.prompts = j["prompts"].get<std::vector<std::string>>();
  if (j.contains("surrogate_models")) {
    m.surrogate_models = j["surrogate_models"].get<std::vector<std::string>>();
  }
  m.blackbox_model = j.value("blackbox_model", "");
  m.output_dir = j.value("output_dir", m.output_dir);
  m.workers = j.value("workers", m.workers);
  m.world_seed = j.value("world_seed", m.world_seed);
  m.toy = j.value("toy", m.toy);
  if (j.contains("config")) m.config = config_from_json(j["config"]);
  return m;
}

inline JobManifest load_manifest(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(Errc::bad_manifest, std::string("manifest is not valid json: ") + e.what());
  }
  JobManifest m = manifest_from_json(j);
  m.validate();
  return m;
}

// The five prompt styles shipped with the tool; users can pass their own
// file with one prompt per line instead.
inline std::vector<std::string> builtin_prompt_styles() {
  return {"tanned", "pale", "pink eyeshadows", "red lipstick", "Matte"};
}

inline std::string prompt_slug(const std::string& prompt) {
  std::string out;
  for (char c : prompt) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!out.empty() && out.back() != '-') {
      out.push_back('-');
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "prompt" : out;
}

}  // namespace facecloak
