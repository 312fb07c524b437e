#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "facecloak/hash.hpp"
#include "facecloak/models.hpp"

namespace facecloak {

// Checkpoint registry. A plain-text manifest maps model ids to weight files;
// every resolution re-hashes the file so a swapped or truncated checkpoint
// fails loudly instead of silently changing results. When a model is absent
// the caller may fall back to the toy substitute, which prints a warning once
// so nobody mistakes desk numbers for checkpoint numbers.

struct CheckpointEntry {
  std::string model_id;
  std::string path;
  std::string sha256;
  int input_size = 0;
  std::string role;
};

struct CheckpointRegistry {
  std::map<std::string, CheckpointEntry> entries;

  bool has(const std::string& model_id) const { return entries.count(model_id) > 0; }

  // Hash-verified resolution; the returned path is safe to load.
  CheckpointEntry resolve(const std::string& model_id) const {
    auto it = entries.find(model_id);
    if (it == entries.end()) {
      throw Error(Errc::bad_checkpoint, "model not in registry: " + model_id);
    }
    const CheckpointEntry& e = it->second;
    if (!std::filesystem::exists(e.path)) {
      throw Error(Errc::bad_checkpoint, "checkpoint file missing: " + e.path);
    }
    const std::string actual = sha256_file(e.path);
    if (actual != e.sha256) {
      throw Error(Errc::bad_checkpoint,
                  "checksum mismatch for " + model_id + ": manifest says " + e.sha256 +
                      ", file is " + actual);
    }
    return e;
  }
};

// Format: one record per line, five whitespace-separated fields
//   model_id path sha256 input_size role
// with '#' comments and blank lines ignored.
inline CheckpointRegistry parse_registry(const std::string& text) {
  CheckpointRegistry reg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.erase(hash_pos);
    std::istringstream row(line);
    CheckpointEntry e;
    if (!(row >> e.model_id)) continue;  // blank or comment-only
    if (!(row >> e.path >> e.sha256 >> e.input_size >> e.role) || e.input_size <= 0) {
      throw Error(Errc::bad_manifest,
                  "registry line " + std::to_string(lineno) + " is malformed");
    }
    std::string extra;
    if (row >> extra) {
      throw Error(Errc::bad_manifest,
                  "registry line " + std::to_string(lineno) + " has trailing fields");
    }
    if (reg.entries.count(e.model_id)) {
      throw Error(Errc::bad_manifest, "duplicate registry entry: " + e.model_id);
    }
    reg.entries[e.model_id] = e;
  }
  return reg;
}

inline CheckpointRegistry load_registry(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::io_error, "cannot open registry: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_registry(ss.str());
}

// True when every model a real run needs is present and verified. Used to
// decide between checkpoint mode and the toy fallback.
inline bool checkpoints_available(const CheckpointRegistry& reg,
                                  const std::vector<std::string>& required) {
  for (const auto& id : required) {
    if (!reg.has(id)) return false;
    try {
      reg.resolve(id);
    } catch (const Error&) {
      return false;
    }
  }
  return !required.empty();
}

inline void warn_toy_fallback(const std::string& why) {
  std::cerr << "WARNING: running on the built-in toy world (" << why
            << "). Results demonstrate mechanics only, not checkpoint-grade protection.\n";
}

}  // namespace facecloak
