#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

// glibc's resolver headers (dragged in through the http client) leak a `_res`
// macro that corrupts any later declaration using that identifier, including
// parts of Eigen. Nothing here needs it, so drop it at the boundary.
#ifdef _res
#undef _res
#endif

#include "facecloak/image_io.hpp"
#include "facecloak/toy_world.hpp"
#include "facecloak/verification.hpp"

namespace facecloak {

using json = nlohmann::json;

// Commercial verification services take two images and return a match
// confidence in [0, 100]. This file provides the generic client plus a local
// mock provider speaking the same wire format, so the full request path can
// run in tests with no network and no credentials on file.
//
// Wire format: POST /verify with JSON {"image_a": <base64 png>, "image_b":
// <base64 png>} and an X-Api-Key header; response JSON {"confidence": float,
// "provider": string}.

namespace detail {

inline const char* kBase64Alphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::vector<uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  while (i + 3 <= bytes.size()) {
    const uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out.push_back(kBase64Alphabet[(v >> 18) & 63]);
    out.push_back(kBase64Alphabet[(v >> 12) & 63]);
    out.push_back(kBase64Alphabet[(v >> 6) & 63]);
    out.push_back(kBase64Alphabet[v & 63]);
    i += 3;
  }
  const size_t rest = bytes.size() - i;
  if (rest == 1) {
    const uint32_t v = bytes[i] << 16;
    out.push_back(kBase64Alphabet[(v >> 18) & 63]);
    out.push_back(kBase64Alphabet[(v >> 12) & 63]);
    out += "==";
  } else if (rest == 2) {
    const uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out.push_back(kBase64Alphabet[(v >> 18) & 63]);
    out.push_back(kBase64Alphabet[(v >> 12) & 63]);
    out.push_back(kBase64Alphabet[(v >> 6) & 63]);
    out += "=";
  }
  return out;
}

inline int base64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

inline std::vector<uint8_t> base64_decode(const std::string& text) {
  std::vector<uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = base64_value(c);
    if (v < 0) throw Error(Errc::io_error, "invalid base64 payload");
    acc = (acc << 6) | static_cast<uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<uint8_t>((acc >> bits) & 0xff));
    }
  }
  return out;
}

}  // namespace detail

struct ApiVerifyResult {
  double confidence = 0;  // 0..100
  std::string provider;
  double latency_ms = 0;
};

inline std::string read_api_key(const std::string& credentials_path) {
  std::ifstream f(credentials_path);
  if (!f) throw Error(Errc::auth_error, "cannot read credentials: " + credentials_path);
  std::string line;
  while (std::getline(f, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty() && line.front() != '#') return line;
  }
  throw Error(Errc::auth_error, "credentials file has no key: " + credentials_path);
}

// Reads the path from FACECLOAK_API_CREDENTIALS.
inline std::string read_api_key_from_env() {
  const char* path = std::getenv("FACECLOAK_API_CREDENTIALS");
  if (!path || !*path) {
    throw Error(Errc::auth_error, "FACECLOAK_API_CREDENTIALS is not set");
  }
  return read_api_key(path);
}

// Local provider: scores two images by cosine distance on a toy embedder and
// maps it to confidence = 100 * (1 - distance / 2). Used for tests, demos,
// and as the wire-format reference.
class MockVerifyServer {
 public:
  explicit MockVerifyServer(uint64_t world_seed = 42, std::string api_key = "toy-key")
      : world_(make_toy_world(world_seed)), api_key_(std::move(api_key)) {
    server_.Post("/verify", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res);
    });
  }

  ~MockVerifyServer() { stop(); }

  // Binds a free loopback port and serves on a background thread.
  int start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw Error(Errc::io_error, "mock server could not bind a port");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  int port() const { return port_; }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
  const std::string& api_key() const { return api_key_; }
  int requests_seen() const { return requests_.load(); }

  // The next n requests answer with the given status before any real work;
  // lets tests exercise the client's retry path deterministically.
  void fail_next(int n, int status) {
    fail_count_ = n;
    fail_status_ = status;
  }

  // Ground truth for tests: the exact confidence the server would compute.
  double reference_confidence(const FaceImage& a, const FaceImage& b) const {
    const auto& model = world_.embedders.back();
    const double d = cosine_distance(embed_fitted(model, a), embed_fitted(model, b));
    // float32 embeddings can push |distance| an ulp past its range; the
    // provider still owes callers a score inside its documented [0, 100]
    return std::clamp(100.0 * (1.0 - d / 2.0), 0.0, 100.0);
  }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    requests_.fetch_add(1);
    if (fail_count_ > 0) {
      --fail_count_;
      res.status = fail_status_;
      res.set_content("{\"error\":\"injected\"}", "application/json");
      return;
    }
    if (req.get_header_value("X-Api-Key") != api_key_) {
      res.status = 401;
      res.set_content("{\"error\":\"bad credentials\"}", "application/json");
      return;
    }
    try {
      const json body = json::parse(req.body);
      const FaceImage a = decode_image(detail::base64_decode(body.at("image_a")));
      const FaceImage b = decode_image(detail::base64_decode(body.at("image_b")));
      json out;
      out["confidence"] = reference_confidence(a, b);
      out["provider"] = "mock";
      res.set_content(out.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      json out;
      out["error"] = e.what();
      res.set_content(out.dump(), "application/json");
    }
  }

  ToyWorld world_;
  std::string api_key_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> requests_{0};
  std::atomic<int> fail_count_{0};
  int fail_status_ = 429;
};

// Two-image verify client with bounded retries. 401/403 is a credentials
// problem and is never retried; 429 and transport failures back off
// exponentially and are surfaced as RateLimited/Timeout when attempts run
// out; any other non-200 is an IO error.
class VerifyApiClient {
 public:
  VerifyApiClient(std::string endpoint, std::string api_key, int max_attempts = 3,
                  int backoff_ms = 100)
      : endpoint_(std::move(endpoint)),
        api_key_(std::move(api_key)),
        max_attempts_(max_attempts),
        backoff_ms_(backoff_ms) {
    if (max_attempts_ < 1) throw Error(Errc::bad_manifest, "max_attempts must be >= 1");
  }

  ApiVerifyResult verify(const FaceImage& a, const FaceImage& b) const {
    json body;
    body["image_a"] = detail::base64_encode(encode_png(a));
    body["image_b"] = detail::base64_encode(encode_png(b));
    const std::string payload = body.dump();

    Errc pending = Errc::timeout;
    std::string pending_msg = "no attempts made";
    for (int attempt = 0; attempt < max_attempts_; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(
            std::chrono::milliseconds(backoff_ms_ << (attempt - 1)));
      }
      const auto t0 = std::chrono::steady_clock::now();
      httplib::Client cli(endpoint_);
      cli.set_connection_timeout(5, 0);
      cli.set_read_timeout(10, 0);
      httplib::Headers headers = {{"X-Api-Key", api_key_}};
      const httplib::Result res = cli.Post("/verify", headers, payload, "application/json");
      const auto t1 = std::chrono::steady_clock::now();

      if (!res) {
        pending = Errc::timeout;
        pending_msg = "transport failure: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 401 || res->status == 403) {
        throw Error(Errc::auth_error, "provider rejected credentials");
      }
      if (res->status == 429) {
        pending = Errc::rate_limited;
        pending_msg = "provider rate limit";
        continue;
      }
      if (res->status >= 500) {
        pending = Errc::timeout;
        pending_msg = "provider error " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        throw Error(Errc::io_error,
                    "provider answered " + std::to_string(res->status) + ": " + res->body);
      }
      ApiVerifyResult out;
      try {
        const json reply = json::parse(res->body);
        out.confidence = reply.at("confidence").get<double>();
        out.provider = reply.value("provider", "");
      } catch (const json::exception& e) {
        throw Error(Errc::io_error, std::string("unparseable provider reply: ") + e.what());
      }
      if (!(out.confidence >= 0.0 && out.confidence <= 100.0)) {
        throw Error(Errc::io_error, "provider confidence out of [0, 100]");
      }
      out.latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      return out;
    }
    throw Error(pending, pending_msg + " after " + std::to_string(max_attempts_) + " attempts");
  }

 private:
  std::string endpoint_;
  std::string api_key_;
  int max_attempts_;
  int backoff_ms_;
};

}  // namespace facecloak
