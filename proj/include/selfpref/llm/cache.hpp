// Copyright 2026 The selfpref Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Content-addressed response cache.
//
// Records live in one JSONL file per namespace:
//
//   {"key": <sha256 hex>, "request_canonical": <json>, "response": <json>,
//    "timestamp": <iso8601>}
//
// The file is append-only in content; every flush rewrites it through a
// temporary file and an atomic rename so a crash never leaves a torn line.

#pragma once

#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "selfpref/errors.hpp"
#include "selfpref/llm/types.hpp"

namespace selfpref::llm {

inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256: EVP_Digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

// Canonical form of everything that determines a response. nlohmann::json
// objects keep keys sorted, so the dump is independent of insertion order.
inline nlohmann::json canonical_request(std::string_view endpoint, const CompletionRequest& req,
                                        const std::vector<std::string>& option_tokens = {}) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : req.messages) messages.push_back({{"content", m.content}, {"role", m.role}});
  nlohmann::json j{{"endpoint", endpoint},
                   {"model", req.model},
                   {"messages", std::move(messages)},
                   {"temperature", req.temperature},
                   {"max_tokens", req.max_tokens},
                   {"want_top_logprobs", req.want_top_logprobs},
                   {"option_tokens", option_tokens}};
  if (!req.stop.empty()) j["stop"] = req.stop;
  return j;
}

inline std::string cache_key(const nlohmann::json& canonical) {
  return sha256_hex(canonical.dump());
}

inline std::string cache_key(std::string_view endpoint, const CompletionRequest& req,
                             const std::vector<std::string>& option_tokens = {}) {
  return cache_key(canonical_request(endpoint, req, option_tokens));
}

struct CacheRecord {
  std::string key;
  nlohmann::json request_canonical;
  nlohmann::json response;
  std::string timestamp;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class ResponseCache {
 public:
  // In-memory cache; nothing is persisted.
  ResponseCache() = default;

  // Persistent cache backed by `path`; loads existing records.
  explicit ResponseCache(std::filesystem::path path, std::size_t flush_every = 32)
      : path_(std::move(path)), flush_every_(flush_every) {
    load();
  }

  ResponseCache(const ResponseCache&) = delete;
  ResponseCache& operator=(const ResponseCache&) = delete;

  ~ResponseCache() {
    try {
      flush();
    } catch (...) {
    }
  }

  std::optional<CacheRecord> get(const std::string& key) const {
    std::shared_lock lock(mu_);
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return records_[it->second];
  }

  // Last write wins on identical keys.
  void put(CacheRecord record) {
    std::unique_lock lock(mu_);
    if (record.timestamp.empty()) record.timestamp = utc_timestamp();
    if (auto it = index_.find(record.key); it != index_.end()) {
      records_[it->second] = std::move(record);
    } else {
      index_.emplace(record.key, records_.size());
      records_.push_back(std::move(record));
    }
    ++dirty_;
    if (path_ && dirty_ >= flush_every_) flush_locked();
  }

  void flush() {
    std::unique_lock lock(mu_);
    flush_locked();
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return records_.size();
  }

  const std::optional<std::filesystem::path>& path() const noexcept { return path_; }

 private:
  void load() {
    std::ifstream in(*path_, std::ios::binary);
    if (!in) return;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("cache " + path_->string() + " line " + std::to_string(line_no) + ": " + e.what());
      }
      CacheRecord r{j.at("key").get<std::string>(), j.at("request_canonical"), j.at("response"),
                    j.value("timestamp", std::string{})};
      if (auto it = index_.find(r.key); it != index_.end()) {
        records_[it->second] = std::move(r);
      } else {
        index_.emplace(r.key, records_.size());
        records_.push_back(std::move(r));
      }
    }
  }

  void flush_locked() {
    if (!path_ || dirty_ == 0) return;
    if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
    auto tmp = *path_;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw ConfigError("cannot write cache: " + tmp.string());
      for (const auto& r : records_) {
        nlohmann::json j{{"key", r.key},
                         {"request_canonical", r.request_canonical},
                         {"response", r.response},
                         {"timestamp", r.timestamp}};
        out << j.dump() << '\n';
      }
      out.flush();
      if (!out) throw ConfigError("cannot write cache: " + tmp.string());
    }
    std::filesystem::rename(tmp, *path_);
    dirty_ = 0;
  }

  std::optional<std::filesystem::path> path_;
  std::size_t flush_every_ = 32;
  std::size_t dirty_ = 0;
  mutable std::shared_mutex mu_;
  std::vector<CacheRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace selfpref::llm
