// Copyright 2026 The cpg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cpg/error.hpp"
#include "json.hpp"

namespace cpg {

using json = nlohmann::json;

// Lowercase hex SHA-256 of `data`.
inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(),
                 nullptr) != 1) {
    throw Error("sha256: digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

// First 8 bytes of the SHA-256 as an integer. Used to derive seeds.
inline std::uint64_t sha256_u64(std::string_view data) {
  const std::string hex = sha256_hex(data);
  return std::stoull(hex.substr(0, 16), nullptr, 16);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path,
                       std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

inline std::string file_digest(const std::filesystem::path& path) {
  return sha256_hex(read_file(path));
}

// Parses a line-delimited JSON file. Blank lines are skipped; a line that is
// not a JSON object raises CassetteError carrying its line number.
struct JsonLine {
  std::size_t line_no;
  json value;
};

inline std::vector<JsonLine> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot open '" + path.string() + "'");
  std::vector<JsonLine> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json value = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded() || !value.is_object()) {
      throw CassetteError(path.string(), line_no, "malformed JSON record");
    }
    out.push_back({line_no, std::move(value)});
  }
  return out;
}

// Append-only line-delimited JSON writer. Appends are serialized so a single
// instance may be shared by concurrent producers.
class JsonlWriter {
 public:
  JsonlWriter(const std::filesystem::path& path, bool truncate)
      : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary |
                        (truncate ? std::ios::trunc : std::ios::app));
    if (!out_) throw DataError("cannot open '" + path.string() + "' for writing");
  }

  void append(const json& record) {
    const std::string line = record.dump();
    std::lock_guard lock(mu_);
    out_ << line << '\n';
    out_.flush();
    if (!out_) throw DataError("write failed for '" + path_.string() + "'");
  }

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::mutex mu_;
};

inline void write_jsonl(const std::filesystem::path& path,
                        const std::vector<json>& records) {
  std::string content;
  for (const auto& r : records) {
    content += r.dump();
    content += '\n';
  }
  write_file(path, content);
}

}  // namespace cpg
