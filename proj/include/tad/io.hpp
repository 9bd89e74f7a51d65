#pragma once

#include <tad/common.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

// Single on-disk container format shared by checkpoints, stats datasets and
// scalers: a magic tag, a kind string, a JSON header and named f64 blobs.
// Round trips are bitwise exact; artifact ids are derived from file bytes.

namespace tad {

namespace json_ns = nlohmann;
using Json = json_ns::json;

inline constexpr char kBinMagic[9] = "TADBIN01";

struct BinContainer {
  std::string kind;
  Json header;
  // Insertion-ordered list of named matrices.
  std::vector<std::pair<std::string, Matrix>> blobs;

  const Matrix& blob(const std::string& name) const {
    for (const auto& [n, m] : blobs) {
      if (n == name) return m;
    }
    throw ArtifactError("container is missing blob '" + name + "'");
  }
  bool has_blob(const std::string& name) const {
    for (const auto& [n, m] : blobs) {
      if (n == name) return true;
    }
    return false;
  }
};

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
public:
  ByteReader(const std::string& bytes, std::string origin)
      : bytes_(bytes), origin_(std::move(origin)) {}

  uint32_t u32() { return static_cast<uint32_t>(read_le(4)); }
  uint64_t u64() { return read_le(8); }

  std::string str(size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void doubles(double* dst, size_t count) {
    need(count * sizeof(double));
    std::memcpy(dst, bytes_.data() + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
  }

  bool exhausted() const { return pos_ == bytes_.size(); }

private:
  uint64_t read_le(int width) {
    need(width);
    uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += width;
    return v;
  }
  void need(size_t n) {
    if (pos_ + n > bytes_.size())
      throw ArtifactError("truncated or corrupt container: " + origin_);
  }

  const std::string& bytes_;
  std::string origin_;
  size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_container(const BinContainer& c) {
  std::string out(kBinMagic, 8);
  detail::put_u32(out, static_cast<uint32_t>(c.kind.size()));
  out += c.kind;
  const std::string header = c.header.dump();
  detail::put_u64(out, header.size());
  out += header;
  detail::put_u64(out, c.blobs.size());
  for (const auto& [name, m] : c.blobs) {
    detail::put_u32(out, static_cast<uint32_t>(name.size()));
    out += name;
    detail::put_u64(out, static_cast<uint64_t>(m.rows()));
    detail::put_u64(out, static_cast<uint64_t>(m.cols()));
    // Row-major payload.
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    out.append(reinterpret_cast<const char*>(rm.data()), static_cast<size_t>(rm.size()) * sizeof(double));
  }
  return out;
}

inline BinContainer deserialize_container(const std::string& bytes, const std::string& origin,
                                          const std::string& expected_kind = "") {
  detail::ByteReader r(bytes, origin);
  if (bytes.size() < 8 || bytes.compare(0, 8, kBinMagic, 8) != 0)
    throw ArtifactError("not a tad container: " + origin);
  r.str(8);
  BinContainer c;
  c.kind = r.str(r.u32());
  if (!expected_kind.empty() && c.kind != expected_kind)
    throw ArtifactError("container kind mismatch for " + origin + ": expected '" + expected_kind +
                        "', found '" + c.kind + "'");
  const std::string header = r.str(r.u64());
  try {
    c.header = Json::parse(header);
  } catch (const Json::exception& e) {
    throw ArtifactError("corrupt container header in " + origin + ": " + e.what());
  }
  const uint64_t n_blobs = r.u64();
  for (uint64_t i = 0; i < n_blobs; ++i) {
    std::string name = r.str(r.u32());
    const auto rows = static_cast<Eigen::Index>(r.u64());
    const auto cols = static_cast<Eigen::Index>(r.u64());
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
    r.doubles(rm.data(), static_cast<size_t>(rows) * static_cast<size_t>(cols));
    c.blobs.emplace_back(std::move(name), Matrix(rm));
  }
  if (!r.exhausted()) throw ArtifactError("trailing bytes in container: " + origin);
  return c;
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArtifactError("cannot open for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArtifactError("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArtifactError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

// Content hash of a serialized artifact; this is the artifact's id.
inline std::string content_id(const std::string& bytes) { return hex_id(fnv1a(bytes.data(), bytes.size())); }

inline std::string save_container(const BinContainer& c, const std::string& path) {
  const std::string bytes = serialize_container(c);
  write_file(path, bytes);
  return content_id(bytes);
}

// Returns the container and its content id.
inline std::pair<BinContainer, std::string> load_container(const std::string& path,
                                                           const std::string& expected_kind = "") {
  const std::string bytes = read_file(path);
  return {deserialize_container(bytes, path, expected_kind), content_id(bytes)};
}

inline void save_json(const Json& j, const std::string& path) { write_file(path, j.dump(2) + "\n"); }

inline Json load_json(const std::string& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw ArtifactError("cannot parse JSON file " + path + ": " + e.what());
  }
}

// Minimal CSV emitter with exact double formatting.
class CsvWriter {
public:
  explicit CsvWriter(std::vector<std::string> columns) : columns_(std::move(columns)) {
    for (size_t i = 0; i < columns_.size(); ++i) {
      if (i) body_ += ',';
      body_ += columns_[i];
    }
    body_ += '\n';
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_.size()) throw ConfigError("CSV row width mismatch");
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) body_ += ',';
      body_ += cells[i];
    }
    body_ += '\n';
  }

  const std::string& str() const { return body_; }
  void save(const std::string& path) const { write_file(path, body_); }

private:
  std::vector<std::string> columns_;
  std::string body_;
};

}  // namespace tad
