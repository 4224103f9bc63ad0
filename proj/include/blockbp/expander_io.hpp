#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "blockbp/expander.hpp"

namespace blockbp {

/// Malformed or truncated expander file; `offset` is the byte position at
/// which the problem was detected.
class format_error : public std::runtime_error {
 public:
  format_error(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

namespace detail {

inline void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class byte_reader {
 public:
  byte_reader(const unsigned char* data, std::size_t size)
      : data_(data), size_(size) {}

  std::uint64_t offset() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }

  void expect(std::size_t count, const char* what) const {
    if (size_ - pos_ < count) throw format_error(std::string("truncated ") + what, pos_);
  }
  std::uint16_t u16(const char* what) {
    expect(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    expect(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    expect(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

 private:
  const unsigned char* data_;
  std::size_t size_;
  std::uint64_t pos_ = 0;
};

}  // namespace detail

// Binary layout: "EXPD" | u16 version=1 | u64 n_rows | u64 n_cols |
// u32 degree | u64 seed | n_cols*degree little-endian u32 row indices,
// column-major, ascending within each column.
inline std::string serialize_expander(const bipartite_expander& x) {
  x.validate();
  std::string buf;
  buf.reserve(34 + x.column_rows.size() * 4);
  buf.append("EXPD", 4);
  detail::put_u16(buf, 1);
  detail::put_u64(buf, x.n_rows);
  detail::put_u64(buf, x.n_cols);
  detail::put_u32(buf, x.degree);
  detail::put_u64(buf, x.seed);
  for (std::uint32_t r : x.column_rows) detail::put_u32(buf, r);
  return buf;
}

inline bipartite_expander deserialize_expander(const unsigned char* data,
                                               std::size_t size) {
  detail::byte_reader in(data, size);
  in.expect(4, "header");
  if (std::memcmp(data, "EXPD", 4) != 0) throw format_error("bad magic", 0);
  detail::byte_reader body(data + 4, size - 4);
  const std::uint16_t version = body.u16("header");
  if (version != 1)
    throw format_error("unsupported version " + std::to_string(version), 4);
  bipartite_expander x;
  x.n_rows = body.u64("header");
  x.n_cols = body.u64("header");
  x.degree = body.u32("header");
  x.seed = body.u64("header");
  if (x.n_rows == 0 || x.n_cols == 0)
    throw format_error("zero dimension in header", 4 + body.offset());
  if (x.degree == 0 || x.degree > x.n_rows)
    throw format_error("degree out of range", 4 + body.offset());
  const std::uint64_t count = x.n_cols * x.degree;
  x.column_rows.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t at = 4 + body.offset();
    const std::uint32_t r = body.u32("row index block");
    if (r >= x.n_rows)
      throw format_error("row index " + std::to_string(r) + " >= n_rows", at);
    if (i % x.degree != 0 && r <= x.column_rows[i - 1])
      throw format_error("column indices not strictly ascending", at);
    x.column_rows[i] = r;
  }
  if (body.remaining() != 0)
    throw format_error("trailing bytes after matrix data", 4 + body.offset());
  return x;
}

inline void save_expander(const bipartite_expander& x,
                          const std::filesystem::path& path) {
  const std::string bytes = serialize_expander(x);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline bipartite_expander load_expander(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return deserialize_expander(
      reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
}

/// JSON debug mirror of the binary format.
inline nlohmann::json expander_to_json(const bipartite_expander& x) {
  std::vector<std::vector<std::uint32_t>> cols(x.n_cols);
  for (std::size_t c = 0; c < x.n_cols; ++c) {
    auto col = x.column(c);
    cols[c].assign(col.begin(), col.end());
  }
  return {{"n_rows", x.n_rows}, {"n_cols", x.n_cols}, {"degree", x.degree},
          {"seed", x.seed},     {"columns", cols}};
}

inline bipartite_expander expander_from_json(const nlohmann::json& j) {
  auto cols = j.at("columns").get<std::vector<std::vector<std::uint32_t>>>();
  auto x = expander_from_columns(j.at("n_rows").get<std::uint64_t>(), cols);
  x.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("degree") && j["degree"].get<std::uint32_t>() != x.degree)
    throw std::invalid_argument("expander_from_json: stored degree inconsistent");
  if (j.contains("n_cols") && j["n_cols"].get<std::uint64_t>() != x.n_cols)
    throw std::invalid_argument("expander_from_json: stored n_cols inconsistent");
  return x;
}

}  // namespace blockbp
