// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#include "blob_io.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "cmm/error.hpp"

namespace cmm::detail {

namespace {

template <typename U>
void put_le(std::vector<unsigned char>& out, U bits) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<unsigned char>(bits >> (8 * b)));
}

template <typename U>
U get_le(const unsigned char* p) {
  U v = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) v |= static_cast<U>(p[b]) << (8 * b);
  return v;
}

std::vector<unsigned char> read_sized(const std::filesystem::path& path, std::size_t count,
                                      std::size_t width) {
  auto bytes = read_file(path);
  if (bytes.size() != count * width) {
    throw Error(Errc::DimensionMismatch, path.string() + " holds " + std::to_string(bytes.size()) +
                                             " bytes, expected " + std::to_string(count * width));
  }
  return bytes;
}

}  // namespace

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingFile, path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoError, "write to " + path.string() + " failed");
}

void write_f32(const std::filesystem::path& path, const Matrix& m) {
  std::vector<unsigned char> bytes;
  bytes.reserve(m.size() * 4);
  for (double x : m.values()) put_le(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  write_file(path, bytes);
}

void write_f64(const std::filesystem::path& path, const Matrix& m) {
  std::vector<unsigned char> bytes;
  bytes.reserve(m.size() * 8);
  for (double x : m.values()) put_le(bytes, std::bit_cast<std::uint64_t>(x));
  write_file(path, bytes);
}

void write_u32(const std::filesystem::path& path, std::span<const std::uint32_t> values) {
  std::vector<unsigned char> bytes;
  bytes.reserve(values.size() * 4);
  for (auto v : values) put_le(bytes, v);
  write_file(path, bytes);
}

void write_i32(const std::filesystem::path& path, std::span<const std::int32_t> values) {
  std::vector<unsigned char> bytes;
  bytes.reserve(values.size() * 4);
  for (auto v : values) put_le(bytes, static_cast<std::uint32_t>(v));
  write_file(path, bytes);
}

Matrix read_f32(const std::filesystem::path& path, std::size_t rows, std::size_t cols) {
  const auto bytes = read_sized(path, rows * cols, 4);
  std::vector<double> data(rows * cols);
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes.data() + 4 * i));
  return Matrix(rows, cols, std::move(data));
}

Matrix read_f64(const std::filesystem::path& path, std::size_t rows, std::size_t cols) {
  const auto bytes = read_sized(path, rows * cols, 8);
  std::vector<double> data(rows * cols);
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes.data() + 8 * i));
  return Matrix(rows, cols, std::move(data));
}

std::vector<std::uint32_t> read_u32(const std::filesystem::path& path, std::size_t count) {
  const auto bytes = read_sized(path, count, 4);
  std::vector<std::uint32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = get_le<std::uint32_t>(bytes.data() + 4 * i);
  return out;
}

std::vector<std::int32_t> read_i32(const std::filesystem::path& path, std::size_t count) {
  const auto bytes = read_sized(path, count, 4);
  std::vector<std::int32_t> out(count);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = static_cast<std::int32_t>(get_le<std::uint32_t>(bytes.data() + 4 * i));
  return out;
}

nlohmann::json read_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(Errc::BadMagic, path.string() + " is not a JSON manifest");
  }
  return j;
}

void write_manifest(const std::filesystem::path& path, const nlohmann::json& manifest) {
  const std::string text = manifest.dump(2) + "\n";
  write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

template <typename T>
T manifest_get(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(Errc::BadMagic, std::string("manifest lacks field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(Errc::BadMagic, std::string("manifest field '") + key + "' has the wrong type");
  }
}

template std::string manifest_get<std::string>(const nlohmann::json&, const char*);
template std::size_t manifest_get<std::size_t>(const nlohmann::json&, const char*);
template int manifest_get<int>(const nlohmann::json&, const char*);
template double manifest_get<double>(const nlohmann::json&, const char*);
template bool manifest_get<bool>(const nlohmann::json&, const char*);
template std::vector<std::string> manifest_get<std::vector<std::string>>(const nlohmann::json&,
                                                                          const char*);

}  // namespace cmm::detail
