// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

// Raw little-endian blob helpers shared by the cache and checkpoint formats.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmm/matrix.hpp"

namespace cmm::detail {

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes);

void write_f32(const std::filesystem::path& path, const Matrix& m);
void write_f64(const std::filesystem::path& path, const Matrix& m);
void write_u32(const std::filesystem::path& path, std::span<const std::uint32_t> values);
void write_i32(const std::filesystem::path& path, std::span<const std::int32_t> values);

/// The read_* helpers throw Errc::DimensionMismatch when the blob length does
/// not match the expected element count.
Matrix read_f32(const std::filesystem::path& path, std::size_t rows, std::size_t cols);
Matrix read_f64(const std::filesystem::path& path, std::size_t rows, std::size_t cols);
std::vector<std::uint32_t> read_u32(const std::filesystem::path& path, std::size_t count);
std::vector<std::int32_t> read_i32(const std::filesystem::path& path, std::size_t count);

nlohmann::json read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const nlohmann::json& manifest);

/// Required-field access that reports a malformed manifest instead of a
/// nlohmann type error.
template <typename T>
T manifest_get(const nlohmann::json& j, const char* key);

}  // namespace cmm::detail
