// Copyright 2026 The stylegate Authors
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

#include "stylegate/binary_io.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "stylegate/errors.h"

namespace stylegate {

namespace {

std::uint64_t to_little(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((bits >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return out;
  }
  return bits;
}

}  // namespace

void append_f64(std::ofstream& out, std::span<const double> values) {
  std::vector<std::uint64_t> raw(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) raw[i] = to_little(std::bit_cast<std::uint64_t>(values[i]));
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 8));
}

void write_f64(const std::filesystem::path& path, std::span<const double> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  append_f64(out, values);
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<double> read_f64(const std::filesystem::path& path, std::size_t expected) {
  if (!std::filesystem::exists(path)) throw MissingFileError("missing file " + path.string());
  const auto size = std::filesystem::file_size(path);
  if (size != expected * 8) {
    throw FormatError(path.string() + " holds " + std::to_string(size) + " bytes, expected " +
                      std::to_string(expected * 8));
  }
  std::ifstream in(path, std::ios::binary);
  std::vector<std::uint64_t> raw(expected);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(expected * 8));
  if (!in) throw FormatError("short read from " + path.string());
  std::vector<double> values(expected);
  for (std::size_t i = 0; i < expected; ++i) values[i] = std::bit_cast<double>(to_little(raw[i]));
  return values;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFileError("missing file " + path.string());
  std::ifstream in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

}  // namespace stylegate
