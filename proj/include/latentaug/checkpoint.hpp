// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latentaug/nn.hpp"

namespace latentaug {

// "GELW" checkpoint: magic, u32 version = 1, then a sequence of tensors, each
// u16 name length, name bytes, u8 rank, u32 dims, binary32 payload in
// row-major order. All integers little-endian.

inline constexpr char kCheckpointMagic[4] = {'G', 'E', 'L', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  bool operator==(const NamedTensor&) const = default;
};

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

/// Matrices become rank-2 tensors [rows, cols].
std::vector<NamedTensor> to_tensors(const ParamStore<float>& params);
NamedTensor make_tensor(std::string name, const std::vector<float>& values);

/// Copies values by name; every parameter must be present with its shape.
void load_tensors(ParamStore<float>& params, const std::vector<NamedTensor>& tensors);
const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace latentaug
