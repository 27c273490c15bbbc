// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "latentaug/error.hpp"
#include "latentaug/latent_store.hpp"
#include "latentaug/rng.hpp"

namespace latentaug {

struct TempDir {
  std::filesystem::path path;

  TempDir() {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("latentaug_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

/// Runs `body` and checks it throws latentaug::Error of `kind`.
inline void expect_error(ErrorKind kind, const std::function<void()>& body) {
  try {
    body();
    ADD_FAILURE() << "expected " << to_string(kind) << ", nothing thrown";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

/// Arbitrary bit patterns that are still finite floats.
inline LatentDataset random_dataset(std::uint32_t m, std::uint32_t n, std::uint32_t c, std::uint32_t k,
                                    std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LatentRecord> records;
  for (std::uint32_t i = 0; i < n; ++i) {
    LatentRecord r;
    r.vector.resize(m);
    for (std::uint32_t j = 0; j < m; ++j) {
      float v;
      do {
        const auto bits = static_cast<std::uint32_t>(rng.engine()());
        std::memcpy(&v, &bits, sizeof v);
      } while (!std::isfinite(v));
      r.vector[j] = v;
    }
    r.class_id = static_cast<std::uint32_t>(rng.index(c));
    r.subdomain_id = static_cast<std::uint32_t>(rng.index(k));
    r.split = rng.bernoulli(0.5) ? Split::train : Split::test;
    records.push_back(std::move(r));
  }
  return LatentDataset::from_records(std::move(records), DatasetManifest::with_default_names(m, c, k));
}

}  // namespace latentaug
