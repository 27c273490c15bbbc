// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "latentaug/nn.hpp"
#include "latentaug/rng.hpp"

namespace latentaug {

/// Fourier features of c_noise = ln(sigma) / 4 with fixed random frequencies:
/// the first half holds sin(2 pi f_i c_noise), the second cos(2 pi f_i c_noise).
template <typename S>
class TimeEmbedding {
 public:
  TimeEmbedding() = default;
  /// dim must be even; frequencies ~ N(0, 1) from `seed`.
  TimeEmbedding(Index dim, std::uint64_t seed);
  explicit TimeEmbedding(Vec<S> frequencies) : freqs_(std::move(frequencies)) {}

  Index dim() const { return 2 * freqs_.size(); }
  const Vec<S>& frequencies() const { return freqs_; }

  Vec<S> operator()(double sigma) const;
  /// One column per sigma.
  Mat<S> batch(std::span<const S> sigmas) const;

 private:
  Vec<S> freqs_;
};

enum class ConditionMode { class_only, class_plus_subdomain_latent, class_plus_semantic_vector };

/// Mode 3 looks its vector up by class (text prompts) or by subdomain (a fixed
/// per-subdomain embedding).
enum class SemanticKey { by_class, by_subdomain };

struct ConditionConfig {
  ConditionMode mode = ConditionMode::class_only;
  Index num_classes = 1;
  Index embed_dim = 256;
  Index width = 256;
  /// Width of subdomain latents (mode 2) or semantic vectors (mode 3).
  Index reference_dim = 0;
  SemanticKey semantic_key = SemanticKey::by_class;

  Index concat_dim() const { return embed_dim + (mode == ConditionMode::class_only ? 0 : reference_dim); }
  void validate() const;
};

struct ConditionInput {
  std::uint32_t class_id = 0;
  std::uint32_t subdomain_id = 0;
};

/// The stochastic part of a condition, resolved: which reference vector was
/// drawn and whether the condition was dropped to the null token.
struct ConditionDraw {
  std::uint32_t class_id = 0;
  std::uint32_t reference_group = 0;
  Index reference_index = -1;
  bool is_null = false;
};

struct ConditionVector {
  Vec<float> values;
  bool is_null = false;
};

/// Class table, optional reference part, affine projection to the final
/// width, and the learnable null vector. Parameters live in the caller's
/// ParamStore so the denoiser and its conditioning train as one.
template <typename S>
class ConditionSource {
 public:
  struct Tape {
    std::vector<ConditionDraw> draws;
    AffineTape<S> projection;
    std::vector<Index> live_columns;
  };

  ConditionSource() = default;
  ConditionSource(const ConditionConfig& config, ParamStore<S>& store, Rng& rng);

  const ConditionConfig& config() const { return config_; }

  /// Per-subdomain latents in the working space, one matrix (reference_dim x n) per subdomain.
  void set_subdomain_pool(std::vector<Mat<S>> pools);
  const std::vector<Mat<S>>& subdomain_pool() const { return pools_; }
  /// One column per class or per subdomain, depending on semantic_key.
  void set_semantic_vectors(Mat<S> table);
  const Mat<S>& semantic_vectors() const { return semantic_; }

  /// Resolves the random choices for one sample. Mode 2 draws a pool member
  /// uniformly with `rng`; other modes never touch it.
  ConditionDraw draw(const ConditionInput& input, Rng& rng) const;
  ConditionDraw null_draw() const;

  /// Final-width condition vectors, one column per draw.
  Mat<S> forward(const ParamStore<S>& store, std::span<const ConditionDraw> draws, Tape* tape = nullptr) const;
  void backward(ParamStore<S>& store, const Tape& tape, const Mat<S>& dcond) const;

  std::size_t class_table_index() const { return class_table_; }
  std::size_t null_index() const { return null_; }
  const AffineLayer& projection() const { return projection_; }

  template <typename T>
  ConditionSource<T> cast() const {
    ConditionSource<T> out;
    out.config_ = config_;
    out.class_table_ = class_table_;
    out.null_ = null_;
    out.projection_ = projection_;
    for (const auto& p : pools_) out.pools_.push_back(p.template cast<T>());
    out.semantic_ = semantic_.template cast<T>();
    return out;
  }

 private:
  template <typename>
  friend class ConditionSource;

  Vec<S> reference(const ConditionDraw& d) const;

  ConditionConfig config_;
  std::size_t class_table_ = 0;
  std::size_t null_ = 0;
  AffineLayer projection_;
  std::vector<Mat<S>> pools_;
  Mat<S> semantic_;
};

/// Single-sample condition (never null).
template <typename S>
ConditionVector build_condition(const ConditionSource<S>& source, const ParamStore<S>& store,
                                const ConditionInput& input, Rng& rng);

/// With probability p returns the null condition, otherwise `cond` unchanged.
template <typename S>
ConditionVector drop_condition(const ConditionVector& cond, double p, const ConditionSource<S>& source,
                               const ParamStore<S>& store, Rng& rng);

}  // namespace latentaug
