// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "latentaug/error.hpp"
#include "latentaug/latent_store.hpp"
#include "test_util.hpp"

using namespace latentaug;
namespace fs = std::filesystem;

TEST(TemporalPool, MeanOfFrames) {
  std::vector<Eigen::VectorXf> frames{Eigen::Vector2f(1, 3), Eigen::Vector2f(3, 5)};
  EXPECT_EQ(temporal_pool(frames), Eigen::Vector2f(2, 4));
  std::vector<Eigen::VectorXf> single{Eigen::Vector2f(7.5f, -2.0f)};
  EXPECT_EQ(temporal_pool(single), Eigen::Vector2f(7.5f, -2.0f));
}

TEST(TemporalPool, Errors) {
  std::vector<Eigen::VectorXf> none;
  expect_error(ErrorKind::EmptyInput, [&] { temporal_pool(none); });
  std::vector<Eigen::VectorXf> ragged{Eigen::Vector2f(1, 2), Eigen::Vector3f(1, 2, 3)};
  expect_error(ErrorKind::DimensionMismatch, [&] { temporal_pool(ragged); });
}

TEST(TemporalPool, LawOfLargeNumbers) {
  Rng rng(11);
  std::vector<Eigen::VectorXf> frames;
  for (int i = 0; i < 10000; ++i) frames.push_back(rng.normal_matrix<float>(4, 1).col(0));
  const Eigen::VectorXf pooled = temporal_pool(frames);
  for (Index i = 0; i < pooled.size(); ++i) EXPECT_LT(std::abs(pooled[i]), 0.04f);
}

TEST(DatasetFile, SmallRoundTrip) {
  TempDir dir;
  DatasetManifest mf = DatasetManifest::with_default_names(3, 2, 1);
  std::vector<LatentRecord> recs{{Eigen::Vector3f(1.5f, -0.0f, 3e-38f), 0, 0, Split::train},
                                 {Eigen::Vector3f(-7.f, 2.f, 1e30f), 1, 0, Split::test}};
  const LatentDataset d = LatentDataset::from_records(recs, mf);
  const auto bytes = write_dataset(d, dir.path / "d.geld");
  EXPECT_EQ(bytes, kDatasetHeaderBytes + 2 * (9 + 12));
  const LatentDataset back = read_dataset(dir.path / "d.geld");
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_TRUE(bit_equal(back.records[i], d.records[i]));
  EXPECT_EQ(back.manifest, d.manifest);
}

TEST(DatasetFile, BadMagicAndTruncation) {
  TempDir dir;
  const LatentDataset d = random_dataset(5, 4, 2, 2, 7);
  write_dataset(d, dir.path / "d.geld");
  std::string bytes = read_bytes(dir.path / "d.geld");

  std::string bad = bytes;
  bad[0] = 'X';
  write_bytes(dir.path / "bad.geld", bad);
  fs::copy_file(manifest_path(dir.path / "d.geld"), manifest_path(dir.path / "bad.geld"));
  expect_error(ErrorKind::FormatError, [&] { read_dataset(dir.path / "bad.geld"); });

  // Cut inside record 2 (0-based) of 4.
  const std::size_t stride = 9 + 4 * 5;
  write_bytes(dir.path / "cut.geld", bytes.substr(0, kDatasetHeaderBytes + 2 * stride + 5));
  fs::copy_file(manifest_path(dir.path / "d.geld"), manifest_path(dir.path / "cut.geld"));
  try {
    read_dataset(dir.path / "cut.geld");
    FAIL() << "truncated file accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::FormatError);
    EXPECT_NE(std::string(e.what()).find("record 2"), std::string::npos) << e.what();
  }
}

TEST(DatasetFile, ManifestMismatchIsIntegrityError) {
  TempDir dir;
  const LatentDataset d = random_dataset(3, 6, 2, 2, 3);
  write_dataset(d, dir.path / "d.geld");
  DatasetManifest mf = d.manifest;
  mf.histogram[0] += 1;
  std::ofstream(manifest_path(dir.path / "d.geld")) << manifest_to_json(mf);
  expect_error(ErrorKind::IntegrityError, [&] { read_dataset(dir.path / "d.geld"); });
}

TEST(DatasetFile, MissingManifestIsFormatError) {
  TempDir dir;
  write_dataset(random_dataset(3, 2, 1, 1, 1), dir.path / "d.geld");
  fs::remove(manifest_path(dir.path / "d.geld"));
  expect_error(ErrorKind::FormatError, [&] { read_dataset(dir.path / "d.geld"); });
}

TEST(Synthetic, DeterministicAndCounted) {
  SyntheticSpec spec = transfer_family(6, 2, 2, 6.0, 3.0, 1.0, 5, 3, 42);
  const LatentDataset a = make_synthetic(spec);
  const LatentDataset b = make_synthetic(spec);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bit_equal(a.records[i], b.records[i]));
  EXPECT_EQ(a.manifest.total(Split::train), 20u);
  EXPECT_EQ(a.manifest.total(Split::test), 12u);
}

TEST(Synthetic, AllZeroTrainIsEmptyDataset) {
  SyntheticSpec spec = transfer_family(4, 2, 2, 6.0, 3.0, 1.0, 0, 3, 1);
  expect_error(ErrorKind::EmptyDataset, [&] { make_synthetic(spec); });
}

TEST(Synthetic, CellMeanAndCovarianceConverge) {
  SyntheticSpec spec = transfer_family(8, 2, 2, 6.0, 3.0, 1.0, 0, 0, 5);
  spec.n_train.assign(4, 0);
  spec.n_train[1 * 2 + 0] = 5000;  // class 1, subdomain 0
  const LatentDataset d = make_synthetic(spec);
  const Mat<float> x = d.stack([](const LatentRecord& r) { return r.class_id == 1 && r.subdomain_id == 0; });
  ASSERT_EQ(x.cols(), 5000);
  const Eigen::VectorXd mean = x.cast<double>().rowwise().mean();
  const Eigen::VectorXd truth = spec.cell_mean(1, 0).cast<double>();
  // 2000-sample bound of the contract, tighter at 5000.
  EXPECT_LT((mean - truth).cwiseAbs().maxCoeff(), 3.0 / std::sqrt(2000.0));
  const Eigen::MatrixXd centered = x.cast<double>().colwise() - mean;
  const Eigen::MatrixXd cov = centered * centered.transpose() / 4999.0;
  EXPECT_LT((cov - Eigen::MatrixXd::Identity(8, 8)).norm(), 0.15);
}

TEST(Synthetic, OffsetsHaveRequestedGeometry) {
  const SyntheticSpec spec = transfer_family(16, 4, 3, 6.0, 3.0, 1.0, 1, 1, 9);
  for (std::uint32_t a = 0; a < 4; ++a)
    for (std::uint32_t b = a + 1; b < 4; ++b)
      EXPECT_NEAR((spec.class_offsets[a] - spec.class_offsets[b]).norm(), 6.0, 1e-5);
  for (const auto& s : spec.subdomain_offsets) EXPECT_NEAR(s.norm(), 3.0, 1e-5);
}

namespace {

std::multiset<std::string> test_fingerprints(const LatentDataset& d) {
  std::multiset<std::string> out;
  for (const auto& r : d.records)
    if (r.split == Split::test) {
      std::string key(reinterpret_cast<const char*>(r.vector.data()), sizeof(float) * r.vector.size());
      key += std::to_string(r.class_id) + "/" + std::to_string(r.subdomain_id);
      out.insert(key);
    }
  return out;
}

}  // namespace

TEST(Scenario, NoneIsIdentity) {
  const LatentDataset d = make_synthetic(transfer_family(4, 3, 2, 6.0, 3.0, 1.0, 4, 2, 3));
  const LatentDataset s = apply_scenario(d, {});
  ASSERT_EQ(s.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_TRUE(bit_equal(s.records[i], d.records[i]));
}

TEST(Scenario, ZeroShotKeepsOnlyKeptClassInTarget) {
  const LatentDataset d = make_synthetic(transfer_family(4, 4, 3, 6.0, 3.0, 1.0, 10, 5, 3));
  ScenarioSpec sc{ScenarioKind::zero_shot, 2, 0, 0, 1};
  const LatentDataset s = apply_scenario(d, sc);
  std::set<std::uint32_t> target_classes;
  for (const auto& r : s.records)
    if (r.split == Split::train && r.subdomain_id == 2) target_classes.insert(r.class_id);
  EXPECT_EQ(target_classes, std::set<std::uint32_t>{0});
  EXPECT_EQ(s.manifest.count(0, 2, Split::train), 10u);
  EXPECT_EQ(s.manifest.count(1, 1, Split::train), 10u);
  EXPECT_EQ(test_fingerprints(s), test_fingerprints(d));
}

TEST(Scenario, KShotCountsAndDeterminism) {
  SyntheticSpec spec = transfer_family(4, 2, 2, 6.0, 3.0, 1.0, 7, 2, 3);
  const LatentDataset d = make_synthetic(spec);
  ScenarioSpec sc{ScenarioKind::k_shot, 1, 0, 1, 77};
  const LatentDataset a = apply_scenario(d, sc);
  const LatentDataset b = apply_scenario(d, sc);
  EXPECT_EQ(a.manifest.count(0, 1, Split::train), 1u);
  EXPECT_EQ(a.manifest.count(1, 1, Split::train), 1u);
  EXPECT_EQ(a.manifest.count(0, 0, Split::train), 7u);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bit_equal(a.records[i], b.records[i]));
  sc.shots = 100;
  EXPECT_EQ(apply_scenario(d, sc).manifest.count(1, 1, Split::train), 7u);
  EXPECT_EQ(test_fingerprints(a), test_fingerprints(d));
}

TEST(Scenario, KShotCellsAreIndependent) {
  const LatentDataset d = make_synthetic(transfer_family(4, 3, 2, 6.0, 3.0, 1.0, 9, 0, 3));
  ScenarioSpec sc{ScenarioKind::k_shot, 1, 0, 2, 5};
  const LatentDataset all = apply_scenario(d, sc);
  // Dropping class 2 from the source does not change what survives for class 0.
  std::vector<LatentRecord> fewer;
  for (const auto& r : d.records)
    if (r.class_id != 2) fewer.push_back(r);
  const LatentDataset reduced = apply_scenario(LatentDataset::from_records(fewer, d.manifest), sc);
  auto cell = [](const LatentDataset& x) {
    return x.stack([](const LatentRecord& r) { return r.class_id == 0 && r.subdomain_id == 1; });
  };
  EXPECT_EQ(cell(all), cell(reduced));
}

TEST(Scenario, InvalidIds) {
  const LatentDataset d = make_synthetic(transfer_family(4, 2, 2, 6.0, 3.0, 1.0, 3, 1, 3));
  expect_error(ErrorKind::InvalidScenario, [&] { apply_scenario(d, {ScenarioKind::zero_shot, 2, 0, 0, 0}); });
  expect_error(ErrorKind::InvalidScenario, [&] { apply_scenario(d, {ScenarioKind::zero_shot, 0, 5, 0, 0}); });
}

TEST(DatasetFile, RandomRoundTripsProperty) {
  TempDir dir;
  Rng rng(2024);
  for (int i = 0; i < 50; ++i) {
    const auto m = static_cast<std::uint32_t>(1 + rng.index(64));
    const auto n = static_cast<std::uint32_t>(rng.index(201));
    const LatentDataset d = random_dataset(m, n, 3, 2, rng.engine()());
    write_dataset(d, dir.path / "r.geld");
    const LatentDataset back = read_dataset(dir.path / "r.geld");
    ASSERT_EQ(back.size(), d.size());
    for (std::size_t r = 0; r < d.size(); ++r) ASSERT_TRUE(bit_equal(back.records[r], d.records[r]));
  }
}
