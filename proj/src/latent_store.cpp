// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include "latentaug/latent_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include <json.hpp>

#include "latentaug/error.hpp"
#include "latentaug/rng.hpp"

namespace latentaug {

namespace {

std::size_t hist_index(const DatasetManifest& m, std::uint32_t cls, std::uint32_t sub, Split split) {
  return (static_cast<std::size_t>(cls) * m.k + sub) * 2 + static_cast<std::size_t>(split);
}

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

bool bit_equal(const LatentRecord& a, const LatentRecord& b) {
  if (a.class_id != b.class_id || a.subdomain_id != b.subdomain_id || a.split != b.split) return false;
  if (a.vector.size() != b.vector.size()) return false;
  return std::memcmp(a.vector.data(), b.vector.data(), sizeof(float) * a.vector.size()) == 0;
}

DatasetManifest DatasetManifest::with_default_names(std::uint32_t m, std::uint32_t c, std::uint32_t k) {
  DatasetManifest out;
  out.m = m;
  out.c = c;
  out.k = k;
  for (std::uint32_t i = 0; i < c; ++i) out.class_names.push_back("class" + std::to_string(i));
  for (std::uint32_t i = 0; i < k; ++i) out.subdomain_names.push_back("subdomain" + std::to_string(i));
  out.histogram.assign(static_cast<std::size_t>(c) * k * 2, 0);
  return out;
}

std::uint64_t DatasetManifest::count(std::uint32_t cls, std::uint32_t sub, Split split) const {
  return histogram.at(hist_index(*this, cls, sub, split));
}

std::uint64_t& DatasetManifest::count(std::uint32_t cls, std::uint32_t sub, Split split) {
  return histogram.at(hist_index(*this, cls, sub, split));
}

std::uint64_t DatasetManifest::total() const {
  return std::accumulate(histogram.begin(), histogram.end(), std::uint64_t{0});
}

std::uint64_t DatasetManifest::total(Split split) const {
  std::uint64_t n = 0;
  for (std::uint32_t cls = 0; cls < c; ++cls)
    for (std::uint32_t sub = 0; sub < k; ++sub) n += count(cls, sub, split);
  return n;
}

std::vector<std::uint64_t> DatasetManifest::class_counts(Split split) const {
  std::vector<std::uint64_t> out(c, 0);
  for (std::uint32_t cls = 0; cls < c; ++cls)
    for (std::uint32_t sub = 0; sub < k; ++sub) out[cls] += count(cls, sub, split);
  return out;
}

void recount(DatasetManifest& manifest, std::span<const LatentRecord> records) {
  manifest.histogram.assign(static_cast<std::size_t>(manifest.c) * manifest.k * 2, 0);
  for (const auto& r : records) {
    require(r.class_id < manifest.c && r.subdomain_id < manifest.k, ErrorKind::IntegrityError,
            "record label out of range");
    ++manifest.count(r.class_id, r.subdomain_id, r.split);
  }
}

LatentDataset LatentDataset::from_records(std::vector<LatentRecord> records, DatasetManifest manifest) {
  recount(manifest, records);
  LatentDataset out{std::move(records), std::move(manifest)};
  out.validate();
  return out;
}

void LatentDataset::validate() const {
  const auto& mf = manifest;
  require(mf.class_names.size() == mf.c && mf.subdomain_names.size() == mf.k, ErrorKind::IntegrityError,
          "manifest name lists do not match class/subdomain counts");
  require(mf.histogram.size() == static_cast<std::size_t>(mf.c) * mf.k * 2, ErrorKind::IntegrityError,
          "manifest histogram has wrong shape");
  DatasetManifest counted = mf;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    require(r.vector.size() == static_cast<Index>(mf.m), ErrorKind::DimensionMismatch,
            "record " + std::to_string(i) + " has length " + std::to_string(r.vector.size()) +
                ", expected " + std::to_string(mf.m));
    require(r.vector.allFinite(), ErrorKind::IntegrityError, "record " + std::to_string(i) + " is not finite");
  }
  recount(counted, records);
  require(counted.histogram == mf.histogram, ErrorKind::IntegrityError,
          "manifest histogram disagrees with records");
}

Mat<float> LatentDataset::stack(const std::function<bool(const LatentRecord&)>& keep,
                                std::vector<std::uint32_t>* class_ids,
                                std::vector<std::uint32_t>* subdomain_ids) const {
  std::vector<const LatentRecord*> chosen;
  for (const auto& r : records)
    if (keep(r)) chosen.push_back(&r);
  Mat<float> out(manifest.m, static_cast<Index>(chosen.size()));
  if (class_ids) class_ids->clear();
  if (subdomain_ids) subdomain_ids->clear();
  for (std::size_t j = 0; j < chosen.size(); ++j) {
    out.col(static_cast<Index>(j)) = chosen[j]->vector;
    if (class_ids) class_ids->push_back(chosen[j]->class_id);
    if (subdomain_ids) subdomain_ids->push_back(chosen[j]->subdomain_id);
  }
  return out;
}

Eigen::VectorXf temporal_pool(std::span<const Eigen::VectorXf> frames) {
  require(!frames.empty(), ErrorKind::EmptyInput, "temporal_pool needs at least one frame");
  const Index m = frames.front().size();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(m);
  for (const auto& f : frames) {
    require(f.size() == m, ErrorKind::DimensionMismatch, "ragged frame lengths");
    acc += f.cast<double>();
  }
  return (acc / static_cast<double>(frames.size())).cast<float>();
}

// ---------------------------------------------------------------------------
// GELD format

std::filesystem::path manifest_path(const std::filesystem::path& data_path) {
  auto p = data_path;
  p.replace_extension(".manifest");
  return p;
}

std::string manifest_to_json(const DatasetManifest& mf) {
  nlohmann::json hist = nlohmann::json::array();
  for (std::uint32_t cls = 0; cls < mf.c; ++cls) {
    nlohmann::json row = nlohmann::json::array();
    for (std::uint32_t sub = 0; sub < mf.k; ++sub)
      row.push_back({mf.count(cls, sub, Split::train), mf.count(cls, sub, Split::test)});
    hist.push_back(row);
  }
  nlohmann::ordered_json j;
  j["m"] = mf.m;
  j["c"] = mf.c;
  j["k"] = mf.k;
  j["class_names"] = mf.class_names;
  j["subdomain_names"] = mf.subdomain_names;
  j["histogram"] = hist;
  j["source_tag"] = mf.source_tag;
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    DatasetManifest mf;
    mf.m = j.at("m").get<std::uint32_t>();
    mf.c = j.at("c").get<std::uint32_t>();
    mf.k = j.at("k").get<std::uint32_t>();
    mf.class_names = j.at("class_names").get<std::vector<std::string>>();
    mf.subdomain_names = j.at("subdomain_names").get<std::vector<std::string>>();
    mf.source_tag = j.value("source_tag", std::string{});
    mf.histogram.assign(static_cast<std::size_t>(mf.c) * mf.k * 2, 0);
    const auto& hist = j.at("histogram");
    if (hist.size() != mf.c) fail(ErrorKind::IntegrityError, "manifest histogram has wrong class count");
    for (std::uint32_t cls = 0; cls < mf.c; ++cls) {
      if (hist[cls].size() != mf.k) fail(ErrorKind::IntegrityError, "manifest histogram has wrong subdomain count");
      for (std::uint32_t sub = 0; sub < mf.k; ++sub) {
        const auto& cell = hist[cls][sub];
        if (cell.size() != 2) fail(ErrorKind::IntegrityError, "manifest histogram cell must be [train, test]");
        const auto train = cell[0].get<std::int64_t>();
        const auto test = cell[1].get<std::int64_t>();
        if (train < 0 || test < 0) fail(ErrorKind::IntegrityError, "negative histogram entry");
        mf.count(cls, sub, Split::train) = static_cast<std::uint64_t>(train);
        mf.count(cls, sub, Split::test) = static_cast<std::uint64_t>(test);
      }
    }
    return mf;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::FormatError, std::string("malformed manifest: ") + e.what());
  }
}

std::uint64_t write_dataset(const LatentDataset& dataset, const std::filesystem::path& path) {
  dataset.validate();
  const auto& mf = dataset.manifest;
  std::string out;
  out.reserve(kDatasetHeaderBytes + dataset.records.size() * (9 + 4 * std::size_t{mf.m}));
  out.append(kDatasetMagic, 4);
  put_u32(out, kDatasetVersion);
  put_u32(out, mf.m);
  put_u32(out, mf.c);
  put_u32(out, mf.k);
  put_u64(out, dataset.records.size());
  for (const auto& r : dataset.records) {
    put_u32(out, r.class_id);
    put_u32(out, r.subdomain_id);
    put_u8(out, static_cast<std::uint8_t>(r.split));
    for (Index i = 0; i < r.vector.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(r.vector[i]));
  }
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorKind::IoError, "cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) fail(ErrorKind::IoError, "short write to " + path.string());
  }
  {
    std::ofstream f(manifest_path(path), std::ios::trunc);
    if (!f) fail(ErrorKind::IoError, "cannot write manifest for " + path.string());
    f << manifest_to_json(mf);
  }
  return out.size();
}

LatentDataset read_dataset(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < kDatasetHeaderBytes) fail(ErrorKind::FormatError, "file shorter than header");
  if (std::memcmp(p, kDatasetMagic, 4) != 0) fail(ErrorKind::FormatError, "bad magic");
  const std::uint32_t version = get_u32(p + 4);
  if (version != kDatasetVersion) fail(ErrorKind::FormatError, "unsupported version " + std::to_string(version));
  const std::uint32_t m = get_u32(p + 8);
  const std::uint32_t c = get_u32(p + 12);
  const std::uint32_t k = get_u32(p + 16);
  const std::uint64_t n = get_u64(p + 20);
  const std::uint64_t stride = 9 + 4 * std::uint64_t{m};
  const std::uint64_t available = (bytes.size() - kDatasetHeaderBytes) / stride;
  if (available < n)
    fail(ErrorKind::FormatError, "truncated at record " + std::to_string(available) + " of " + std::to_string(n));
  if (kDatasetHeaderBytes + n * stride != bytes.size()) fail(ErrorKind::FormatError, "trailing bytes after records");

  std::vector<LatentRecord> records(n);
  const unsigned char* q = p + kDatasetHeaderBytes;
  for (std::uint64_t i = 0; i < n; ++i, q += stride) {
    auto& r = records[i];
    r.class_id = get_u32(q);
    r.subdomain_id = get_u32(q + 4);
    const std::uint8_t split = q[8];
    if (split > 1) fail(ErrorKind::FormatError, "record " + std::to_string(i) + " has invalid split tag");
    r.split = static_cast<Split>(split);
    if (r.class_id >= c || r.subdomain_id >= k)
      fail(ErrorKind::IntegrityError, "record " + std::to_string(i) + " label out of range");
    r.vector.resize(m);
    for (std::uint32_t d = 0; d < m; ++d) r.vector[d] = std::bit_cast<float>(get_u32(q + 9 + 4 * d));
  }

  const auto mpath = manifest_path(path);
  if (!std::filesystem::exists(mpath)) fail(ErrorKind::FormatError, "missing manifest " + mpath.string());
  DatasetManifest mf = manifest_from_json(read_file(mpath));
  if (mf.m != m || mf.c != c || mf.k != k)
    fail(ErrorKind::IntegrityError, "manifest dimensions disagree with binary header");
  LatentDataset out{std::move(records), std::move(mf)};
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

void SyntheticSpec::set_uniform_counts(std::uint32_t train, std::uint32_t test) {
  n_train.assign(static_cast<std::size_t>(c) * k, train);
  n_test.assign(static_cast<std::size_t>(c) * k, test);
}

Eigen::VectorXf SyntheticSpec::cell_mean(std::uint32_t cls, std::uint32_t sub) const {
  return class_offsets.at(cls) + subdomain_offsets.at(sub);
}

SyntheticSpec transfer_family(std::uint32_t m, std::uint32_t c, std::uint32_t k, double class_distance,
                              double subdomain_norm, double per_cell_std, std::uint32_t n_train,
                              std::uint32_t n_test, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.m = m;
  spec.c = c;
  spec.k = k;
  spec.per_cell_std = per_cell_std;
  spec.seed = seed;
  Rng rng(seed, {purpose_tag("synthetic.offsets")});
  auto random_direction = [&](double norm) {
    Eigen::VectorXf v = rng.normal_matrix<float>(m, 1);
    return Eigen::VectorXf(v * static_cast<float>(norm / v.norm()));
  };
  // e_i * d / sqrt(2) puts every pair of classes at distance d.
  const auto class_scale = static_cast<float>(class_distance / std::sqrt(2.0));
  for (std::uint32_t i = 0; i < c; ++i) {
    if (c <= m) {
      spec.class_offsets.push_back(Eigen::VectorXf::Unit(m, i) * class_scale);
    } else {
      spec.class_offsets.push_back(random_direction(class_distance / std::sqrt(2.0)));
    }
  }
  for (std::uint32_t i = 0; i < k; ++i) {
    spec.subdomain_offsets.push_back(random_direction(subdomain_norm));
  }
  spec.set_uniform_counts(n_train, n_test);
  return spec;
}

LatentDataset make_synthetic(const SyntheticSpec& spec) {
  require(spec.m >= 1 && spec.c >= 1 && spec.k >= 1, ErrorKind::InvalidConfig, "synthetic dims must be positive");
  require(spec.class_offsets.size() == spec.c && spec.subdomain_offsets.size() == spec.k, ErrorKind::InvalidConfig,
          "offset lists must have C and K entries");
  for (const auto& v : spec.class_offsets)
    require(v.size() == static_cast<Index>(spec.m), ErrorKind::InvalidConfig, "class offset length != M");
  for (const auto& v : spec.subdomain_offsets)
    require(v.size() == static_cast<Index>(spec.m), ErrorKind::InvalidConfig, "subdomain offset length != M");
  require(spec.per_cell_std > 0 && std::isfinite(spec.per_cell_std), ErrorKind::InvalidConfig,
          "per_cell_std must be positive");
  const std::size_t cells = static_cast<std::size_t>(spec.c) * spec.k;
  require(spec.n_train.size() == cells && spec.n_test.size() == cells, ErrorKind::InvalidConfig,
          "count tables must have C*K entries");
  require(std::any_of(spec.n_train.begin(), spec.n_train.end(), [](auto n) { return n > 0; }),
          ErrorKind::EmptyDataset, "every cell has zero training samples");

  std::vector<LatentRecord> records;
  const auto sd = static_cast<float>(spec.per_cell_std);
  for (std::uint32_t cls = 0; cls < spec.c; ++cls) {
    for (std::uint32_t sub = 0; sub < spec.k; ++sub) {
      const Eigen::VectorXf mean = spec.cell_mean(cls, sub);
      for (Split split : {Split::train, Split::test}) {
        const std::size_t cell = static_cast<std::size_t>(cls) * spec.k + sub;
        const std::uint32_t n = split == Split::train ? spec.n_train[cell] : spec.n_test[cell];
        Rng rng(spec.seed, {purpose_tag("synthetic.cell"), cls, sub, static_cast<std::uint64_t>(split)});
        for (std::uint32_t i = 0; i < n; ++i) {
          Eigen::VectorXf v = mean + sd * rng.normal_matrix<float>(spec.m, 1);
          records.push_back({std::move(v), cls, sub, split});
        }
      }
    }
  }
  auto mf = DatasetManifest::with_default_names(spec.m, spec.c, spec.k);
  mf.source_tag = "synthetic seed=" + std::to_string(spec.seed);
  return LatentDataset::from_records(std::move(records), std::move(mf));
}

// ---------------------------------------------------------------------------
// Scenarios

LatentDataset apply_scenario(const LatentDataset& dataset, const ScenarioSpec& scenario) {
  const auto& mf = dataset.manifest;
  if (scenario.kind == ScenarioKind::none) return dataset;
  require(scenario.target_subdomain < mf.k, ErrorKind::InvalidScenario,
          "target subdomain " + std::to_string(scenario.target_subdomain) + " >= K");
  require(scenario.kept_class < mf.c, ErrorKind::InvalidScenario,
          "kept class " + std::to_string(scenario.kept_class) + " >= C");

  std::vector<bool> keep(dataset.records.size(), true);
  if (scenario.kind == ScenarioKind::zero_shot) {
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
      const auto& r = dataset.records[i];
      if (r.split == Split::train && r.subdomain_id == scenario.target_subdomain &&
          r.class_id != scenario.kept_class)
        keep[i] = false;
    }
  } else {
    for (std::uint32_t cls = 0; cls < mf.c; ++cls) {
      std::vector<std::size_t> cell;
      for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        const auto& r = dataset.records[i];
        if (r.split == Split::train && r.subdomain_id == scenario.target_subdomain && r.class_id == cls)
          cell.push_back(i);
      }
      if (cell.size() <= scenario.shots) continue;
      // Partial Fisher-Yates over a stream owned by this cell alone.
      Rng rng(scenario.seed, {purpose_tag("scenario.kshot"), cls, scenario.target_subdomain});
      for (std::size_t i = 0; i < scenario.shots; ++i) std::swap(cell[i], cell[i + rng.index(cell.size() - i)]);
      for (std::size_t i = scenario.shots; i < cell.size(); ++i) keep[cell[i]] = false;
    }
  }

  std::vector<LatentRecord> records;
  for (std::size_t i = 0; i < dataset.records.size(); ++i)
    if (keep[i]) records.push_back(dataset.records[i]);
  return LatentDataset::from_records(std::move(records), mf);
}

}  // namespace latentaug
