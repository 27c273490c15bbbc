// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include "latentaug/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace latentaug {

namespace {

void put(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t get(int n) {
    if (pos_ + static_cast<std::size_t>(n) > bytes_.size()) fail(ErrorKind::FormatError, "truncated checkpoint");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string take(std::size_t n) {
    if (pos_ + n > bytes_.size()) fail(ErrorKind::FormatError, "truncated checkpoint");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::string out(kCheckpointMagic, 4);
  put(out, kCheckpointVersion, 4);
  for (const auto& t : tensors) {
    require(t.name.size() <= 0xffff, ErrorKind::InvalidConfig, "tensor name too long");
    require(t.dims.size() <= 0xff, ErrorKind::InvalidConfig, "tensor rank too large");
    std::uint64_t n = 1;
    for (auto d : t.dims) n *= d;
    require(n == t.data.size(), ErrorKind::DimensionMismatch, "tensor " + t.name + " payload does not match dims");
    put(out, t.name.size(), 2);
    out += t.name;
    put(out, t.dims.size(), 1);
    for (auto d : t.dims) put(out, d, 4);
    for (float v : t.data) put(out, std::bit_cast<std::uint32_t>(v), 4);
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    fail(ErrorKind::FormatError, "bad checkpoint magic");
  Reader r(bytes);
  r.take(4);
  const auto version = r.get(4);
  if (version != kCheckpointVersion) fail(ErrorKind::FormatError, "unsupported checkpoint version");
  std::vector<NamedTensor> out;
  while (!r.done()) {
    NamedTensor t;
    t.name = r.take(r.get(2));
    const auto rank = r.get(1);
    std::uint64_t n = 1;
    for (std::uint64_t i = 0; i < rank; ++i) {
      t.dims.push_back(static_cast<std::uint32_t>(r.get(4)));
      n *= t.dims.back();
    }
    if (n * 4 > r.remaining()) fail(ErrorKind::FormatError, "truncated tensor " + t.name);
    t.data.resize(n);
    for (auto& v : t.data) v = std::bit_cast<float>(static_cast<std::uint32_t>(r.get(4)));
    out.push_back(std::move(t));
  }
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  const std::string bytes = encode_checkpoint(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::IoError, "cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::IoError, "cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

std::vector<NamedTensor> to_tensors(const ParamStore<float>& params) {
  std::vector<NamedTensor> out;
  for (const auto& p : params) {
    NamedTensor t;
    t.name = p.name;
    t.dims = {static_cast<std::uint32_t>(p.value.rows()), static_cast<std::uint32_t>(p.value.cols())};
    t.data.reserve(p.value.size());
    for (Index i = 0; i < p.value.rows(); ++i)
      for (Index j = 0; j < p.value.cols(); ++j) t.data.push_back(p.value(i, j));
    out.push_back(std::move(t));
  }
  return out;
}

NamedTensor make_tensor(std::string name, const std::vector<float>& values) {
  return {std::move(name), {static_cast<std::uint32_t>(values.size())}, values};
}

const NamedTensor& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  fail(ErrorKind::FormatError, "checkpoint lacks tensor " + name);
}

void load_tensors(ParamStore<float>& params, const std::vector<NamedTensor>& tensors) {
  for (auto& p : params) {
    const auto& t = find_tensor(tensors, p.name);
    if (t.dims.size() != 2 || t.dims[0] != p.value.rows() || t.dims[1] != p.value.cols())
      fail(ErrorKind::DimensionMismatch, "checkpoint tensor " + p.name + " has the wrong shape");
    for (Index i = 0; i < p.value.rows(); ++i)
      for (Index j = 0; j < p.value.cols(); ++j) p.value(i, j) = t.data[i * p.value.cols() + j];
  }
}

}  // namespace latentaug
