// Copyright 2026 The tclif-eprop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dataset ingestion: IDX (MNIST) parsing, chunking images into frame
// sequences, fixed pixel permutations, and the SPKEV1 spike-event container
// with time binning.
//
// SPKEV1 layout (little-endian):
//   "SPKEV1\0\0" | u32 version=1 | u32 num_samples | u32 num_channels |
//   u64 sample_duration_us | per sample: u32 label, u32 num_events,
//   num_events x (u64 time_us, u16 channel) | u32 CRC32 of all prior bytes

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tclif/errors.hpp"
#include "tclif/tensor.hpp"

namespace tclif {

// ---------------------------------------------------------------------------
// Byte helpers

namespace io {

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Reads a whole file; paths ending in ".gz" are inflated transparently.
inline std::vector<std::uint8_t> read_file(const std::string& path) {
  if (!std::filesystem::exists(path)) throw DataError("no such file: " + path);
  std::vector<std::uint8_t> out;
  if (has_suffix(path, ".gz")) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (f == nullptr) throw DataError("cannot open " + path);
    std::array<std::uint8_t, 1 << 16> buf{};
    for (;;) {
      const int n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()));
      if (n < 0) {
        gzclose(f);
        throw FormatError("corrupt gzip stream in " + path);
      }
      if (n == 0) break;
      out.insert(out.end(), buf.begin(), buf.begin() + n);
    }
    gzclose(f);
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  in.seekg(0, std::ios::end);
  out.resize(static_cast<std::size_t>(in.tellg()));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
  return out;
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  if (has_suffix(path, ".gz")) {
    gzFile f = gzopen(path.c_str(), "wb9");
    if (f == nullptr) throw DataError("cannot write " + path);
    if (!bytes.empty() &&
        gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size())) == 0) {
      gzclose(f);
      throw DataError("short write to " + path);
    }
    gzclose(f);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void le(std::uint64_t v, int width) {
    for (int k = 0; k < width; ++k) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void be(std::uint64_t v, int width) {
    for (int k = width - 1; k >= 0; --k)
      buf_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    le(bits, 8);
  }
  const std::vector<std::uint8_t>& data() const { return buf_; }
  std::vector<std::uint8_t>& data() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  std::uint64_t le(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int k = 0; k < width; ++k) v |= std::uint64_t{bytes_[pos_ + k]} << (8 * k);
    pos_ += width;
    return v;
  }
  std::uint64_t be(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int k = 0; k < width; ++k) v = (v << 8) | bytes_[pos_ + k];
    pos_ += width;
    return v;
  }
  double f64() {
    const std::uint64_t bits = le(8);
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw LengthError(what_ + ": truncated at byte " + std::to_string(pos_));
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace io

// ---------------------------------------------------------------------------
// IDX

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxArray {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;  // unsigned-byte payload
};

inline IdxArray parse_idx(std::span<const std::uint8_t> bytes, std::uint32_t expected_magic,
                          const std::string& what) {
  io::Reader r(bytes, what);
  const auto magic = static_cast<std::uint32_t>(r.be(4));
  if (magic != expected_magic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad IDX magic 0x%08x (expected 0x%08x)", magic,
                  expected_magic);
    throw FormatError(what + ": " + buf);
  }
  IdxArray arr;
  const std::uint32_t ndim = magic & 0xffu;
  std::size_t count = 1;
  for (std::uint32_t k = 0; k < ndim; ++k) {
    arr.dims.push_back(static_cast<std::uint32_t>(r.be(4)));
    count *= arr.dims.back();
  }
  auto payload = r.take(count);
  arr.data.assign(payload.begin(), payload.end());
  return arr;
}

inline std::vector<std::uint8_t> encode_idx(const IdxArray& arr) {
  io::Writer w;
  w.be(0x00000800u | static_cast<std::uint32_t>(arr.dims.size()), 4);
  for (auto d : arr.dims) w.be(d, 4);
  w.bytes(arr.data);
  return w.data();
}

inline void write_idx(const std::string& path, const IdxArray& arr) {
  io::write_file(path, encode_idx(arr));
}

struct MnistSet {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count x rows x cols
  std::vector<std::uint8_t> labels;

  std::span<const std::uint8_t> image(std::size_t n) const {
    return {pixels.data() + n * rows * cols, rows * cols};
  }
};

inline MnistSet load_mnist_idx(const std::string& images_path,
                               const std::string& labels_path) {
  const IdxArray images =
      parse_idx(io::read_file(images_path), kIdxImagesMagic, images_path);
  const IdxArray labels =
      parse_idx(io::read_file(labels_path), kIdxLabelsMagic, labels_path);
  if (images.dims.size() != 3 || labels.dims.size() != 1 ||
      images.dims[0] != labels.dims[0])
    throw FormatError("IDX image and label files disagree on sample count");
  MnistSet set;
  set.count = images.dims[0];
  set.rows = images.dims[1];
  set.cols = images.dims[2];
  set.pixels = images.data;
  set.labels = labels.data;
  return set;
}

// Looks for the standard MNIST file names, plain or gzipped, under `dir`.
inline MnistSet load_mnist_dir(const std::string& dir, bool train) {
  const std::string stem = train ? "train" : "t10k";
  for (const std::string ext : {"", ".gz"}) {
    const std::string img = dir + "/" + stem + "-images-idx3-ubyte" + ext;
    const std::string lab = dir + "/" + stem + "-labels-idx1-ubyte" + ext;
    if (std::filesystem::exists(img) && std::filesystem::exists(lab))
      return load_mnist_idx(img, lab);
  }
  throw DataError("MNIST " + stem + " files not found under '" + dir + "'");
}

// ---------------------------------------------------------------------------
// Chunking and permutation

inline std::size_t num_frames(std::size_t length, std::size_t frame_size) {
  return (length + frame_size - 1) / frame_size;
}

// Splits a flattened image into ceil(n / k) frames of k values, zero-padding
// the last frame.
template <typename T>
std::vector<T> sequentialize(std::span<const T> flat, std::size_t frame_size) {
  if (frame_size < 1 || frame_size > flat.size())
    throw ParameterError("sequentialize: frame size must lie in [1, " +
                         std::to_string(flat.size()) + "]");
  std::vector<T> out(num_frames(flat.size(), frame_size) * frame_size, T{});
  std::copy(flat.begin(), flat.end(), out.begin());
  return out;
}

struct PermutationSpec {
  std::vector<std::uint32_t> perm;
  std::uint64_t seed = 0;

  // Fisher-Yates driven directly by mt19937_64 output so the permutation for
  // a seed does not depend on the standard library's distribution code.
  static PermutationSpec from_seed(std::uint64_t seed, std::size_t n = 784) {
    PermutationSpec spec;
    spec.seed = seed;
    spec.perm.resize(n);
    std::iota(spec.perm.begin(), spec.perm.end(), 0u);
    std::mt19937_64 engine(seed);
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(engine() % i);
      std::swap(spec.perm[i - 1], spec.perm[j]);
    }
    return spec;
  }

  static PermutationSpec identity(std::size_t n = 784) {
    PermutationSpec spec;
    spec.perm.resize(n);
    std::iota(spec.perm.begin(), spec.perm.end(), 0u);
    return spec;
  }

  PermutationSpec inverse() const {
    PermutationSpec inv;
    inv.seed = seed;
    inv.perm.resize(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv.perm[perm[i]] = static_cast<std::uint32_t>(i);
    return inv;
  }

  bool is_bijection() const {
    std::vector<bool> seen(perm.size(), false);
    for (auto p : perm) {
      if (p >= perm.size() || seen[p]) return false;
      seen[p] = true;
    }
    return true;
  }
};

// out[i] = in[perm[i]]
template <typename T>
std::vector<T> permute(std::span<const T> in, const PermutationSpec& spec) {
  check_shape(in.size() == spec.perm.size(), "permute: length mismatch");
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[spec.perm[i]];
  return out;
}

// ---------------------------------------------------------------------------
// Spike events

struct SpikeEvent {
  std::uint64_t time_us = 0;
  std::uint16_t channel = 0;
  friend bool operator==(const SpikeEvent&, const SpikeEvent&) = default;
};

struct EventStream {
  std::vector<SpikeEvent> events;
  std::uint32_t label = 0;
  friend bool operator==(const EventStream&, const EventStream&) = default;
};

struct SpikeDataset {
  std::uint32_t num_channels = 700;
  std::uint64_t sample_duration_us = 0;  // 0: derive from each sample
  std::vector<EventStream> samples;
  friend bool operator==(const SpikeDataset&, const SpikeDataset&) = default;
};

inline constexpr std::array<std::uint8_t, 8> kSpkevMagic = {'S', 'P', 'K', 'E',
                                                            'V', '1', 0, 0};
inline constexpr std::uint32_t kSpkevVersion = 1;

inline std::vector<std::uint8_t> encode_spike_events(const SpikeDataset& ds) {
  io::Writer w;
  w.bytes(kSpkevMagic);
  w.le(kSpkevVersion, 4);
  w.le(ds.samples.size(), 4);
  w.le(ds.num_channels, 4);
  w.le(ds.sample_duration_us, 8);
  for (const auto& s : ds.samples) {
    w.le(s.label, 4);
    w.le(s.events.size(), 4);
    for (const auto& e : s.events) {
      w.le(e.time_us, 8);
      w.le(e.channel, 2);
    }
  }
  w.le(io::crc32(w.data()), 4);
  return w.data();
}

inline SpikeDataset decode_spike_events(std::span<const std::uint8_t> bytes,
                                        const std::string& what = "SPKEV1") {
  io::Reader r(bytes, what);
  auto magic = r.take(kSpkevMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kSpkevMagic.begin()))
    throw FormatError(what + ": bad magic");
  const auto version = static_cast<std::uint32_t>(r.le(4));
  if (version != kSpkevVersion)
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  SpikeDataset ds;
  const auto num_samples = static_cast<std::uint32_t>(r.le(4));
  ds.num_channels = static_cast<std::uint32_t>(r.le(4));
  ds.sample_duration_us = r.le(8);
  ds.samples.resize(num_samples);
  for (auto& s : ds.samples) {
    s.label = static_cast<std::uint32_t>(r.le(4));
    const auto n = static_cast<std::uint32_t>(r.le(4));
    if (r.remaining() < std::size_t{n} * 10)
      throw LengthError(what + ": truncated event list");
    s.events.resize(n);
    for (auto& e : s.events) {
      e.time_us = r.le(8);
      e.channel = static_cast<std::uint16_t>(r.le(2));
    }
  }
  const std::size_t body = r.pos();
  const auto stored = static_cast<std::uint32_t>(r.le(4));
  if (stored != io::crc32(bytes.first(body)))
    throw CorruptionError(what + ": CRC32 mismatch");
  for (auto& s : ds.samples) {
    for (const auto& e : s.events)
      if (e.channel >= ds.num_channels)
        throw FormatError(what + ": channel " + std::to_string(e.channel) +
                          " out of range");
    std::stable_sort(s.events.begin(), s.events.end(),
                     [](const SpikeEvent& a, const SpikeEvent& b) {
                       return a.time_us < b.time_us;
                     });
  }
  return ds;
}

inline SpikeDataset load_spike_events(const std::string& path) {
  return decode_spike_events(io::read_file(path), path);
}

inline void write_spike_events(const std::string& path, const SpikeDataset& ds) {
  io::write_file(path, encode_spike_events(ds));
}

// Counts events per (bin, channel); bin = floor(time / duration * num_bins),
// clipped to the last bin. A zero duration falls back to the stream's last
// event time. Output is num_bins x num_channels, row-major.
inline std::vector<double> bin_events(const EventStream& stream, std::size_t num_bins,
                                      std::uint64_t duration_us,
                                      std::size_t num_channels = 700,
                                      bool binary = false) {
  if (num_bins < 1) throw ParameterError("bin_events: num_bins must be >= 1");
  std::vector<double> out(num_bins * num_channels, 0.0);
  if (stream.events.empty()) return out;
  double duration = static_cast<double>(duration_us);
  if (duration_us == 0) {
    std::uint64_t last = 0;
    for (const auto& e : stream.events) last = std::max(last, e.time_us);
    duration = static_cast<double>(last) + 1.0;
  }
  for (const auto& e : stream.events) {
    if (e.channel >= num_channels) throw ShapeError("bin_events: channel out of range");
    auto bin = static_cast<std::size_t>(
        std::floor(static_cast<double>(e.time_us) / duration * static_cast<double>(num_bins)));
    bin = std::min(bin, num_bins - 1);
    double& cell = out[bin * num_channels + e.channel];
    cell = binary ? 1.0 : cell + 1.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sequence sources and batches

// Dense input tensor laid out time-major: x[t][b][i].
struct SequenceBatch {
  std::size_t t_len = 0;
  std::size_t batch = 0;
  std::size_t input_dim = 0;
  std::vector<double> x;
  std::vector<int> labels;

  MatrixView frame(std::size_t t) const {
    return {x.data() + t * batch * input_dim, batch, input_dim};
  }
};

// A dataset viewed as fixed-length real sequences.
class SequenceSource {
 public:
  virtual ~SequenceSource() = default;
  virtual std::size_t size() const = 0;
  virtual std::size_t t_len() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual int label(std::size_t n) const = 0;
  // Writes sample n as t_len x input_dim values.
  virtual void fill(std::size_t n, std::span<double> out) const = 0;
};

// MNIST-style images streamed in frames of `frame_size` pixels, optionally
// after a fixed pixel permutation. Pixels are scaled by 1/255 on demand.
class ImageSequences : public SequenceSource {
 public:
  ImageSequences(MnistSet set, std::size_t frame_size,
                 std::optional<PermutationSpec> perm = std::nullopt,
                 std::size_t limit = 0)
      : set_(std::move(set)), frame_size_(frame_size), perm_(std::move(perm)) {
    const std::size_t n = set_.rows * set_.cols;
    if (frame_size_ < 1 || frame_size_ > n)
      throw ParameterError("frame size must lie in [1, " + std::to_string(n) + "]");
    if (perm_ && perm_->perm.size() != n)
      throw ParameterError("permutation length does not match image size");
    count_ = limit == 0 ? set_.count : std::min(limit, set_.count);
  }

  std::size_t size() const override { return count_; }
  std::size_t t_len() const override {
    return num_frames(set_.rows * set_.cols, frame_size_);
  }
  std::size_t input_dim() const override { return frame_size_; }
  std::size_t num_classes() const override { return 10; }
  int label(std::size_t n) const override { return set_.labels[n]; }

  void fill(std::size_t n, std::span<double> out) const override {
    const auto img = set_.image(n);
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < img.size(); ++i) {
      const std::size_t src = perm_ ? perm_->perm[i] : i;
      out[i] = static_cast<double>(img[src]) / 255.0;
    }
  }

 private:
  MnistSet set_;
  std::size_t frame_size_;
  std::optional<PermutationSpec> perm_;
  std::size_t count_ = 0;
};

// Spike-event samples binned into num_bins x num_channels frames.
class EventSequences : public SequenceSource {
 public:
  EventSequences(SpikeDataset ds, std::size_t num_bins, bool binary = false,
                 std::size_t limit = 0, std::size_t num_classes = 20)
      : ds_(std::move(ds)), num_bins_(num_bins), binary_(binary),
        num_classes_(num_classes) {
    count_ = limit == 0 ? ds_.samples.size() : std::min(limit, ds_.samples.size());
  }

  std::size_t size() const override { return count_; }
  std::size_t t_len() const override { return num_bins_; }
  std::size_t input_dim() const override { return ds_.num_channels; }
  std::size_t num_classes() const override { return num_classes_; }
  int label(std::size_t n) const override {
    return static_cast<int>(ds_.samples[n].label);
  }

  void fill(std::size_t n, std::span<double> out) const override {
    const auto binned = bin_events(ds_.samples[n], num_bins_, ds_.sample_duration_us,
                                   ds_.num_channels, binary_);
    std::copy(binned.begin(), binned.end(), out.begin());
  }

 private:
  SpikeDataset ds_;
  std::size_t num_bins_;
  bool binary_;
  std::size_t num_classes_;
  std::size_t count_ = 0;
};

inline SequenceBatch make_batch(const SequenceSource& src,
                                std::span<const std::size_t> indices) {
  SequenceBatch batch;
  batch.t_len = src.t_len();
  batch.batch = indices.size();
  batch.input_dim = src.input_dim();
  batch.x.assign(batch.t_len * batch.batch * batch.input_dim, 0.0);
  std::vector<double> sample(batch.t_len * batch.input_dim);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    src.fill(indices[b], sample);
    batch.labels.push_back(src.label(indices[b]));
    for (std::size_t t = 0; t < batch.t_len; ++t)
      std::copy_n(sample.begin() + t * batch.input_dim, batch.input_dim,
                  batch.x.begin() + (t * batch.batch + b) * batch.input_dim);
  }
  return batch;
}

}  // namespace tclif
