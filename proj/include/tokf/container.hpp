#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "tokf/errors.hpp"

namespace tokf {

// Checkpoint container: magic "TOKF", a version, a JSON config blob, then
// length-prefixed sections a reader can skip by tag. All integers little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kTensorSectionTag = 0x52534E54;     // "TNSR"
inline constexpr std::uint32_t kOptimizerSectionTag = 0x5354504F;  // "OPTS"

struct RawTensor {
  std::string name;
  int elem_width = 0;  // bytes per element: 4 or 8
  std::vector<std::int64_t> shape;
  std::vector<std::uint8_t> bytes;  // row-major little-endian payload
};

struct RawSection {
  std::uint32_t tag = 0;
  std::vector<std::uint8_t> payload;
};

struct RawCheckpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_json;
  std::vector<RawSection> sections;

  const RawSection* find(std::uint32_t tag) const {
    for (const RawSection& s : sections) {
      if (s.tag == tag) return &s;
    }
    return nullptr;
  }
};

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { append_le(v); }
  void u32(std::uint32_t v) { append_le(v); }
  void u64(std::uint64_t v) { append_le(v); }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void str16(const std::string& s) {
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }
  std::size_t size() const { return buf_.size(); }

 private:
  template <class V>
  void append_le(V v) {
    for (std::size_t i = 0; i < sizeof(V); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t len, std::string context)
      : data_(data), len_(len), context_(std::move(context)) {}

  std::uint8_t u8() {
    need(1);
    return data_[off_++];
  }
  std::uint16_t u16() { return read_le<std::uint16_t>(); }
  std::uint32_t u32() { return read_le<std::uint32_t>(); }
  std::uint64_t u64() { return read_le<std::uint64_t>(); }
  void raw(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, data_ + off_, n);
    off_ += n;
  }
  std::string str16() {
    const std::uint16_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + off_), n);
    off_ += n;
    return s;
  }
  std::size_t offset() const { return off_; }
  std::size_t remaining() const { return len_ - off_; }
  void need(std::size_t n) const {
    if (off_ + n > len_) {
      throw FormatError("checkpoint truncated: " + context_ + " needs " + std::to_string(n) +
                        " bytes at offset " + std::to_string(off_) + ", only " +
                        std::to_string(len_ - off_) + " left");
    }
  }

 private:
  template <class V>
  V read_le() {
    need(sizeof(V));
    V v = 0;
    for (std::size_t i = 0; i < sizeof(V); ++i) v |= static_cast<V>(data_[off_ + i]) << (8 * i);
    off_ += sizeof(V);
    return v;
  }
  const std::uint8_t* data_;
  std::size_t len_;
  std::size_t off_ = 0;
  std::string context_;
};

void write_checkpoint_file(const std::string& path, const RawCheckpoint& ckpt);
RawCheckpoint read_checkpoint_file(const std::string& path);
RawCheckpoint parse_checkpoint_bytes(const std::vector<std::uint8_t>& bytes);

// Tensor table codec used by both the model and optimizer-state sections:
// a directory (name, width, shape, offset) followed by one packed blob.
// Offsets are validated to be in-bounds and non-overlapping on decode.
std::vector<std::uint8_t> encode_tensor_table(const std::vector<RawTensor>& tensors);
std::vector<RawTensor> decode_tensor_table(ByteReader& reader);

}  // namespace tokf
