#include "tokf/container.hpp"

#include <cstdio>
#include <fstream>

namespace tokf {

namespace {
constexpr char kMagic[4] = {'T', 'O', 'K', 'F'};
}

std::vector<std::uint8_t> encode_tensor_table(const std::vector<RawTensor>& tensors) {
  ByteWriter dir;
  dir.u64(tensors.size());
  std::uint64_t offset = 0;
  for (const RawTensor& t : tensors) {
    dir.str16(t.name);
    dir.u8(static_cast<std::uint8_t>(t.elem_width));
    dir.u8(static_cast<std::uint8_t>(t.shape.size()));
    for (std::int64_t e : t.shape) dir.u64(static_cast<std::uint64_t>(e));
    dir.u64(offset);
    offset += t.bytes.size();
  }
  dir.u64(offset);  // blob length
  for (const RawTensor& t : tensors) dir.raw(t.bytes.data(), t.bytes.size());
  return dir.take();
}

std::vector<RawTensor> decode_tensor_table(ByteReader& reader) {
  const std::uint64_t count = reader.u64();
  std::vector<RawTensor> tensors;
  tensors.reserve(count);
  std::vector<std::uint64_t> offsets;
  offsets.reserve(count);
  std::uint64_t expected_offset = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    RawTensor t;
    t.name = reader.str16();
    t.elem_width = reader.u8();
    if (t.elem_width != 4 && t.elem_width != 8) {
      throw FormatError("tensor '" + t.name + "' has unsupported element width " +
                        std::to_string(t.elem_width));
    }
    const std::uint8_t rank = reader.u8();
    if (rank < 1 || rank > 3) {
      throw FormatError("tensor '" + t.name + "' has unsupported rank " + std::to_string(rank));
    }
    std::uint64_t numel = 1;
    for (std::uint8_t r = 0; r < rank; ++r) {
      const std::uint64_t e = reader.u64();
      t.shape.push_back(static_cast<std::int64_t>(e));
      numel *= e;
    }
    const std::uint64_t offset = reader.u64();
    if (offset != expected_offset) {
      throw FormatError("tensor '" + t.name + "' directory offset " + std::to_string(offset) +
                        " overlaps or skips payload (expected " +
                        std::to_string(expected_offset) + ")");
    }
    expected_offset = offset + numel * static_cast<std::uint64_t>(t.elem_width);
    offsets.push_back(offset);
    tensors.push_back(std::move(t));
  }
  const std::uint64_t blob_len = reader.u64();
  if (blob_len != expected_offset) {
    throw FormatError("tensor blob length " + std::to_string(blob_len) +
                      " does not match directory (expected " + std::to_string(expected_offset) +
                      ")");
  }
  reader.need(blob_len);
  for (std::uint64_t i = 0; i < count; ++i) {
    RawTensor& t = tensors[i];
    std::uint64_t numel = 1;
    for (std::int64_t e : t.shape) numel *= static_cast<std::uint64_t>(e);
    t.bytes.resize(numel * static_cast<std::uint64_t>(t.elem_width));
    reader.raw(t.bytes.data(), t.bytes.size());
  }
  return tensors;
}

void write_checkpoint_file(const std::string& path, const RawCheckpoint& ckpt) {
  ByteWriter w;
  w.raw(kMagic, 4);
  w.u32(ckpt.version);
  w.u64(ckpt.config_json.size());
  w.raw(ckpt.config_json.data(), ckpt.config_json.size());
  w.u32(static_cast<std::uint32_t>(ckpt.sections.size()));
  for (const RawSection& s : ckpt.sections) {
    w.u32(s.tag);
    w.u64(s.payload.size());
    w.raw(s.payload.data(), s.payload.size());
  }
  const std::vector<std::uint8_t> bytes = w.take();

  // Write-then-rename so a crashed save never leaves a torn checkpoint.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + tmp + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw FormatError("cannot rename '" + tmp + "' to '" + path + "'");
  }
}

RawCheckpoint parse_checkpoint_bytes(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes.data(), bytes.size(), "header");
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("bad magic: not a TOKF checkpoint");
  }
  RawCheckpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version > kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(ckpt.version) +
                      " is newer than supported version " + std::to_string(kCheckpointVersion) +
                      "; upgrade this tool to read it");
  }
  const std::uint64_t json_len = r.u64();
  r.need(json_len);
  ckpt.config_json.resize(json_len);
  r.raw(ckpt.config_json.data(), json_len);
  const std::uint32_t section_count = r.u32();
  for (std::uint32_t i = 0; i < section_count; ++i) {
    RawSection s;
    s.tag = r.u32();
    const std::uint64_t len = r.u64();
    r.need(len);
    s.payload.resize(len);
    r.raw(s.payload.data(), len);
    ckpt.sections.push_back(std::move(s));
  }
  return ckpt;
}

RawCheckpoint read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  return parse_checkpoint_bytes(bytes);
}

}  // namespace tokf
