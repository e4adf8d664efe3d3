#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tokf/rng.hpp"

namespace tokf {

// Byte-level tokenization: each byte is its own id (0-255); id 256 is reserved
// as padding and never produced by encode.
std::vector<std::int32_t> byte_tokenize(std::string_view text);
std::string byte_detokenize(const std::vector<std::int32_t>& ids);

inline constexpr std::int64_t kByteVocab = 257;

// Raw training text plus a deterministic train/validation split: the leading
// fraction is the training slice, the tail is validation, always disjoint.
class Corpus {
 public:
  Corpus(std::vector<std::uint8_t> bytes, double train_fraction = 0.9);
  static Corpus from_file(const std::string& path, double train_fraction = 0.9);

  std::span<const std::uint8_t> train() const;
  std::span<const std::uint8_t> validation() const;
  std::int64_t size() const { return static_cast<std::int64_t>(bytes_.size()); }

 private:
  std::vector<std::uint8_t> bytes_;
  std::int64_t split_;
};

struct TokenBatch {
  std::int64_t batch = 0;
  std::int64_t seq = 0;
  std::vector<std::int32_t> inputs;   // [batch * seq], row-major
  std::vector<std::int32_t> targets;  // same layout, shifted by one byte

  std::span<const std::int32_t> input_row(std::int64_t b) const {
    return {inputs.data() + b * seq, static_cast<std::size_t>(seq)};
  }
  std::span<const std::int32_t> target_row(std::int64_t b) const {
    return {targets.data() + b * seq, static_cast<std::size_t>(seq)};
  }
};

// Uniformly sampled segments from the training slice; targets are the inputs
// shifted by one byte. Deterministic given the rng state.
TokenBatch batch_sample(const Corpus& corpus, Rng& rng, std::int64_t batch_size,
                        std::int64_t seq_len);

}  // namespace tokf
