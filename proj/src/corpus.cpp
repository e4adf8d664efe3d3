#include "tokf/corpus.hpp"

#include <fstream>

#include "tokf/errors.hpp"

namespace tokf {

std::vector<std::int32_t> byte_tokenize(std::string_view text) {
  std::vector<std::int32_t> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(static_cast<std::int32_t>(static_cast<unsigned char>(c)));
  return ids;
}

std::string byte_detokenize(const std::vector<std::int32_t>& ids) {
  std::string out;
  out.reserve(ids.size());
  for (std::int32_t id : ids) {
    if (id < 0 || id > 255) {
      throw DataError("byte_detokenize: id " + std::to_string(id) + " is not a byte");
    }
    out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
  }
  return out;
}

Corpus::Corpus(std::vector<std::uint8_t> bytes, double train_fraction) : bytes_(std::move(bytes)) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("corpus train_fraction must be in (0, 1)");
  }
  split_ = static_cast<std::int64_t>(static_cast<double>(bytes_.size()) * train_fraction);
}

Corpus Corpus::from_file(const std::string& path, double train_fraction) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + path);
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  if (bytes.empty()) throw DataError("corpus file is empty: " + path);
  return Corpus(std::move(bytes), train_fraction);
}

std::span<const std::uint8_t> Corpus::train() const {
  return {bytes_.data(), static_cast<std::size_t>(split_)};
}

std::span<const std::uint8_t> Corpus::validation() const {
  return {bytes_.data() + split_, static_cast<std::size_t>(size() - split_)};
}

TokenBatch batch_sample(const Corpus& corpus, Rng& rng, std::int64_t batch_size,
                        std::int64_t seq_len) {
  if (batch_size <= 0 || seq_len <= 0) throw ConfigError("batch_size and seq_len must be positive");
  const auto train = corpus.train();
  const std::int64_t n = static_cast<std::int64_t>(train.size());
  if (n <= seq_len) {
    throw DataError("training slice of " + std::to_string(n) + " bytes too small for seq_len " +
                    std::to_string(seq_len));
  }
  TokenBatch batch;
  batch.batch = batch_size;
  batch.seq = seq_len;
  batch.inputs.resize(static_cast<std::size_t>(batch_size * seq_len));
  batch.targets.resize(static_cast<std::size_t>(batch_size * seq_len));
  for (std::int64_t b = 0; b < batch_size; ++b) {
    const std::int64_t offset =
        static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(n - seq_len)));
    for (std::int64_t t = 0; t < seq_len; ++t) {
      batch.inputs[static_cast<std::size_t>(b * seq_len + t)] = train[offset + t];
      batch.targets[static_cast<std::size_t>(b * seq_len + t)] = train[offset + t + 1];
    }
  }
  return batch;
}

}  // namespace tokf
