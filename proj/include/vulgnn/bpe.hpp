#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace vulgnn {

inline constexpr std::uint32_t kExpectedVocabSize = 49152;

// GPT-2-style byte-level BPE vocabulary (vocab.json + merges.txt pair).
struct BpeVocabulary {
    std::unordered_map<std::string, std::uint32_t> token_to_id;
    std::vector<std::pair<std::string, std::string>> merges;
    std::map<std::pair<std::string, std::string>, std::size_t> merge_ranks;
    std::array<std::string, 256> byte_map; // byte -> UTF-8 surrogate char
    std::uint32_t pad_id = 0;
    std::uint32_t vocab_size = 0;
};

// Fixed-length token window; padding occupies trailing positions only.
struct TokenWindow {
    std::vector<std::uint32_t> ids;
    std::size_t length = 0;
    std::size_t n_real = 0;
};

// Loads a vocab.json / merges.txt pair. The vocabulary must have exactly
// kExpectedVocabSize entries unless allow_size_mismatch is set (toy
// vocabularies in tests). Throws DataError on malformed files.
BpeVocabulary load_vocabulary(std::istream& vocab_stream, std::istream& merges_stream,
                              bool allow_size_mismatch = false);
BpeVocabulary load_vocabulary_files(const std::string& vocab_path,
                                    const std::string& merges_path,
                                    bool allow_size_mismatch = false);

// Splits text with the GPT-2 pre-tokenization pattern; pieces are raw
// byte substrings of the input, concatenating back to it exactly.
std::vector<std::string> pretokenize(std::string_view text);

// Deterministic byte-level BPE encoding. Total over arbitrary byte
// strings for any vocabulary that covers the 256 byte surrogates.
std::vector<std::uint32_t> encode(std::string_view text, const BpeVocabulary& vocab);

// Keeps the first min(|ids|, length) IDs and pads the rest.
TokenWindow fit_window(const std::vector<std::uint32_t>& ids, std::size_t length,
                       std::uint32_t pad_id);

} // namespace vulgnn
