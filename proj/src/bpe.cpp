#include "vulgnn/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "vulgnn/common.hpp"

namespace vulgnn {

namespace {

std::string encode_utf8(char32_t cp) {
    std::string out;
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    return out;
}

std::array<std::string, 256> build_byte_map() {
    // Printable byte values keep their own codepoint; the rest are shifted
    // into 0x100.. in ascending byte order, per GPT-2's bytes_to_unicode.
    auto keeps_own = [](int b) {
        return (b >= 0x21 && b <= 0x7E) || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF);
    };
    std::array<std::string, 256> map;
    int shifted = 0;
    for (int b = 0; b < 256; ++b) {
        const char32_t cp = keeps_own(b) ? static_cast<char32_t>(b)
                                         : static_cast<char32_t>(0x100 + shifted++);
        map[static_cast<std::size_t>(b)] = encode_utf8(cp);
    }
    return map;
}

struct CpRange {
    char32_t lo;
    char32_t hi;
};

bool in_ranges(char32_t cp, const CpRange* ranges, std::size_t n) {
    const CpRange* end = ranges + n;
    const CpRange* it = std::upper_bound(ranges, end, cp, [](char32_t v, const CpRange& r) {
        return v < r.lo;
    });
    return it != ranges && cp <= (it - 1)->hi;
}

// Unicode White_Space property.
bool is_whitespace(char32_t cp) {
    static const CpRange kRanges[] = {
        {0x09, 0x0D},     {0x20, 0x20},     {0x85, 0x85},     {0xA0, 0xA0},
        {0x1680, 0x1680}, {0x2000, 0x200A}, {0x2028, 0x2029}, {0x202F, 0x202F},
        {0x205F, 0x205F}, {0x3000, 0x3000},
    };
    return in_ranges(cp, kRanges, std::size(kRanges));
}

// General category L*, exact for the blocks source code plausibly uses
// (Latin, Greek, Cyrillic, Armenian, Hebrew, Arabic, CJK, Kana, Hangul).
bool is_letter(char32_t cp) {
    static const CpRange kRanges[] = {
        {0x41, 0x5A},       {0x61, 0x7A},       {0xAA, 0xAA},       {0xB5, 0xB5},
        {0xBA, 0xBA},       {0xC0, 0xD6},       {0xD8, 0xF6},       {0xF8, 0x2C1},
        {0x2C6, 0x2D1},     {0x2E0, 0x2E4},     {0x2EC, 0x2EC},     {0x2EE, 0x2EE},
        {0x370, 0x374},     {0x376, 0x377},     {0x37A, 0x37D},     {0x37F, 0x37F},
        {0x386, 0x386},     {0x388, 0x38A},     {0x38C, 0x38C},     {0x38E, 0x3A1},
        {0x3A3, 0x3F5},     {0x3F7, 0x481},     {0x48A, 0x52F},     {0x531, 0x556},
        {0x559, 0x559},     {0x560, 0x588},     {0x5D0, 0x5EA},     {0x5EF, 0x5F2},
        {0x620, 0x64A},     {0x66E, 0x66F},     {0x671, 0x6D3},     {0x6D5, 0x6D5},
        {0x6E5, 0x6E6},     {0x6EE, 0x6EF},     {0x6FA, 0x6FC},     {0x6FF, 0x6FF},
        {0x904, 0x939},     {0x93D, 0x93D},     {0x950, 0x950},     {0x958, 0x961},
        {0x971, 0x980},     {0x985, 0x98C},     {0x9AA, 0x9B0},     {0xE01, 0xE30},
        {0xE32, 0xE33},     {0xE40, 0xE46},     {0x10A0, 0x10C5},   {0x10D0, 0x10FA},
        {0x1100, 0x1159},   {0x1E00, 0x1F15},   {0x1F18, 0x1F1D},   {0x1F20, 0x1F45},
        {0x1F48, 0x1F4D},   {0x1F50, 0x1F57},   {0x1F59, 0x1F59},   {0x1F5B, 0x1F5B},
        {0x1F5D, 0x1F5D},   {0x1F5F, 0x1F7D},   {0x1F80, 0x1FB4},   {0x1FB6, 0x1FBC},
        {0x1FC2, 0x1FC4},   {0x1FC6, 0x1FCC},   {0x1FD0, 0x1FD3},   {0x1FD6, 0x1FDB},
        {0x1FE0, 0x1FEC},   {0x1FF2, 0x1FF4},   {0x1FF6, 0x1FFC},   {0x2071, 0x2071},
        {0x207F, 0x207F},   {0x2090, 0x209C},   {0x2C60, 0x2C7F},   {0x3041, 0x3096},
        {0x30A1, 0x30FA},   {0x30FC, 0x30FF},   {0x3105, 0x312F},   {0x3400, 0x4DBF},
        {0x4E00, 0x9FFF},   {0xA000, 0xA48C},   {0xAC00, 0xD7A3},   {0xF900, 0xFA6D},
        {0xFB00, 0xFB06},   {0xFF21, 0xFF3A},   {0xFF41, 0xFF5A},   {0x20000, 0x2A6DF},
    };
    return in_ranges(cp, kRanges, std::size(kRanges));
}

// General category N* for common blocks.
bool is_number(char32_t cp) {
    static const CpRange kRanges[] = {
        {0x30, 0x39},       {0xB2, 0xB3},       {0xB9, 0xB9},       {0xBC, 0xBE},
        {0x660, 0x669},     {0x6F0, 0x6F9},     {0x966, 0x96F},     {0x9E6, 0x9EF},
        {0xE50, 0xE59},     {0x2070, 0x2070},   {0x2074, 0x2079},   {0x2080, 0x2089},
        {0x2150, 0x2182},   {0x2185, 0x2189},   {0x2460, 0x249B},   {0x24EA, 0x24FF},
        {0x2776, 0x2793},   {0xFF10, 0xFF19},
    };
    return in_ranges(cp, kRanges, std::size(kRanges));
}

struct Codepoint {
    char32_t cp;
    std::size_t offset; // byte offset in the source text
    std::size_t len;    // byte length
};

// Permissive UTF-8 decode: an invalid byte becomes one codepoint in the
// surrogate range 0xDC00+byte; classification treats it as "other" and
// byte mapping later uses the original bytes, so nothing is lost.
std::vector<Codepoint> decode_utf8_lossy(std::string_view s) {
    std::vector<Codepoint> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const unsigned char b0 = static_cast<unsigned char>(s[i]);
        std::size_t need = 0;
        char32_t cp = 0;
        if (b0 < 0x80) {
            out.push_back({b0, i, 1});
            ++i;
            continue;
        } else if ((b0 & 0xE0) == 0xC0) {
            need = 1;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            need = 2;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            need = 3;
            cp = b0 & 0x07;
        } else {
            out.push_back({static_cast<char32_t>(0xDC00 + b0), i, 1});
            ++i;
            continue;
        }
        bool ok = true;
        for (std::size_t k = 1; ok && k <= need; ++k) {
            if (i + k >= s.size() ||
                (static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
                ok = false;
            }
        }
        if (!ok) {
            out.push_back({static_cast<char32_t>(0xDC00 + b0), i, 1});
            ++i;
            continue;
        }
        for (std::size_t k = 1; k <= need; ++k) {
            cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
        }
        out.push_back({cp, i, need + 1});
        i += need + 1;
    }
    return out;
}

bool is_other(char32_t cp) {
    return !is_whitespace(cp) && !is_letter(cp) && !is_number(cp);
}

} // namespace

std::vector<std::string> pretokenize(std::string_view text) {
    const std::vector<Codepoint> cps = decode_utf8_lossy(text);
    const std::size_t n = cps.size();
    std::vector<std::string> pieces;
    auto emit = [&](std::size_t first, std::size_t last) {
        const std::size_t lo = cps[first].offset;
        const std::size_t hi = cps[last - 1].offset + cps[last - 1].len;
        pieces.emplace_back(text.substr(lo, hi - lo));
    };

    std::size_t i = 0;
    while (i < n) {
        // Contractions: 's 't 're 've 'm 'll 'd, matched case-sensitively.
        if (cps[i].cp == U'\'' && i + 1 < n) {
            const char32_t c1 = cps[i + 1].cp;
            const char32_t c2 = (i + 2 < n) ? cps[i + 2].cp : 0;
            std::size_t take = 0;
            if (c1 == U's' || c1 == U't' || c1 == U'm' || c1 == U'd') {
                take = 2;
            }
            if ((c1 == U'r' && c2 == U'e') || (c1 == U'v' && c2 == U'e') ||
                (c1 == U'l' && c2 == U'l')) {
                take = 3;
            }
            // "'s" wins over "'ll"-style lookups only through pattern order;
            // the two-char matches above already reflect that order.
            if (take > 0) {
                emit(i, i + take);
                i += take;
                continue;
            }
        }

        // " ?X+" for X in {letter, number, other}, with a single optional
        // leading space.
        const bool leading_space = cps[i].cp == U' ';
        const std::size_t k = i + (leading_space ? 1 : 0);
        if (k < n) {
            if (is_letter(cps[k].cp)) {
                std::size_t j = k;
                while (j < n && is_letter(cps[j].cp)) {
                    ++j;
                }
                emit(i, j);
                i = j;
                continue;
            }
            if (is_number(cps[k].cp)) {
                std::size_t j = k;
                while (j < n && is_number(cps[j].cp)) {
                    ++j;
                }
                emit(i, j);
                i = j;
                continue;
            }
            if (is_other(cps[k].cp)) {
                std::size_t j = k;
                while (j < n && is_other(cps[j].cp)) {
                    ++j;
                }
                emit(i, j);
                i = j;
                continue;
            }
        }

        // Whitespace runs: "\s+(?!\S)" then "\s+". A run followed by more
        // input yields all but its final char, leaving that char to join
        // the next piece (or stand alone).
        std::size_t j = i;
        while (j < n && is_whitespace(cps[j].cp)) {
            ++j;
        }
        if (j == n || j - i == 1) {
            emit(i, j);
            i = j;
        } else {
            emit(i, j - 1);
            i = j - 1;
        }
    }
    return pieces;
}

std::vector<std::uint32_t> encode(std::string_view text, const BpeVocabulary& vocab) {
    std::vector<std::uint32_t> out;
    for (const std::string& piece : pretokenize(text)) {
        std::vector<std::string> symbols;
        symbols.reserve(piece.size());
        for (const char c : piece) {
            symbols.push_back(vocab.byte_map[static_cast<unsigned char>(c)]);
        }
        while (symbols.size() >= 2) {
            std::size_t best_rank = std::numeric_limits<std::size_t>::max();
            std::size_t best_at = 0;
            for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
                auto it = vocab.merge_ranks.find({symbols[i], symbols[i + 1]});
                if (it != vocab.merge_ranks.end() && it->second < best_rank) {
                    best_rank = it->second;
                    best_at = i;
                }
            }
            if (best_rank == std::numeric_limits<std::size_t>::max()) {
                break;
            }
            const std::string first = symbols[best_at];
            const std::string second = symbols[best_at + 1];
            std::vector<std::string> next;
            next.reserve(symbols.size());
            std::size_t i = 0;
            while (i < symbols.size()) {
                if (i + 1 < symbols.size() && symbols[i] == first && symbols[i + 1] == second) {
                    next.push_back(first + second);
                    i += 2;
                } else {
                    next.push_back(symbols[i]);
                    ++i;
                }
            }
            symbols = std::move(next);
        }
        for (const std::string& sym : symbols) {
            auto it = vocab.token_to_id.find(sym);
            if (it == vocab.token_to_id.end()) {
                throw DataError("token not in vocabulary: " + sym);
            }
            out.push_back(it->second);
        }
    }
    return out;
}

BpeVocabulary load_vocabulary(std::istream& vocab_stream, std::istream& merges_stream,
                              bool allow_size_mismatch) {
    using nlohmann::json;
    BpeVocabulary vocab;
    vocab.byte_map = build_byte_map();

    json doc;
    try {
        doc = json::parse(vocab_stream);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed vocab.json: ") + e.what());
    }
    if (!doc.is_object()) {
        throw DataError("vocab.json must map token strings to IDs");
    }
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        if (!it.value().is_number_integer() || it.value().get<std::int64_t>() < 0) {
            throw DataError("vocab.json: ID for token \"" + it.key() +
                            "\" must be a non-negative integer");
        }
        vocab.token_to_id.emplace(it.key(), it.value().get<std::uint32_t>());
    }
    vocab.vocab_size = static_cast<std::uint32_t>(vocab.token_to_id.size());
    if (vocab.vocab_size != kExpectedVocabSize && !allow_size_mismatch) {
        throw DataError("vocabulary has " + std::to_string(vocab.vocab_size) +
                        " entries, expected " + std::to_string(kExpectedVocabSize) +
                        " (pass the size override to accept)");
    }
    std::vector<bool> seen(vocab.vocab_size, false);
    for (const auto& [token, id] : vocab.token_to_id) {
        if (id >= vocab.vocab_size) {
            throw DataError("vocab.json: ID " + std::to_string(id) + " for token \"" + token +
                            "\" outside 0.." + std::to_string(vocab.vocab_size - 1));
        }
        if (seen[id]) {
            throw DataError("vocab.json: duplicate ID " + std::to_string(id));
        }
        seen[id] = true;
    }

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(merges_stream, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (line_no == 1 && line.rfind("#version", 0) == 0) {
            continue;
        }
        const std::size_t space = line.find(' ');
        if (space == std::string::npos || space == 0 || space + 1 >= line.size() ||
            line.find(' ', space + 1) != std::string::npos) {
            throw DataError("merges.txt line " + std::to_string(line_no) +
                            ": expected two space-separated tokens");
        }
        std::string first = line.substr(0, space);
        std::string second = line.substr(space + 1);
        const std::string product = first + second;
        if (vocab.token_to_id.find(first) == vocab.token_to_id.end() ||
            vocab.token_to_id.find(second) == vocab.token_to_id.end() ||
            vocab.token_to_id.find(product) == vocab.token_to_id.end()) {
            throw DataError("merges.txt line " + std::to_string(line_no) +
                            ": rule references a token missing from the vocabulary");
        }
        vocab.merge_ranks.emplace(std::make_pair(first, second), vocab.merges.size());
        vocab.merges.emplace_back(std::move(first), std::move(second));
    }
    if (vocab.merge_ranks.size() != vocab.merges.size()) {
        throw DataError("merges.txt contains a duplicate rule");
    }

    auto eot = vocab.token_to_id.find("<|endoftext|>");
    vocab.pad_id = (eot != vocab.token_to_id.end()) ? eot->second : 0;
    return vocab;
}

BpeVocabulary load_vocabulary_files(const std::string& vocab_path,
                                    const std::string& merges_path,
                                    bool allow_size_mismatch) {
    std::ifstream vf(vocab_path, std::ios::binary);
    if (!vf) {
        throw DataError("cannot open vocabulary file: " + vocab_path);
    }
    std::ifstream mf(merges_path, std::ios::binary);
    if (!mf) {
        throw DataError("cannot open merges file: " + merges_path);
    }
    return load_vocabulary(vf, mf, allow_size_mismatch);
}

TokenWindow fit_window(const std::vector<std::uint32_t>& ids, std::size_t length,
                       std::uint32_t pad_id) {
    if (length < 1) {
        throw ConfigError("window length must be at least 1");
    }
    TokenWindow window;
    window.length = length;
    window.n_real = std::min(ids.size(), length);
    window.ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(window.n_real));
    window.ids.resize(length, pad_id);
    return window;
}

} // namespace vulgnn
