#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace pdt {

/// Integer token sequence; `length` counts real tokens (everything before
/// padding, including [CLS]/[SEP] when present).
struct TokenSequence {
    std::vector<int> ids;
    int length = 0;
};

/// Fixed 30-symbol protein vocabulary: ids 0-3 are [PAD],[CLS],[SEP],[MASK],
/// ids 4-29 are the letters A-Z in order. [MASK] is the diffusion absorbing
/// state, so its id is the single source of truth consumed there.
struct ProteinVocabulary {
    static constexpr int pad_id = 0;
    static constexpr int cls_id = 1;
    static constexpr int sep_id = 2;
    static constexpr int mask_id = 3;
    static constexpr int size = 30;
    static constexpr int first_letter_id = 4;

    static int letter_id(char upper);           // 'A'..'Z' -> 4..29
    static bool is_canonical(char upper);       // one of the 20 amino-acid letters
    static int encode_char(char c);             // canonical -> own id, other letters -> id('X')
    static char decode_id(int id);              // letters back, [MASK] -> '?', specials -> '\0'
    static bool is_special(int id) { return id >= 0 && id < first_letter_id; }
    static std::string token_name(int id);      // for vocabulary serialization
};

// Uppercases, maps non-canonical letters to 'X', pads/truncates to max_len
// (max_len = 0 keeps the natural length). Non-letter characters are an error
// listing the offending positions.
TokenSequence encode_protein(const std::string& sequence, int max_len, bool add_specials);

// Drops specials and padding; [MASK] decodes to '?' for diagnostics only.
std::string decode_protein(const TokenSequence& tokens);
std::string decode_protein_ids(const std::vector<int>& ids);

/// Word-level text vocabulary built from a training corpus: lowercased,
/// split on whitespace/punctuation, frequency-capped, ties broken by
/// (frequency desc, lexicographic asc). Stable once built.
struct TextVocabulary {
    static constexpr int pad_id = 0;
    static constexpr int cls_id = 1;
    static constexpr int sep_id = 2;
    static constexpr int unk_id = 3;

    std::vector<std::string> tokens;  // index == id; specials first
    std::unordered_map<std::string, int> index;

    int size() const { return static_cast<int>(tokens.size()); }
    int word_id(const std::string& word) const;

    std::string serialize() const;  // "token<TAB>id" lines
    static TextVocabulary deserialize(const std::string& blob);
};

std::vector<std::string> split_words(const std::string& text);
TextVocabulary build_text_vocab(const std::vector<std::string>& corpus, int max_size);
TokenSequence encode_text(const std::string& text, const TextVocabulary& vocab, int max_len);

}  // namespace pdt
