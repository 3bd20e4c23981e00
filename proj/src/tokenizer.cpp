#include "pdt/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <stdexcept>

namespace pdt {

namespace {

constexpr const char* kCanonical = "ACDEFGHIKLMNPQRSTVWY";

}  // namespace

int ProteinVocabulary::letter_id(char upper) {
    if (upper < 'A' || upper > 'Z') {
        throw std::invalid_argument(std::string("protein vocab: not a letter: '") + upper + "'");
    }
    return first_letter_id + (upper - 'A');
}

bool ProteinVocabulary::is_canonical(char upper) {
    for (const char* p = kCanonical; *p; ++p) {
        if (*p == upper) return true;
    }
    return false;
}

int ProteinVocabulary::encode_char(char c) {
    const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return is_canonical(upper) ? letter_id(upper) : letter_id('X');
}

char ProteinVocabulary::decode_id(int id) {
    if (id < 0 || id >= size) {
        throw std::invalid_argument("protein vocab: id out of range: " + std::to_string(id));
    }
    if (id == mask_id) return '?';
    if (id < first_letter_id) return '\0';
    return static_cast<char>('A' + (id - first_letter_id));
}

std::string ProteinVocabulary::token_name(int id) {
    switch (id) {
        case pad_id: return "[PAD]";
        case cls_id: return "[CLS]";
        case sep_id: return "[SEP]";
        case mask_id: return "[MASK]";
        default: return std::string(1, decode_id(id));
    }
}

TokenSequence encode_protein(const std::string& sequence, int max_len, bool add_specials) {
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < sequence.size(); ++i) {
        if (!std::isalpha(static_cast<unsigned char>(sequence[i]))) bad.push_back(i);
    }
    if (!bad.empty()) {
        std::ostringstream os;
        os << "encode_protein: non-letter characters at positions";
        for (auto i : bad) os << ' ' << i;
        throw std::invalid_argument(os.str());
    }

    std::vector<int> ids;
    if (add_specials) ids.push_back(ProteinVocabulary::cls_id);
    for (char c : sequence) ids.push_back(ProteinVocabulary::encode_char(c));
    if (add_specials) {
        if (max_len > 0 && static_cast<int>(ids.size()) >= max_len) {
            ids.resize(static_cast<std::size_t>(max_len - 1));
        }
        ids.push_back(ProteinVocabulary::sep_id);
    } else if (max_len > 0 && static_cast<int>(ids.size()) > max_len) {
        ids.resize(static_cast<std::size_t>(max_len));
    }

    TokenSequence out;
    out.length = static_cast<int>(ids.size());
    if (max_len > 0) ids.resize(static_cast<std::size_t>(max_len), ProteinVocabulary::pad_id);
    out.ids = std::move(ids);
    return out;
}

std::string decode_protein_ids(const std::vector<int>& ids) {
    std::string out;
    for (int id : ids) {
        const char c = ProteinVocabulary::decode_id(id);  // validates range
        if (c != '\0') out.push_back(c);
    }
    return out;
}

std::string decode_protein(const TokenSequence& tokens) { return decode_protein_ids(tokens.ids); }

int TextVocabulary::word_id(const std::string& word) const {
    auto it = index.find(word);
    return it == index.end() ? unk_id : it->second;
}

std::string TextVocabulary::serialize() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        os << tokens[i] << '\t' << i << '\n';
    }
    return os.str();
}

TextVocabulary TextVocabulary::deserialize(const std::string& blob) {
    TextVocabulary v;
    std::istringstream is(blob);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error("text vocab: malformed line '" + line + "'");
        }
        const std::string tok = line.substr(0, tab);
        const int id = std::stoi(line.substr(tab + 1));
        if (id != static_cast<int>(v.tokens.size())) {
            throw std::runtime_error("text vocab: non-contiguous id " + std::to_string(id));
        }
        v.tokens.push_back(tok);
        v.index.emplace(tok, id);
    }
    if (v.tokens.size() < 4) throw std::runtime_error("text vocab: missing special tokens");
    return v;
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char raw : text) {
        const unsigned char u = static_cast<unsigned char>(raw);
        if (std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

TextVocabulary build_text_vocab(const std::vector<std::string>& corpus, int max_size) {
    if (corpus.empty()) throw std::invalid_argument("build_text_vocab: empty corpus");
    std::map<std::string, std::int64_t> freq;  // ordered map gives lexicographic ties
    for (const auto& text : corpus) {
        for (const auto& w : split_words(text)) ++freq[w];
    }
    std::vector<std::pair<std::string, std::int64_t>> entries(freq.begin(), freq.end());
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    TextVocabulary v;
    v.tokens = {"[PAD]", "[CLS]", "[SEP]", "[UNK]"};
    for (const auto& [word, count] : entries) {
        (void)count;
        if (max_size > 0 && static_cast<int>(v.tokens.size()) >= max_size) break;
        v.tokens.push_back(word);
    }
    for (std::size_t i = 0; i < v.tokens.size(); ++i) v.index.emplace(v.tokens[i], static_cast<int>(i));
    return v;
}

TokenSequence encode_text(const std::string& text, const TextVocabulary& vocab, int max_len) {
    std::vector<int> ids = {TextVocabulary::cls_id};
    for (const auto& w : split_words(text)) ids.push_back(vocab.word_id(w));
    if (max_len > 0 && static_cast<int>(ids.size()) >= max_len) {
        ids.resize(static_cast<std::size_t>(max_len - 1));
    }
    ids.push_back(TextVocabulary::sep_id);

    TokenSequence out;
    out.length = static_cast<int>(ids.size());
    if (max_len > 0) ids.resize(static_cast<std::size_t>(max_len), TextVocabulary::pad_id);
    out.ids = std::move(ids);
    return out;
}

}  // namespace pdt
