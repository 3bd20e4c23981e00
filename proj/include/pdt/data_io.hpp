#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pdt {

/// One aligned (text, protein) record. Fields may not contain tabs or
/// newlines; the sequence is a non-empty uppercase letter string.
struct PairRecord {
    std::string id;
    std::string text;
    std::string sequence;
};

// TSV "id<TAB>text<TAB>sequence", UTF-8, no header row. Lines starting with
// '#' are provenance comments and are skipped on read.
std::vector<PairRecord> load_pairs(const std::string& path);
void save_pairs(const std::vector<PairRecord>& records, const std::string& path,
                const std::string& provenance_header = "");

struct SyntheticProperty {
    std::string name;
    std::vector<std::string> templates;  // "{name}" expands to the property name
    std::string motif;
    double enrichment = 6.0;  // > 1; insertion odds against one base residue draw
};

struct SyntheticRuleSet {
    std::vector<SyntheticProperty> properties;
    std::vector<double> base_distribution;  // over the 20 canonical letters; empty = uniform
    int min_len = 24;
    int max_len = 48;
    double second_property_prob = 0.35;

    static SyntheticRuleSet defaults();
    std::string to_json() const;
    static SyntheticRuleSet from_json(const std::string& json_text);
};

struct LabeledPair {
    PairRecord record;
    std::vector<int> property_ids;
};

// Deterministic given (rules, n, seed). Each record activates 1-2 properties;
// its text concatenates chosen templates and its sequence interleaves base
// residue draws with motif insertions at odds enrichment : vocabulary size.
std::vector<LabeledPair> generate_synthetic(const SyntheticRuleSet& rules, int n,
                                            std::uint64_t seed);

void save_labels(const std::vector<LabeledPair>& data, const SyntheticRuleSet& rules,
                 const std::string& path, const std::string& provenance_header = "");

struct FastaRecord {
    std::string id;
    std::string description;
    std::string sequence;
};

void write_fasta(const std::vector<FastaRecord>& records, const std::string& path);
std::vector<FastaRecord> read_fasta(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace pdt
