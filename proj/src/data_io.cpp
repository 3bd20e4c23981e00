#include "pdt/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "pdt/rng.hpp"
#include "pdt/tokenizer.hpp"

namespace pdt {

namespace {

void validate_sequence(const std::string& seq, std::size_t line_no) {
    if (seq.empty()) {
        throw std::runtime_error("pairs: empty sequence at line " + std::to_string(line_no));
    }
    std::string bad;
    for (char c : seq) {
        if (!std::isalpha(static_cast<unsigned char>(c))) bad.push_back(c);
    }
    if (!bad.empty()) {
        throw std::runtime_error("pairs: invalid residue characters \"" + bad + "\" at line " +
                                 std::to_string(line_no));
    }
}

void validate_field(const std::string& f, const char* which) {
    if (f.find('\t') != std::string::npos || f.find('\n') != std::string::npos) {
        throw std::runtime_error(std::string("pairs: ") + which + " contains tab or newline");
    }
}

std::string expand_name(const std::string& tmpl, const std::string& name) {
    std::string out = tmpl;
    const std::string key = "{name}";
    for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key)) {
        out.replace(pos, key.size(), name);
    }
    return out;
}

}  // namespace

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << content;
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<PairRecord> load_pairs(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open pairs file: " + path);
    std::vector<PairRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos ||
            line.find('\t', t2 + 1) != std::string::npos) {
            throw std::runtime_error("pairs: malformed line " + std::to_string(line_no) +
                                     " (expected id<TAB>text<TAB>sequence)");
        }
        PairRecord r;
        r.id = line.substr(0, t1);
        r.text = line.substr(t1 + 1, t2 - t1 - 1);
        r.sequence = line.substr(t2 + 1);
        validate_sequence(r.sequence, line_no);
        for (auto& c : r.sequence) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        out.push_back(std::move(r));
    }
    return out;
}

void save_pairs(const std::vector<PairRecord>& records, const std::string& path,
                const std::string& provenance_header) {
    std::ostringstream os;
    if (!provenance_header.empty()) os << provenance_header;
    for (const auto& r : records) {
        validate_field(r.id, "id");
        validate_field(r.text, "text");
        validate_field(r.sequence, "sequence");
        os << r.id << '\t' << r.text << '\t' << r.sequence << '\n';
    }
    write_text_file(path, os.str());
}

SyntheticRuleSet SyntheticRuleSet::defaults() {
    SyntheticRuleSet r;
    r.properties = {
        {"alpha",
         {"a protein rich in {name} motifs", "sequence with many {name} repeats",
          "this protein contains frequent {name} segments"},
         "HHH",
         6.0},
        {"beta",
         {"a protein rich in {name} motifs", "sequence with many {name} repeats",
          "this protein contains frequent {name} segments"},
         "CCC",
         6.0},
        {"gamma",
         {"a protein rich in {name} motifs", "sequence with many {name} repeats",
          "this protein contains frequent {name} segments"},
         "WWW",
         6.0},
        {"delta",
         {"a protein rich in {name} motifs", "sequence with many {name} repeats",
          "this protein contains frequent {name} segments"},
         "MMM",
         6.0},
    };
    return r;
}

std::string SyntheticRuleSet::to_json() const {
    nlohmann::json j;
    for (const auto& p : properties) {
        j["properties"].push_back({{"name", p.name},
                                   {"templates", p.templates},
                                   {"motif", p.motif},
                                   {"enrichment", p.enrichment}});
    }
    j["base_distribution"] = base_distribution;
    j["min_len"] = min_len;
    j["max_len"] = max_len;
    j["second_property_prob"] = second_property_prob;
    return j.dump(2);
}

SyntheticRuleSet SyntheticRuleSet::from_json(const std::string& json_text) {
    const auto j = nlohmann::json::parse(json_text);
    SyntheticRuleSet r;
    for (const auto& jp : j.at("properties")) {
        SyntheticProperty p;
        p.name = jp.at("name").get<std::string>();
        p.templates = jp.at("templates").get<std::vector<std::string>>();
        p.motif = jp.at("motif").get<std::string>();
        p.enrichment = jp.value("enrichment", 6.0);
        r.properties.push_back(std::move(p));
    }
    if (j.contains("base_distribution")) {
        r.base_distribution = j["base_distribution"].get<std::vector<double>>();
    }
    r.min_len = j.value("min_len", 24);
    r.max_len = j.value("max_len", 48);
    r.second_property_prob = j.value("second_property_prob", 0.35);
    return r;
}

std::vector<LabeledPair> generate_synthetic(const SyntheticRuleSet& rules, int n,
                                            std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate_synthetic: n must be >= 1");
    if (rules.properties.empty()) {
        throw std::invalid_argument("generate_synthetic: no properties defined");
    }
    if (rules.min_len < 1 || rules.max_len < rules.min_len) {
        throw std::invalid_argument("generate_synthetic: bad length range");
    }
    for (std::size_t i = 0; i < rules.properties.size(); ++i) {
        const auto& p = rules.properties[i];
        if (p.motif.empty() || static_cast<int>(p.motif.size()) > rules.min_len) {
            throw std::invalid_argument("generate_synthetic: motif '" + p.motif +
                                        "' incompatible with length range");
        }
        if (p.enrichment <= 1.0) {
            throw std::invalid_argument("generate_synthetic: enrichment must exceed 1");
        }
        for (std::size_t k = 0; k < i; ++k) {
            if (rules.properties[k].motif == p.motif) {
                throw std::invalid_argument("generate_synthetic: duplicate motif " + p.motif);
            }
        }
    }
    static const std::string kCanonical = "ACDEFGHIKLMNPQRSTVWY";
    std::vector<double> base = rules.base_distribution;
    if (base.empty()) base.assign(kCanonical.size(), 1.0);
    if (base.size() != kCanonical.size()) {
        throw std::invalid_argument("generate_synthetic: base distribution needs 20 weights");
    }

    Rng rng(seed);
    std::vector<LabeledPair> out;
    out.reserve(static_cast<std::size_t>(n));
    const int n_props = static_cast<int>(rules.properties.size());
    for (int i = 0; i < n; ++i) {
        LabeledPair lp;
        lp.record.id = "syn" + std::to_string(i);

        const int first = rng.uniform_int(0, n_props - 1);
        lp.property_ids.push_back(first);
        if (n_props > 1 && rng.uniform() < rules.second_property_prob) {
            int second = rng.uniform_int(0, n_props - 2);
            if (second >= first) ++second;
            lp.property_ids.push_back(second);
        }

        std::string text;
        for (int pid : lp.property_ids) {
            const auto& p = rules.properties[static_cast<std::size_t>(pid)];
            const auto& tmpl =
                p.templates[static_cast<std::size_t>(rng.uniform_int(
                    0, static_cast<int>(p.templates.size()) - 1))];
            if (!text.empty()) text += " and ";
            text += expand_name(tmpl, p.name);
        }
        lp.record.text = text;

        const int target_len = rng.uniform_int(rules.min_len, rules.max_len);
        double active_weight = 0.0;
        for (int pid : lp.property_ids) {
            active_weight += rules.properties[static_cast<std::size_t>(pid)].enrichment;
        }
        std::string seq;
        while (static_cast<int>(seq.size()) < target_len) {
            const double p_insert = active_weight / (active_weight + 20.0);
            if (rng.uniform() < p_insert) {
                std::vector<double> w;
                for (int pid : lp.property_ids) {
                    w.push_back(rules.properties[static_cast<std::size_t>(pid)].enrichment);
                }
                const int pick = lp.property_ids[rng.categorical(w)];
                seq += rules.properties[static_cast<std::size_t>(pick)].motif;
            } else {
                seq.push_back(kCanonical[rng.categorical(base)]);
            }
        }
        seq.resize(static_cast<std::size_t>(target_len));
        lp.record.sequence = std::move(seq);
        out.push_back(std::move(lp));
    }
    return out;
}

void save_labels(const std::vector<LabeledPair>& data, const SyntheticRuleSet& rules,
                 const std::string& path, const std::string& provenance_header) {
    std::ostringstream os;
    if (!provenance_header.empty()) os << provenance_header;
    for (const auto& lp : data) {
        os << lp.record.id << '\t';
        for (std::size_t i = 0; i < lp.property_ids.size(); ++i) {
            if (i) os << ',';
            os << rules.properties[static_cast<std::size_t>(lp.property_ids[i])].name;
        }
        os << '\n';
    }
    write_text_file(path, os.str());
}

void write_fasta(const std::vector<FastaRecord>& records, const std::string& path) {
    std::ostringstream os;
    for (const auto& r : records) {
        os << '>' << r.id;
        if (!r.description.empty()) os << ' ' << r.description;
        os << '\n' << r.sequence << '\n';
    }
    write_text_file(path, os.str());
}

std::vector<FastaRecord> read_fasta(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open fasta file: " + path);
    std::vector<FastaRecord> out;
    std::string line;
    FastaRecord cur;
    bool have = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '>') {
            if (have) out.push_back(cur);
            cur = FastaRecord{};
            const auto sp = line.find(' ');
            cur.id = line.substr(1, sp == std::string::npos ? std::string::npos : sp - 1);
            if (sp != std::string::npos) cur.description = line.substr(sp + 1);
            have = true;
        } else {
            if (!have) {
                throw std::runtime_error("fasta: sequence data before any header at line " +
                                         std::to_string(line_no));
            }
            cur.sequence += line;
        }
    }
    if (have) out.push_back(cur);
    return out;
}

}  // namespace pdt
