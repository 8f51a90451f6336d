#include "exbench/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "exbench/detail/common.hpp"
#include "exbench/detail/rng.hpp"
#include "json.hpp"

namespace exbench {

using detail::Rng;
using nlohmann::json;

std::string to_string(FeatureKind k) {
    switch (k) {
        case FeatureKind::api: return "api";
        case FeatureKind::permission: return "permission";
        case FeatureKind::intent: return "intent";
        case FeatureKind::synthetic: return "synthetic";
    }
    return "synthetic";
}

FeatureKind feature_kind_from_string(const std::string& s) {
    if (s == "api") return FeatureKind::api;
    if (s == "permission") return FeatureKind::permission;
    if (s == "intent") return FeatureKind::intent;
    if (s == "synthetic") return FeatureKind::synthetic;
    throw ValidationError("unknown feature kind: '" + s + "'");
}

std::uint64_t FeatureDictionary::fingerprint() const {
    std::uint64_t h = detail::kFnvOffset;
    for (const auto& n : names) {
        h = detail::fnv1a(n, h);
        h = detail::fnv1a_u64(0x1f, h);  // separator
    }
    return h;
}

void FeatureDictionary::validate() const {
    if (names.empty()) throw ValidationError("feature dictionary is empty");
    if (kinds.size() != names.size())
        throw ValidationError("feature dictionary kinds/names length mismatch");
    std::unordered_set<std::string> seen;
    for (const auto& n : names) {
        if (n.empty()) throw ValidationError("feature dictionary contains an empty name");
        if (!seen.insert(n).second)
            throw ValidationError("duplicate feature name: '" + n + "'");
    }
}

void LabeledDataset::validate() const {
    dictionary.validate();
    if (samples.size() != labels.size() || samples.size() != sample_ids.size())
        throw ValidationError("dataset samples/labels/sample_ids lengths differ");
    std::unordered_set<std::string> ids;
    for (const auto& id : sample_ids)
        if (!ids.insert(id).second) throw ValidationError("duplicate sample_id: '" + id + "'");
    std::unordered_set<std::string> label_set;
    for (const auto& ln : label_names)
        if (!label_set.insert(ln).second)
            throw ValidationError("duplicate label name: '" + ln + "'");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].bits.size() != dictionary.size())
            throw ValidationError("sample '" + sample_ids[i] + "' has wrong dimension");
        for (auto b : samples[i].bits)
            if (b > 1)
                throw ValidationError("sample '" + sample_ids[i] + "' has a non-binary value");
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= label_names.size())
            throw ValidationError("sample '" + sample_ids[i] + "' has an out-of-range label");
    }
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

LabeledDataset load_csv(const std::string& path, const std::string& dictionary_sidecar) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ValidationError(path + ": empty file, expected header");
    strip_cr(line);
    auto header = split_line(line);
    if (header.size() < 3 || header[0] != "sample_id" || header[1] != "label")
        throw ValidationError(path + ": malformed header, expected 'sample_id,label,<features...>'");

    LabeledDataset ds;
    std::unordered_set<std::string> feature_seen;
    for (std::size_t c = 2; c < header.size(); ++c) {
        const std::string& name = header[c];
        if (name.empty())
            throw ValidationError(path + ": empty feature name in header column " + std::to_string(c + 1));
        if (!feature_seen.insert(name).second)
            throw ValidationError(path + ": duplicate feature name '" + name + "' in header");
        ds.dictionary.names.push_back(name);
        ds.dictionary.kinds.push_back(FeatureKind::synthetic);
    }
    const std::size_t d = ds.dictionary.size();

    std::unordered_map<std::string, int> label_index;
    std::unordered_set<std::string> id_seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (cells.size() != d + 2)
            throw ValidationError(path + ": row " + std::to_string(line_no) + " has " +
                                  std::to_string(cells.size()) + " cells, expected " +
                                  std::to_string(d + 2));
        const std::string& id = cells[0];
        if (id.empty())
            throw ValidationError(path + ": row " + std::to_string(line_no) + " has an empty sample_id");
        if (!id_seen.insert(id).second)
            throw ValidationError(path + ": row " + std::to_string(line_no) +
                                  " duplicate sample_id '" + id + "'");
        const std::string& label = cells[1];
        auto it = label_index.find(label);
        int li;
        if (it == label_index.end()) {
            li = static_cast<int>(ds.label_names.size());
            label_index.emplace(label, li);
            ds.label_names.push_back(label);
        } else {
            li = it->second;
        }
        FeatureVector fv;
        fv.bits.resize(d);
        for (std::size_t c = 0; c < d; ++c) {
            const std::string& cell = cells[c + 2];
            if (cell == "0") {
                fv.bits[c] = 0;
            } else if (cell == "1") {
                fv.bits[c] = 1;
            } else {
                throw ValidationError(path + ": row " + std::to_string(line_no) + ", column '" +
                                      ds.dictionary.names[c] + "': non-binary value '" + cell + "'");
            }
        }
        ds.samples.push_back(std::move(fv));
        ds.labels.push_back(li);
        ds.sample_ids.push_back(id);
    }
    if (ds.samples.empty()) throw ValidationError(path + ": no data rows");

    if (!dictionary_sidecar.empty()) {
        std::ifstream side(dictionary_sidecar);
        if (!side) throw ValidationError("cannot open dictionary sidecar: " + dictionary_sidecar);
        json doc;
        try {
            side >> doc;
        } catch (const std::exception& e) {
            throw ValidationError(dictionary_sidecar + ": invalid JSON: " + e.what());
        }
        if (!doc.is_array())
            throw ValidationError(dictionary_sidecar + ": expected a JSON array of {name, kind}");
        std::unordered_map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < d; ++i) pos[ds.dictionary.names[i]] = i;
        for (const auto& entry : doc) {
            std::string name = entry.at("name").get<std::string>();
            auto it = pos.find(name);
            if (it == pos.end())
                throw ValidationError(dictionary_sidecar + ": unknown feature '" + name + "'");
            ds.dictionary.kinds[it->second] =
                feature_kind_from_string(entry.at("kind").get<std::string>());
        }
    }

    ds.validate();
    return ds;
}

void write_csv(const LabeledDataset& ds, const std::string& path) {
    ds.validate();
    auto plain = [](const std::string& s) {
        return s.find_first_of(",\n\r") == std::string::npos;
    };
    for (const auto& n : ds.dictionary.names)
        if (!plain(n)) throw ValidationError("feature name '" + n + "' cannot be written to CSV");
    for (const auto& n : ds.label_names)
        if (!plain(n)) throw ValidationError("label name '" + n + "' cannot be written to CSV");
    for (const auto& id : ds.sample_ids)
        if (!plain(id)) throw ValidationError("sample_id '" + id + "' cannot be written to CSV");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write dataset file: " + path);
    out << "sample_id,label";
    for (const auto& n : ds.dictionary.names) out << ',' << n;
    out << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.sample_ids[i] << ',' << ds.label_names[ds.labels[i]];
        for (auto b : ds.samples[i].bits) out << ',' << (b ? '1' : '0');
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

Split split_per_class(const LabeledDataset& ds, std::uint64_t seed) {
    if (ds.size() == 0) throw ValidationError("cannot split an empty dataset");
    // Class buckets in label-index order; sample order inside preserved from
    // the file until shuffled by the seeded generator.
    std::vector<std::vector<std::size_t>> buckets(ds.class_count());
    for (std::size_t i = 0; i < ds.size(); ++i) buckets[ds.labels[i]].push_back(i);

    Split split;
    for (std::size_t c = 0; c < buckets.size(); ++c) {
        auto& bucket = buckets[c];
        if (bucket.empty()) continue;
        Rng rng(detail::mix_seed(seed, c));
        rng.shuffle(bucket);
        std::size_t n_train = bucket.size() == 1 ? 1 : bucket.size() / 2;
        for (std::size_t i = 0; i < bucket.size(); ++i)
            (i < n_train ? split.train_indices : split.test_indices).push_back(bucket[i]);
    }
    std::sort(split.train_indices.begin(), split.train_indices.end());
    std::sort(split.test_indices.begin(), split.test_indices.end());
    return split;
}

Split split_random(const LabeledDataset& ds, double train_fraction, std::uint64_t seed) {
    if (ds.size() == 0) throw ValidationError("cannot split an empty dataset");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ValidationError("train_fraction must be in (0,1)");
    Rng rng(detail::mix_seed(seed, "split_random"));
    Split split;
    for (std::size_t i = 0; i < ds.size(); ++i)
        (rng.bernoulli(train_fraction) ? split.train_indices : split.test_indices).push_back(i);
    if (split.train_indices.empty() || split.test_indices.empty())
        throw ValidationError("degenerate split: one side is empty (n=" +
                              std::to_string(ds.size()) + ", fraction=" +
                              detail::fmt_double(train_fraction) + ")");
    return split;
}

void SyntheticSpec::validate() const {
    std::vector<std::string> problems;
    if (d == 0) problems.push_back("d must be >= 1");
    if (n == 0) problems.push_back("n must be >= 1");
    if (!(noise_rate >= 0.0 && noise_rate < 0.5))
        problems.push_back("noise_rate must be in [0, 0.5)");
    if (rule_sets.size() < 2) problems.push_back("rule_sets must cover at least 2 classes");
    if (!label_names.empty() && label_names.size() != rule_sets.size())
        problems.push_back("label_names length must match rule_sets length");
    for (std::size_t c = 0; c < rule_sets.size(); ++c) {
        if (rule_sets[c].empty())
            problems.push_back("class " + std::to_string(c) + " has no conjunctions");
        for (std::size_t r = 0; r < rule_sets[c].size(); ++r) {
            const auto& conj = rule_sets[c][r];
            if (conj.terms.empty())
                problems.push_back("class " + std::to_string(c) + " conjunction " +
                                   std::to_string(r) + " is empty");
            std::map<std::size_t, std::uint8_t> seen;
            for (auto [f, bit] : conj.terms) {
                if (f >= d)
                    problems.push_back("class " + std::to_string(c) + " conjunction " +
                                       std::to_string(r) + ": feature index " +
                                       std::to_string(f) + " out of range");
                if (bit > 1)
                    problems.push_back("class " + std::to_string(c) + " conjunction " +
                                       std::to_string(r) + ": bit must be 0 or 1");
                auto it = seen.find(f);
                if (it != seen.end() && it->second != bit)
                    problems.push_back("class " + std::to_string(c) + " conjunction " +
                                       std::to_string(r) + ": feature " + std::to_string(f) +
                                       " required both 0 and 1");
                seen.emplace(f, bit);
            }
        }
    }
    if (!problems.empty()) {
        std::string msg = "invalid synthetic spec:";
        for (const auto& p : problems) msg += "\n  - " + p;
        throw ValidationError(msg);
    }
}

namespace {

bool conjunction_satisfied(const PlantedConjunction& conj, const FeatureVector& x) {
    for (auto [f, bit] : conj.terms)
        if (x.bits[f] != bit) return false;
    return true;
}

// True when planting `planted` forces `other` to hold as well, i.e. every
// term of `other` is already required identically by `planted`.
bool implied_by(const PlantedConjunction& other, const PlantedConjunction& planted) {
    for (auto [f, bit] : other.terms) {
        bool covered = false;
        for (auto [pf, pbit] : planted.terms) {
            if (pf == f) {
                covered = (pbit == bit);
                break;
            }
        }
        if (!covered) return false;
    }
    return true;
}

}  // namespace

LabeledDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t num_classes = spec.rule_sets.size();

    // Static feasibility check: a foreign conjunction implied by a planted one
    // can never be broken, which would make labels ambiguous.
    for (std::size_t c = 0; c < num_classes; ++c)
        for (const auto& planted : spec.rule_sets[c])
            for (std::size_t o = 0; o < num_classes; ++o) {
                if (o == c) continue;
                for (const auto& other : spec.rule_sets[o])
                    if (implied_by(other, planted))
                        throw ValidationError(
                            "conflicting rule_sets: a conjunction of class " + std::to_string(c) +
                            " always satisfies a conjunction of class " + std::to_string(o));
            }

    LabeledDataset ds;
    for (std::size_t f = 0; f < spec.d; ++f) {
        ds.dictionary.names.push_back("f" + std::to_string(f));
        ds.dictionary.kinds.push_back(FeatureKind::synthetic);
    }
    if (spec.label_names.empty()) {
        for (std::size_t c = 0; c < num_classes; ++c)
            ds.label_names.push_back("class" + std::to_string(c));
    } else {
        ds.label_names = spec.label_names;
    }

    Rng rng(detail::mix_seed(spec.seed, "synthetic"));
    int id_width = 1;
    for (std::size_t v = spec.n; v >= 10; v /= 10) ++id_width;

    // Flattened conjunction list: the pick is uniform over entries, so
    // multiplicities weight both patterns within a class and class balance.
    std::vector<std::pair<std::size_t, const PlantedConjunction*>> flat;
    for (std::size_t c = 0; c < num_classes; ++c)
        for (const auto& conj : spec.rule_sets[c]) flat.emplace_back(c, &conj);

    for (std::size_t i = 0; i < spec.n; ++i) {
        const auto& [cls, planted_ptr] = flat[rng.uniform_index(flat.size())];
        const auto& planted = *planted_ptr;

        FeatureVector fv;
        fv.bits.resize(spec.d);
        for (std::size_t f = 0; f < spec.d; ++f) fv.bits[f] = rng.bernoulli(0.5) ? 1 : 0;
        for (auto [f, bit] : planted.terms) fv.bits[f] = bit;

        // Break any foreign conjunction that came out satisfied by accident:
        // flip its first feature that the planted conjunction leaves free.
        for (std::size_t o = 0; o < num_classes; ++o) {
            if (o == cls) continue;
            for (const auto& other : spec.rule_sets[o]) {
                if (!conjunction_satisfied(other, fv)) continue;
                for (auto [f, bit] : other.terms) {
                    bool fixed = false;
                    for (auto [pf, pbit] : planted.terms)
                        if (pf == f) {
                            fixed = true;
                            break;
                        }
                    if (!fixed) {
                        fv.bits[f] = bit ? 0 : 1;
                        break;
                    }
                }
            }
        }

        int label = static_cast<int>(cls);
        if (spec.noise_rate > 0.0 && rng.bernoulli(spec.noise_rate)) {
            // Uniform among the other classes.
            std::size_t shift = 1 + rng.uniform_index(num_classes - 1);
            label = static_cast<int>((cls + shift) % num_classes);
        }

        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "s%0*zu", id_width, i);
        ds.samples.push_back(std::move(fv));
        ds.labels.push_back(label);
        ds.sample_ids.push_back(idbuf);
    }
    ds.validate();
    return ds;
}

SyntheticSpec parse_synthetic_spec(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const std::exception& e) {
        throw ValidationError(std::string("invalid synthetic spec JSON: ") + e.what());
    }
    SyntheticSpec spec;
    try {
        spec.d = doc.at("d").get<std::size_t>();
        spec.n = doc.at("n").get<std::size_t>();
        spec.noise_rate = doc.value("noise_rate", 0.0);
        spec.seed = doc.value("seed", 0ull);
        if (doc.contains("label_names"))
            spec.label_names = doc.at("label_names").get<std::vector<std::string>>();
        for (const auto& cls : doc.at("rule_sets")) {
            std::vector<PlantedConjunction> conjunctions;
            for (const auto& conj : cls) {
                // Either a plain term array, or {"copies": N, "terms": [...]}
                // as shorthand for listing the same conjunction N times.
                std::size_t copies = 1;
                const json* terms = &conj;
                if (conj.is_object()) {
                    copies = conj.value("copies", std::size_t{1});
                    terms = &conj.at("terms");
                }
                PlantedConjunction pc;
                for (const auto& term : *terms)
                    pc.terms.emplace_back(term.at("feature").get<std::size_t>(),
                                          term.at("bit").get<std::uint8_t>());
                for (std::size_t c = 0; c < copies; ++c) conjunctions.push_back(pc);
            }
            spec.rule_sets.push_back(std::move(conjunctions));
        }
    } catch (const ValidationError&) {
        throw;
    } catch (const std::exception& e) {
        throw ValidationError(std::string("invalid synthetic spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open synthetic spec: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_synthetic_spec(ss.str());
}

}  // namespace exbench
