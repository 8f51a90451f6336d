#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "exbench/dataset.hpp"
#include "exbench/solvers.hpp"
#include "support.hpp"

using namespace exbench;
using testsupport::TempDir;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

SyntheticSpec two_class_spec(std::size_t d, std::size_t n, std::uint64_t seed,
                             double noise = 0.0) {
    SyntheticSpec spec;
    spec.d = d;
    spec.n = n;
    spec.noise_rate = noise;
    spec.seed = seed;
    spec.rule_sets = {
        {PlantedConjunction{{{0, 0}, {1, 0}}}},
        {PlantedConjunction{{{0, 1}, {1, 1}}}},
    };
    return spec;
}

}  // namespace

TEST_CASE("load_csv parses a small file") {
    TempDir dir("csv");
    write_text(dir.file("d.csv"),
               "sample_id,label,f0,f1\n"
               "a,benign,0,1\n"
               "b,malicious,1,1\n"
               "c,benign,0,0\n");
    auto ds = load_csv(dir.file("d.csv"));
    CHECK(ds.feature_count() == 2);
    CHECK(ds.size() == 3);
    CHECK(ds.label_names == std::vector<std::string>{"benign", "malicious"});
    CHECK(ds.labels == std::vector<int>{0, 1, 0});
    CHECK(ds.samples[1].bits == std::vector<std::uint8_t>{1, 1});
}

TEST_CASE("load_csv names row and column for a non-binary cell") {
    TempDir dir("csv");
    write_text(dir.file("bad.csv"),
               "sample_id,label,f0,f1\n"
               "a,benign,0,1\n"
               "b,malicious,2,1\n");
    try {
        load_csv(dir.file("bad.csv"));
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        std::string msg = e.what();
        CHECK(msg.find("row 3") != std::string::npos);
        CHECK(msg.find("f0") != std::string::npos);
        CHECK(msg.find("'2'") != std::string::npos);
    }
}

TEST_CASE("load_csv rejects malformed inputs") {
    TempDir dir("csv");
    write_text(dir.file("h.csv"), "id,label,f0\na,x,0\n");
    CHECK_THROWS_AS(load_csv(dir.file("h.csv")), ValidationError);
    write_text(dir.file("dupf.csv"), "sample_id,label,f0,f0\na,x,0,1\n");
    CHECK_THROWS_AS(load_csv(dir.file("dupf.csv")), ValidationError);
    write_text(dir.file("dupid.csv"), "sample_id,label,f0\na,x,0\na,y,1\n");
    CHECK_THROWS_AS(load_csv(dir.file("dupid.csv")), ValidationError);
    write_text(dir.file("short.csv"), "sample_id,label,f0,f1\na,x,0\n");
    CHECK_THROWS_AS(load_csv(dir.file("short.csv")), ValidationError);
}

TEST_CASE("dictionary sidecar assigns feature kinds") {
    TempDir dir("csv");
    write_text(dir.file("d.csv"), "sample_id,label,sendSms,READ_SMS\na,m,1,0\n");
    write_text(dir.file("dict.json"),
               R"([{"name":"sendSms","kind":"api"},{"name":"READ_SMS","kind":"permission"}])");
    auto ds = load_csv(dir.file("d.csv"), dir.file("dict.json"));
    CHECK(ds.dictionary.kinds[0] == FeatureKind::api);
    CHECK(ds.dictionary.kinds[1] == FeatureKind::permission);
    write_text(dir.file("bad.json"), R"([{"name":"nope","kind":"api"}])");
    CHECK_THROWS_AS(load_csv(dir.file("d.csv"), dir.file("bad.json")), ValidationError);
}

TEST_CASE("write_csv / load_csv round-trip on random datasets") {
    TempDir dir("roundtrip");
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        auto ds = testsupport::random_dataset(40 + seed * 7, 5 + seed % 4, 2 + seed % 3, seed);
        write_csv(ds, dir.file("rt.csv"));
        auto back = load_csv(dir.file("rt.csv"));
        CHECK(back == ds);
    }
}

TEST_CASE("split_per_class honors the per-class halving convention") {
    // 5-sample class: 2 train, 3 test (the odd extra goes to test); 1-sample
    // class: entirely to train; 4-sample class: 2/2.
    LabeledDataset ds;
    ds.dictionary.names = {"f0"};
    ds.dictionary.kinds = {FeatureKind::synthetic};
    ds.label_names = {"a", "b", "c"};
    std::vector<int> labels = {0, 0, 0, 0, 0, 1, 2, 2, 2, 2};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        ds.samples.push_back(FeatureVector{{static_cast<std::uint8_t>(i % 2)}});
        ds.labels.push_back(labels[i]);
        ds.sample_ids.push_back("s" + std::to_string(i));
    }
    auto split = split_per_class(ds, 99);
    std::map<int, int> train_by_class, test_by_class;
    for (auto i : split.train_indices) train_by_class[ds.labels[i]]++;
    for (auto i : split.test_indices) test_by_class[ds.labels[i]]++;
    CHECK(train_by_class[0] == 2);
    CHECK(test_by_class[0] == 3);
    CHECK(train_by_class[1] == 1);
    CHECK(test_by_class[1] == 0);
    CHECK(train_by_class[2] == 2);
    CHECK(test_by_class[2] == 2);

    CHECK(split_per_class(ds, 99).train_indices == split.train_indices);
}

TEST_CASE("split_per_class invariant over random datasets") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        auto ds = testsupport::random_dataset(70, 4, 3, 1000 + seed);
        auto split = split_per_class(ds, seed);
        std::map<int, std::size_t> total, train;
        for (auto l : ds.labels) total[l]++;
        for (auto i : split.train_indices) train[ds.labels[i]]++;
        for (auto [cls, count] : total)
            CHECK(train[cls] == (count > 1 ? count / 2 : 1));
        std::set<std::size_t> seen(split.train_indices.begin(), split.train_indices.end());
        for (auto i : split.test_indices) CHECK(seen.insert(i).second);
        CHECK(seen.size() == ds.size());
    }
}

TEST_CASE("split_random stays within the binomial bound and is deterministic") {
    auto ds = testsupport::random_dataset(10000, 3, 2, 7);
    auto split = split_random(ds, 0.5, 21);
    // 3 sigma of Binomial(10000, 0.5): 5000 +- 150.
    CHECK(split.train_indices.size() >= 4850);
    CHECK(split.train_indices.size() <= 5150);
    auto again = split_random(ds, 0.5, 21);
    CHECK(again.train_indices == split.train_indices);
    CHECK(again.test_indices == split.test_indices);
}

TEST_CASE("split_random rejects a degenerate split") {
    auto ds = testsupport::random_dataset(2, 3, 2, 7);
    CHECK_THROWS_AS(split_random(ds, 0.999, 3), ValidationError);
    CHECK_THROWS_AS(split_random(ds, 1.5, 3), ValidationError);
}

TEST_CASE("generate_synthetic plants the class conjunction") {
    auto spec = two_class_spec(10, 400, 5);
    auto ds = generate_synthetic(spec);
    CHECK(ds.size() == 400);
    CHECK(ds.feature_count() == 10);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] == 1) {
            CHECK(ds.samples[i].bits[0] == 1);
            CHECK(ds.samples[i].bits[1] == 1);
        } else {
            CHECK(ds.samples[i].bits[0] == 0);
            CHECK(ds.samples[i].bits[1] == 0);
        }
    }
}

TEST_CASE("generate_synthetic is deterministic per seed") {
    auto a = generate_synthetic(two_class_spec(12, 200, 11));
    auto b = generate_synthetic(two_class_spec(12, 200, 11));
    CHECK(a == b);
    auto c = generate_synthetic(two_class_spec(12, 200, 12));
    CHECK(a.samples != c.samples);
}

TEST_CASE("noise-free labels are a function of the planted features: shallow tree is perfect") {
    auto ds = generate_synthetic(two_class_spec(10, 1000, 17));
    CartParams params;
    params.max_depth = 2;
    auto tree = cart_build(ds.samples, ds.labels, std::vector<double>(ds.size(), 1.0), params);
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(tree.predict(ds.samples[i]) == ds.labels[i]);
}

TEST_CASE("generate_synthetic rejects contradictory and unbreakable rules") {
    SyntheticSpec spec;
    spec.d = 4;
    spec.n = 10;
    spec.seed = 1;
    spec.rule_sets = {{PlantedConjunction{{{0, 0}, {0, 1}}}},
                      {PlantedConjunction{{{1, 1}}}}};
    CHECK_THROWS_AS(generate_synthetic(spec), ValidationError);

    // Class 1's conjunction is implied by class 0's: impossible to break.
    SyntheticSpec overlap;
    overlap.d = 4;
    overlap.n = 10;
    overlap.seed = 1;
    overlap.rule_sets = {{PlantedConjunction{{{0, 1}, {1, 1}}}},
                         {PlantedConjunction{{{0, 1}}}}};
    CHECK_THROWS_AS(generate_synthetic(overlap), ValidationError);
}

TEST_CASE("noise flips labels at roughly the configured rate") {
    auto spec = two_class_spec(8, 4000, 23, 0.2);
    auto ds = generate_synthetic(spec);
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        int planted = ds.samples[i].bits[0] ? 1 : 0;
        flipped += ds.labels[i] != planted;
    }
    double rate = static_cast<double>(flipped) / static_cast<double>(ds.size());
    CHECK(rate > 0.15);
    CHECK(rate < 0.25);
}

TEST_CASE("synthetic spec JSON round-trips through the parser") {
    TempDir dir("spec");
    write_text(dir.file("spec.json"), R"({
      "d": 6, "n": 50, "noise_rate": 0.0, "seed": 3,
      "label_names": ["benign", "malicious"],
      "rule_sets": [
        [[{"feature":0,"bit":0}]],
        [[{"feature":0,"bit":1},{"feature":1,"bit":1}]]
      ]
    })");
    auto spec = load_synthetic_spec(dir.file("spec.json"));
    CHECK(spec.d == 6);
    CHECK(spec.rule_sets[1][0].terms.size() == 2);
    CHECK(spec.label_names[1] == "malicious");
    auto ds = generate_synthetic(spec);
    CHECK(ds.label_names[1] == "malicious");
}

TEST_CASE("conjunction multiplicity weights class balance and patterns") {
    SyntheticSpec spec;
    spec.d = 8;
    spec.n = 6000;
    spec.seed = 91;
    // benign listed 3x vs malicious 1x: expect ~75% / 25%.
    spec.rule_sets = {
        {PlantedConjunction{{{0, 0}, {1, 0}}}, PlantedConjunction{{{0, 0}, {1, 0}}},
         PlantedConjunction{{{0, 0}, {1, 1}}}},
        {PlantedConjunction{{{0, 1}, {1, 1}}}},
    };
    auto ds = generate_synthetic(spec);
    std::size_t benign = 0, benign01 = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] == 0) {
            ++benign;
            benign01 += ds.samples[i].bits[1] == 1;
        }
    }
    double benign_rate = static_cast<double>(benign) / static_cast<double>(ds.size());
    CHECK(benign_rate > 0.70);
    CHECK(benign_rate < 0.80);
    // Within benign, the (0,1) pattern was listed once of three entries.
    double pattern_rate = static_cast<double>(benign01) / static_cast<double>(benign);
    CHECK(pattern_rate > 0.28);
    CHECK(pattern_rate < 0.39);
}

TEST_CASE("synthetic spec JSON accepts the copies shorthand") {
    auto spec = parse_synthetic_spec(R"({
      "d": 4, "n": 10, "seed": 1,
      "rule_sets": [
        [{"copies": 3, "terms": [{"feature": 0, "bit": 0}]}],
        [[{"feature": 0, "bit": 1}]]
      ]
    })");
    CHECK(spec.rule_sets[0].size() == 3);
    CHECK(spec.rule_sets[0][0] == spec.rule_sets[0][2]);
    CHECK(spec.rule_sets[1].size() == 1);
}

TEST_CASE("write_csv refuses names the plain CSV format cannot carry") {
    TempDir dir("badnames");
    auto ds = testsupport::random_dataset(4, 2, 2, 3);
    ds.label_names[0] = "a,b";
    CHECK_THROWS_AS(write_csv(ds, dir.file("x.csv")), ValidationError);
}
