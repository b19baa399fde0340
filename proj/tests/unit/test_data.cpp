#include <doctest.h>

#include <set>
#include <sstream>

#include "oos/data.hpp"
#include "oos/errors.hpp"
#include "support.hpp"

using namespace oos;
using oos::test::TempDir;
using oos::test::write_file;

TEST_CASE("load_dataset parses jsonl text records") {
    TempDir dir("data_jsonl");
    write_file(dir / "d.jsonl",
               R"({"id": "a", "text": "hello there", "label": "greet"})" "\n"
               R"({"id": "b", "text": "bye now", "label": "farewell"})" "\n"
               R"({"id": "c", "text": "hi again", "label": "greet"})" "\n");
    const Dataset ds = load_dataset(dir / "d.jsonl", DatasetFormat::jsonl);
    CHECK(ds.examples.size() == 3);
    CHECK(ds.class_names == std::vector<std::string>{"greet", "farewell"});
    CHECK(ds.examples[0].utterance.text == "hello there");
    CHECK(ds.examples[2].label == "greet");
}

TEST_CASE("load_dataset reports the offending line") {
    TempDir dir("data_badline");
    SUBCASE("missing label") {
        write_file(dir / "d.jsonl",
                   R"({"id": "a", "text": "x", "label": "l"})" "\n"
                   R"({"id": "b", "text": "y"})" "\n");
        CHECK_THROWS_WITH_AS(load_dataset(dir / "d.jsonl", DatasetFormat::jsonl),
                             doctest::Contains(":2"), DataError);
    }
    SUBCASE("malformed json") {
        write_file(dir / "d.jsonl", "{\"id\": \"a\", \"text\": \"x\", \"label\": \"l\"}\nnot json{\n");
        CHECK_THROWS_WITH_AS(load_dataset(dir / "d.jsonl", DatasetFormat::jsonl),
                             doctest::Contains(":2"), DataError);
    }
    SUBCASE("mixed text and numeric records") {
        write_file(dir / "d.jsonl",
                   R"({"id": "a", "text": "x", "label": "l"})" "\n"
                   R"({"id": "b", "vec": [1.0], "label": "l"})" "\n");
        CHECK_THROWS_AS(load_dataset(dir / "d.jsonl", DatasetFormat::jsonl), DataError);
    }
    SUBCASE("inconsistent vec dimension") {
        write_file(dir / "d.jsonl",
                   R"({"id": "a", "vec": [1.0, 2.0], "label": "l"})" "\n"
                   R"({"id": "b", "vec": [1.0], "label": "l"})" "\n");
        CHECK_THROWS_AS(load_dataset(dir / "d.jsonl", DatasetFormat::jsonl), DataError);
    }
    SUBCASE("duplicate id") {
        write_file(dir / "d.jsonl",
                   R"({"id": "a", "text": "x", "label": "l"})" "\n"
                   R"({"id": "a", "text": "y", "label": "l"})" "\n");
        CHECK_THROWS_AS(load_dataset(dir / "d.jsonl", DatasetFormat::jsonl), DataError);
    }
    SUBCASE("empty file") {
        write_file(dir / "d.jsonl", "");
        CHECK_THROWS_AS(load_dataset(dir / "d.jsonl", DatasetFormat::jsonl), DataError);
    }
}

TEST_CASE("load_dataset parses csv with quoting") {
    TempDir dir("data_csv");
    write_file(dir / "d.csv",
               "id,text,label\n"
               "a,\"hello, you\",greet\n"
               "b,plain text,farewell\n"
               "c,\"she said \"\"hi\"\"\",greet\n");
    const Dataset ds = load_dataset(dir / "d.csv", DatasetFormat::csv);
    CHECK(ds.examples.size() == 3);
    CHECK(*ds.examples[0].utterance.text == "hello, you");
    CHECK(*ds.examples[2].utterance.text == "she said \"hi\"");
    CHECK(ds.class_names.size() == 2);
}

TEST_CASE("load_dataset handles an intent corpus with many classes") {
    // 150-class file in the shape of the big intent corpora; the class
    // list must come out in first-appearance order.
    TempDir dir("data_many");
    std::ostringstream content;
    for (int round = 0; round < 3; ++round) {
        for (int c = 0; c < 150; ++c) {
            content << R"({"id": "u)" << round << "_" << c << R"(", "text": "utterance )" << c
                    << R"(", "label": "intent)" << c << "\"}\n";
        }
    }
    write_file(dir / "d.jsonl", content.str());
    const Dataset ds = load_dataset(dir / "d.jsonl", DatasetFormat::jsonl);
    CHECK(ds.examples.size() == 450);
    REQUIRE(ds.class_names.size() == 150);
    CHECK(ds.class_names.front() == "intent0");
    CHECK(ds.class_names.back() == "intent149");
}

namespace {

Dataset grid_dataset(size_t n_classes, size_t per_class) {
    Dataset ds;
    for (size_t c = 0; c < n_classes; ++c) {
        const std::string name = "c" + std::to_string(c);
        ds.class_names.push_back(name);
        for (size_t i = 0; i < per_class; ++i) {
            ds.examples.push_back(
                {oos::test::numeric_utterance(name + "_" + std::to_string(i),
                                              {static_cast<double>(c), static_cast<double>(i)}),
                 name});
        }
    }
    return ds;
}

}  // namespace

TEST_CASE("split_known_unknown honors the contract on a 4x10 dataset") {
    const Dataset ds = grid_dataset(4, 10);
    const SplitResult split = split_known_unknown(ds, {0.5, 7}, 0.2);

    CHECK(split.label_space.k() == 2);
    CHECK(split.label_space.oos_index == 2);

    size_t oos_in_test = 0;
    for (const auto& ex : split.test) {
        if (ex.label == 2) ++oos_in_test;
    }
    CHECK(oos_in_test == 20);  // both held-out classes land in test entirely

    // id partition: disjoint and complete
    std::set<std::string> ids;
    for (const auto& ex : split.train.examples) CHECK(ids.insert(ex.utterance.id).second);
    for (const auto& ex : split.validation.examples) CHECK(ids.insert(ex.utterance.id).second);
    for (const auto& ex : split.test) CHECK(ids.insert(ex.utterance.id).second);
    CHECK(ids.size() == ds.examples.size());

    // no held-out class in train/validation
    for (const auto& ex : split.train.examples) CHECK(split.label_space.index_of(ex.label) >= 0);
    for (const auto& ex : split.validation.examples) CHECK(split.label_space.index_of(ex.label) >= 0);
}

TEST_CASE("split known-class count rounds half up") {
    // round(0.25 * 150) = round(37.5) = 38
    const Dataset ds = grid_dataset(150, 3);
    const SplitResult split = split_known_unknown(ds, {0.25, 1}, 0.2);
    CHECK(split.label_space.k() == 38);
}

TEST_CASE("split is deterministic and seed-sensitive") {
    const Dataset ds = grid_dataset(6, 8);
    const SplitResult a = split_known_unknown(ds, {0.5, 42}, 0.2);
    const SplitResult b = split_known_unknown(ds, {0.5, 42}, 0.2);
    REQUIRE(a.label_space.known_classes == b.label_space.known_classes);
    REQUIRE(a.train.examples.size() == b.train.examples.size());
    for (size_t i = 0; i < a.train.examples.size(); ++i) {
        CHECK(a.train.examples[i].utterance.id == b.train.examples[i].utterance.id);
    }
    REQUIRE(a.test.size() == b.test.size());
    for (size_t i = 0; i < a.test.size(); ++i) {
        CHECK(a.test[i].utterance.id == b.test[i].utterance.id);
        CHECK(a.test[i].label == b.test[i].label);
    }

    // different seeds eventually choose different known classes
    bool any_differs = false;
    for (uint64_t seed = 0; seed < 16 && !any_differs; ++seed) {
        const SplitResult c = split_known_unknown(ds, {0.5, seed}, 0.2);
        any_differs = c.label_space.known_classes != a.label_space.known_classes;
    }
    CHECK(any_differs);
}

TEST_CASE("split rejects impossible inputs") {
    CHECK_THROWS_AS(split_known_unknown(grid_dataset(2, 10), {0.5, 0}, 0.2), DataError);
    CHECK_THROWS_AS(split_known_unknown(grid_dataset(4, 2), {0.5, 0}, 0.2), DataError);
    CHECK_THROWS_AS(split_known_unknown(grid_dataset(4, 10), {1.5, 0}, 0.2), UsageError);
    CHECK_THROWS_AS(split_known_unknown(grid_dataset(4, 10), {0.5, 0}, 0.6), UsageError);
}

TEST_CASE("test label K appears iff known_ratio < 1") {
    const Dataset ds = grid_dataset(4, 10);
    const SplitResult full = split_known_unknown(ds, {1.0, 3}, 0.2);
    CHECK(full.label_space.k() == 4);
    for (const auto& ex : full.test) CHECK(ex.label < full.label_space.oos_index);

    const SplitResult held = split_known_unknown(ds, {0.9, 3}, 0.2);
    CHECK(held.label_space.k() == 3);  // capped at C-1 so one class is held out
    bool any_oos = false;
    for (const auto& ex : held.test) any_oos = any_oos || ex.label == held.label_space.oos_index;
    CHECK(any_oos);
}

TEST_CASE("load_open_pool reads text lines, skips blanks, dedupes") {
    TempDir dir("pool");
    SUBCASE("five sentences") {
        write_file(dir / "p.txt", "one\ntwo\nthree\nfour\nfive\n");
        CHECK(load_open_pool(dir / "p.txt").size() == 5);
    }
    SUBCASE("blank lines skipped") {
        write_file(dir / "p.txt", "one\n\ntwo\n\nthree\n");
        CHECK(load_open_pool(dir / "p.txt").size() == 3);
    }
    SUBCASE("exact duplicates removed") {
        write_file(dir / "p.txt", "same\nsame\nother\n");
        CHECK(load_open_pool(dir / "p.txt").size() == 2);
    }
    SUBCASE("jsonl with text") {
        write_file(dir / "p.jsonl", R"({"text": "alpha"})" "\n" R"({"text": "beta"})" "\n");
        const auto pool = load_open_pool(dir / "p.jsonl");
        REQUIRE(pool.size() == 2);
        CHECK(*pool[0].text == "alpha");
    }
    SUBCASE("jsonl with vec") {
        write_file(dir / "p.jsonl", R"({"vec": [1.0, 2.0]})" "\n" R"({"vec": [3.0, 4.0]})" "\n");
        const auto pool = load_open_pool(dir / "p.jsonl");
        REQUIRE(pool.size() == 2);
        CHECK(pool[1].numeric->at(0) == 3.0);
    }
    SUBCASE("empty pool is an error") {
        write_file(dir / "p.txt", "\n\n");
        CHECK_THROWS_AS(load_open_pool(dir / "p.txt"), DataError);
    }
}

TEST_CASE("load_open_pool streams a large pool") {
    TempDir dir("pool_large");
    {
        std::ofstream out(dir / "big.txt");
        for (size_t i = 0; i < 500000; ++i) out << "sentence number " << i << " of the pool\n";
    }
    const auto pool = load_open_pool(dir / "big.txt");
    CHECK(pool.size() == 500000);
}

TEST_CASE("split artifacts round-trip through disk") {
    TempDir dir("split_io");
    const Dataset ds = grid_dataset(5, 6);
    const SplitResult split = split_known_unknown(ds, {0.6, 11}, 0.25);
    save_split(split, dir.path());
    const SplitResult loaded = load_split(dir.path());

    CHECK(loaded.label_space.known_classes == split.label_space.known_classes);
    REQUIRE(loaded.train.examples.size() == split.train.examples.size());
    REQUIRE(loaded.test.size() == split.test.size());
    for (size_t i = 0; i < split.test.size(); ++i) {
        CHECK(loaded.test[i].utterance.id == split.test[i].utterance.id);
        CHECK(loaded.test[i].label == split.test[i].label);
        CHECK(loaded.test[i].utterance.numeric == split.test[i].utterance.numeric);
    }

    // byte-identical rewrite
    const std::string first = oos::test::slurp(dir / "train.jsonl");
    save_split(loaded, dir.path());
    CHECK(oos::test::slurp(dir / "train.jsonl") == first);
}
