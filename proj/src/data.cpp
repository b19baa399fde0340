#include "oos/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "oos/errors.hpp"
#include "oos/rng.hpp"
#include "oos/util.hpp"

using json = nlohmann::json;

namespace oos {

namespace {

std::string loc(const std::filesystem::path& path, size_t line) {
    return path.string() + ":" + std::to_string(line);
}

std::string label_from_json(const json& rec, const std::filesystem::path& path, size_t line) {
    if (!rec.contains("label")) throw DataError(loc(path, line) + ": record missing `label`");
    const json& l = rec.at("label");
    if (l.is_string()) return l.get<std::string>();
    if (l.is_number_integer()) return std::to_string(l.get<long long>());
    throw DataError(loc(path, line) + ": `label` must be a string");
}

Utterance utterance_from_json(const json& rec, const std::filesystem::path& path, size_t line) {
    Utterance u;
    if (rec.contains("id")) {
        if (!rec.at("id").is_string()) throw DataError(loc(path, line) + ": `id` must be a string");
        u.id = rec.at("id").get<std::string>();
    } else {
        u.id = "line" + std::to_string(line);
    }
    const bool has_text = rec.contains("text");
    const bool has_vec = rec.contains("vec");
    if (has_text == has_vec) {
        throw DataError(loc(path, line) + ": record must have exactly one of `text` or `vec`");
    }
    if (has_text) {
        if (!rec.at("text").is_string()) throw DataError(loc(path, line) + ": `text` must be a string");
        u.text = rec.at("text").get<std::string>();
    } else {
        const json& v = rec.at("vec");
        if (!v.is_array() || v.empty()) throw DataError(loc(path, line) + ": `vec` must be a nonempty array");
        std::vector<double> values;
        values.reserve(v.size());
        for (const auto& x : v) {
            if (!x.is_number()) throw DataError(loc(path, line) + ": `vec` entries must be numbers");
            values.push_back(x.get<double>());
        }
        u.numeric = std::move(values);
    }
    return u;
}

// Minimal CSV with double-quote escaping ("" inside a quoted field).
std::vector<std::string> parse_csv_row(const std::string& line, const std::filesystem::path& path,
                                       size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) throw DataError(loc(path, line_no) + ": unterminated quote");
    fields.push_back(cur);
    return fields;
}

void append_example(Dataset& out, std::unordered_set<std::string>& seen_ids,
                    std::unordered_map<std::string, bool>& seen_classes, Utterance u, std::string label,
                    const std::filesystem::path& path, size_t line) {
    if (!seen_ids.insert(u.id).second) {
        throw DataError(loc(path, line) + ": duplicate id `" + u.id + "`");
    }
    if (seen_classes.emplace(label, true).second) out.class_names.push_back(label);
    out.examples.push_back({std::move(u), std::move(label)});
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

json dump_utterance(const Utterance& u) {
    json rec;
    rec["id"] = u.id;
    if (u.has_text()) rec["text"] = *u.text;
    if (u.has_numeric()) rec["vec"] = *u.numeric;
    return rec;
}

Utterance parse_utterance_line(const std::string& line, const std::filesystem::path& path, size_t line_no) {
    json rec;
    try {
        rec = json::parse(line);
    } catch (const json::parse_error& e) {
        throw DataError(loc(path, line_no) + ": malformed record: " + e.what());
    }
    if (!rec.is_object()) throw DataError(loc(path, line_no) + ": record is not a json object");
    return utterance_from_json(rec, path, line_no);
}

}  // namespace

int LabelSpace::index_of(const std::string& name) const {
    for (size_t i = 0; i < known_classes.size(); ++i) {
        if (known_classes[i] == name) return static_cast<int>(i);
    }
    return -1;
}

DatasetFormat sniff_format(const std::filesystem::path& path) {
    return path.extension() == ".csv" ? DatasetFormat::csv : DatasetFormat::jsonl;
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset: " + path.string());

    Dataset out;
    std::unordered_set<std::string> seen_ids;
    std::unordered_map<std::string, bool> seen_classes;
    size_t line_no = 0;
    std::string line;
    // -1 unknown, 0 text, 1 numeric; mixing the two is an error
    int modality = -1;
    std::optional<size_t> vec_dim;

    auto check_modality = [&](const Utterance& u, size_t at_line) {
        const int m = u.has_numeric() ? 1 : 0;
        if (modality == -1) modality = m;
        if (modality != m) throw DataError(loc(path, at_line) + ": mixed text and numeric records");
        if (u.has_numeric()) {
            if (!vec_dim) vec_dim = u.numeric->size();
            if (*vec_dim != u.numeric->size()) {
                throw DataError(loc(path, at_line) + ": `vec` dimension " + std::to_string(u.numeric->size()) +
                                " differs from " + std::to_string(*vec_dim));
            }
        }
    };

    if (format == DatasetFormat::jsonl) {
        while (std::getline(in, line)) {
            ++line_no;
            line = strip_cr(line);
            if (line.empty()) continue;
            json rec;
            try {
                rec = json::parse(line);
            } catch (const json::parse_error& e) {
                throw DataError(loc(path, line_no) + ": malformed record: " + e.what());
            }
            if (!rec.is_object()) throw DataError(loc(path, line_no) + ": record is not a json object");
            Utterance u = utterance_from_json(rec, path, line_no);
            check_modality(u, line_no);
            std::string label = label_from_json(rec, path, line_no);
            append_example(out, seen_ids, seen_classes, std::move(u), std::move(label), path, line_no);
        }
    } else {
        if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
        ++line_no;
        line = strip_cr(line);
        if (line != "id,text,label") {
            throw DataError(loc(path, line_no) + ": expected header `id,text,label`, got `" + line + "`");
        }
        while (std::getline(in, line)) {
            ++line_no;
            line = strip_cr(line);
            if (line.empty()) continue;
            const auto fields = parse_csv_row(line, path, line_no);
            if (fields.size() != 3) {
                throw DataError(loc(path, line_no) + ": expected 3 fields, got " +
                                std::to_string(fields.size()));
            }
            Utterance u;
            u.id = fields[0].empty() ? "line" + std::to_string(line_no) : fields[0];
            u.text = fields[1];
            if (fields[2].empty()) throw DataError(loc(path, line_no) + ": record missing `label`");
            check_modality(u, line_no);
            append_example(out, seen_ids, seen_classes, std::move(u), fields[2], path, line_no);
        }
    }

    if (out.examples.empty()) throw DataError(path.string() + ": empty file");
    return out;
}

std::vector<Utterance> load_open_pool(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open pool: " + path.string());

    std::vector<Utterance> pool;
    std::unordered_set<std::string> seen;  // exact-content dedup
    std::string line;
    size_t line_no = 0;
    // One-line lookahead decides jsonl vs plain text for the whole file.
    bool decided = false;
    bool as_jsonl = false;

    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        if (!decided) {
            as_jsonl = !line.empty() && line.front() == '{';
            decided = true;
        }
        if (as_jsonl) {
            Utterance u = parse_utterance_line(line, path, line_no);
            std::string key;
            if (u.has_text()) {
                key = "t:" + *u.text;
            } else {
                key = "v:";
                for (double x : *u.numeric) key += std::to_string(x) + ",";
            }
            if (!seen.insert(key).second) continue;
            u.id = "pool" + std::to_string(line_no);
            pool.push_back(std::move(u));
        } else {
            if (!seen.insert(line).second) continue;
            Utterance u;
            u.id = "pool" + std::to_string(line_no);
            u.text = line;
            pool.push_back(std::move(u));
        }
    }
    if (pool.empty()) throw DataError(path.string() + ": empty pool");
    return pool;
}

namespace {

size_t round_half_up(double x) { return static_cast<size_t>(std::floor(x + 0.5)); }

}  // namespace

SplitResult split_known_unknown(const Dataset& dataset, const SplitSpec& spec, double val_fraction,
                                double test_fraction) {
    if (!(spec.known_ratio > 0.0) || spec.known_ratio > 1.0) {
        throw UsageError("known_ratio must be in (0, 1], got " + std::to_string(spec.known_ratio));
    }
    if (!(val_fraction > 0.0) || !(val_fraction < 0.5)) {
        throw UsageError("val_fraction must be in (0, 0.5), got " + std::to_string(val_fraction));
    }
    if (!(test_fraction > 0.0) || !(test_fraction < 0.9)) {
        throw UsageError("test_fraction must be in (0, 0.9), got " + std::to_string(test_fraction));
    }
    const size_t n_classes = dataset.class_names.size();
    if (spec.known_ratio < 1.0 && n_classes < 3) {
        throw DataError("class holdout needs at least 3 classes, dataset has " + std::to_string(n_classes));
    }
    if (n_classes < 2) throw DataError("dataset must have at least 2 classes");

    // Seeded shuffle then prefix selection; round half up, floor 2, and
    // keep at least one class held out whenever known_ratio < 1.
    size_t n_known = round_half_up(spec.known_ratio * static_cast<double>(n_classes));
    n_known = std::max<size_t>(n_known, 2);
    if (spec.known_ratio < 1.0) n_known = std::min(n_known, n_classes - 1);
    n_known = std::min(n_known, n_classes);
    if (n_known < 2) throw DataError("known-class count would be < 2");

    std::vector<std::string> shuffled = dataset.class_names;
    Rng class_rng(Rng::derive(spec.seed, stream::kClassChoice));
    class_rng.shuffle(shuffled);
    std::set<std::string> known_set(shuffled.begin(), shuffled.begin() + static_cast<long>(n_known));

    SplitResult out;
    // Known-class order follows the dataset's class_names order, so the
    // label indices do not depend on the shuffle.
    for (const auto& name : dataset.class_names) {
        if (known_set.count(name)) out.label_space.known_classes.push_back(name);
    }
    out.label_space.oos_index = static_cast<int>(out.label_space.known_classes.size());

    // Group example positions per class, in dataset order.
    std::map<std::string, std::vector<size_t>> by_class;
    for (size_t i = 0; i < dataset.examples.size(); ++i) {
        by_class[dataset.examples[i].label].push_back(i);
    }

    enum Bucket : uint8_t { kTrain, kVal, kTest };
    std::vector<Bucket> bucket(dataset.examples.size(), kTest);

    for (size_t ci = 0; ci < dataset.class_names.size(); ++ci) {
        const std::string& name = dataset.class_names[ci];
        auto& positions = by_class[name];
        if (!known_set.count(name)) continue;  // held out: everything stays kTest

        const size_t n = positions.size();
        if (n < 3) {
            throw DataError("known class `" + name + "` has " + std::to_string(n) +
                            " examples; need at least 3 to fill train/validation/test");
        }
        std::vector<size_t> order = positions;
        Rng ex_rng(Rng::derive(Rng::derive(spec.seed, stream::kExampleSplit), ci));
        ex_rng.shuffle(order);

        size_t n_test = std::max<size_t>(1, round_half_up(test_fraction * static_cast<double>(n)));
        n_test = std::min(n_test, n - 2);
        const size_t rem = n - n_test;
        size_t n_val = std::max<size_t>(1, round_half_up(val_fraction * static_cast<double>(rem)));
        n_val = std::min(n_val, rem - 1);

        for (size_t j = 0; j < order.size(); ++j) {
            if (j < n_test) bucket[order[j]] = kTest;
            else if (j < n_test + n_val) bucket[order[j]] = kVal;
            else bucket[order[j]] = kTrain;
        }
    }

    for (size_t i = 0; i < dataset.examples.size(); ++i) {
        const auto& ex = dataset.examples[i];
        const int label_index = out.label_space.index_of(ex.label);
        if (label_index < 0) {
            out.test.push_back({ex.utterance, out.label_space.oos_index, ex.label});
            continue;
        }
        switch (bucket[i]) {
            case kTrain: out.train.examples.push_back(ex); break;
            case kVal: out.validation.examples.push_back(ex); break;
            case kTest: out.test.push_back({ex.utterance, label_index, ex.label}); break;
        }
    }
    out.train.class_names = out.label_space.known_classes;
    out.validation.class_names = out.label_space.known_classes;
    return out;
}

namespace {

void save_labeled_jsonl(const std::filesystem::path& path, const Dataset& ds) {
    std::string content;
    for (const auto& ex : ds.examples) {
        json rec = dump_utterance(ex.utterance);
        rec["label"] = ex.label;
        content += rec.dump();
        content += '\n';
    }
    write_text_file(path, content);
}

Dataset load_labeled_jsonl(const std::filesystem::path& path) { return load_dataset(path, DatasetFormat::jsonl); }

}  // namespace

void save_split(const SplitResult& split, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_labeled_jsonl(dir / "train.jsonl", split.train);
    save_labeled_jsonl(dir / "validation.jsonl", split.validation);

    std::string test_content;
    for (const auto& ex : split.test) {
        json rec = dump_utterance(ex.utterance);
        rec["label"] = ex.gold_name;
        rec["label_index"] = ex.label;
        test_content += rec.dump();
        test_content += '\n';
    }
    write_text_file(dir / "test.jsonl", test_content);

    json ls;
    ls["known_classes"] = split.label_space.known_classes;
    ls["oos_index"] = split.label_space.oos_index;
    write_text_file(dir / "label_space.json", ls.dump(2) + "\n");
}

SplitResult load_split(const std::filesystem::path& dir) {
    SplitResult out;
    const json ls = json::parse(read_text_file(dir / "label_space.json"));
    out.label_space.known_classes = ls.at("known_classes").get<std::vector<std::string>>();
    out.label_space.oos_index = ls.at("oos_index").get<int>();
    if (out.label_space.oos_index != out.label_space.k()) {
        throw DataError("label_space.json: oos_index does not equal the known-class count");
    }

    out.train = load_labeled_jsonl(dir / "train.jsonl");
    out.validation = load_labeled_jsonl(dir / "validation.jsonl");
    for (const Dataset* ds : {&out.train, &out.validation}) {
        for (const auto& ex : ds->examples) {
            if (out.label_space.index_of(ex.label) < 0) {
                throw DataError(dir.string() + ": split contains unknown class `" + ex.label + "`");
            }
        }
    }
    out.train.class_names = out.label_space.known_classes;
    out.validation.class_names = out.label_space.known_classes;

    const auto test_path = dir / "test.jsonl";
    std::ifstream in(test_path);
    if (!in) throw DataError("cannot open " + test_path.string());
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = strip_cr(line);
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(loc(test_path, line_no) + ": malformed record: " + e.what());
        }
        TestExample ex;
        ex.utterance = utterance_from_json(rec, test_path, line_no);
        if (!rec.contains("label_index") || !rec.at("label_index").is_number_integer()) {
            throw DataError(loc(test_path, line_no) + ": record missing integer `label_index`");
        }
        ex.label = rec.at("label_index").get<int>();
        if (ex.label < 0 || ex.label > out.label_space.oos_index) {
            throw DataError(loc(test_path, line_no) + ": label_index out of range");
        }
        if (rec.contains("label")) ex.gold_name = rec.at("label").get<std::string>();
        out.test.push_back(std::move(ex));
    }
    return out;
}

}  // namespace oos
