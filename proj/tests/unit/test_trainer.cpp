#include <doctest.h>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "oos/errors.hpp"
#include "oos/synthetic.hpp"
#include "oos/trainer.hpp"
#include "support.hpp"

using namespace oos;

namespace {

SplitResult blob_split(size_t n_classes, double known_ratio, uint64_t seed, size_t per_class = 50,
                       double radius = 2.5, double sigma = 0.4) {
    const Dataset ds = make_blob_dataset(n_classes, per_class, radius, sigma, seed);
    return split_known_unknown(ds, {known_ratio, seed}, 0.2);
}

TrainConfig small_config(uint64_t seed) {
    TrainConfig config;
    config.ratio = {25, 0, 0};
    config.head_lr = 0.01;
    config.hidden = {16, 16};
    config.max_epochs = 20;
    config.patience = 20;
    config.seed = seed;
    return config;
}

double train_accuracy(const MlpClassifier& model, const Encoder& encoder, const Dataset& train,
                      const LabelSpace& ls) {
    std::vector<Utterance> utts;
    std::vector<int> golds;
    for (const auto& ex : train.examples) {
        utts.push_back(ex.utterance);
        golds.push_back(ls.index_of(ex.label));
    }
    const auto preds = predict(model, encoder.encode_batch(utts));
    size_t hit = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == golds[i]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(preds.size());
}

}  // namespace

TEST_CASE("train solves linearly separable 2-class blobs") {
    const SplitResult split = blob_split(2, 1.0, 5);
    EncoderSpec spec;
    spec.kind = EncoderKind::identity;
    spec.dim = 2;
    const TrainResult result = train(small_config(5), split, {}, spec);
    CHECK(train_accuracy(result.model, *result.encoder, split.train, split.label_space) >= 0.99);
    CHECK(result.history.epochs.size() <= 20);
    CHECK(result.history.best_epoch >= 1);
}

TEST_CASE("constant validation score stops after patience runs out") {
    const SplitResult split = blob_split(2, 1.0, 6);
    EncoderSpec spec;
    spec.kind = EncoderKind::identity;
    spec.dim = 2;

    TrainConfig config = small_config(6);
    config.patience = 1;
    config.max_epochs = 50;
    TrainHooks hooks;
    hooks.validation_override = [](const MlpClassifier&, const Encoder&, size_t) { return 0.25; };
    const TrainResult result = train(config, split, {}, spec, hooks);
    CHECK(result.history.epochs.size() == 2);  // first epoch improves over -inf, second trips patience
    CHECK(result.history.best_epoch == 1);
}

TEST_CASE("the returned model is the best-validation epoch, not the last") {
    const SplitResult split = blob_split(2, 1.0, 7);
    EncoderSpec spec;
    spec.kind = EncoderKind::identity;
    spec.dim = 2;

    TrainConfig config = small_config(7);
    config.max_epochs = 4;
    config.patience = 10;

    const std::vector<double> scripted{1.0, 3.0, 2.0, 1.5};
    const FeatureVector probe{0.7, -0.3};
    std::vector<double> probe_logit_per_epoch;
    TrainHooks hooks;
    hooks.validation_override = [&](const MlpClassifier& m, const Encoder&, size_t epoch) {
        probe_logit_per_epoch.push_back(forward(m, {probe})(0, 0));
        return scripted[epoch - 1];
    };
    const TrainResult result = train(config, split, {}, spec, hooks);
    CHECK(result.history.best_epoch == 2);
    CHECK(forward(result.model, {probe})(0, 0) == probe_logit_per_epoch[1]);
}

TEST_CASE("training twice with one seed gives a bitwise-identical history") {
    const SplitResult split = blob_split(3, 1.0, 8);
    EncoderSpec spec;
    spec.kind = EncoderKind::identity;
    spec.dim = 2;

    TrainConfig config = small_config(8);
    config.ratio = {20, 0, 40};
    config.max_epochs = 6;

    const TrainResult a = train(config, split, {}, spec);
    const TrainResult b = train(config, split, {}, spec);
    REQUIRE(a.history.epochs.size() == b.history.epochs.size());
    CHECK(history_to_jsonl(a.history) == history_to_jsonl(b.history));
    CHECK(a.model == b.model);
}

TEST_CASE("trainable hashed encoder lowers the loss on a text task") {
    // two intents with disjoint vocabulary; the table must learn to
    // separate them
    Dataset ds;
    ds.class_names = {"greet", "weather"};
    const char* greet[] = {"hello there friend", "hi there", "good morning friend",
                           "hello hello", "hey there buddy", "good evening friend"};
    const char* weather[] = {"rain is coming", "sunny sky today", "snow storm warning",
                             "cloudy sky ahead", "heavy rain today", "cold wind tonight"};
    for (int i = 0; i < 6; ++i) {
        ds.examples.push_back({oos::test::text_utterance("g" + std::to_string(i), greet[i]), "greet"});
        ds.examples.push_back({oos::test::text_utterance("w" + std::to_string(i), weather[i]), "weather"});
    }
    const SplitResult split = split_known_unknown(ds, {1.0, 3}, 0.3);

    EncoderSpec spec;
    spec.kind = EncoderKind::hashed_mean;
    spec.dim = 16;
    spec.hash_buckets = 1024;
    spec.trainable = true;

    TrainConfig config;
    config.ratio = {4, 0, 0};
    config.head_lr = 0.01;
    config.encoder_lr = 0.05;
    config.hidden = {16};
    config.max_epochs = 30;
    config.patience = 30;
    config.seed = 4;

    const TrainResult result = train(config, split, {}, spec);
    CHECK(result.history.epochs.front().train_loss > result.history.epochs.back().train_loss);
    CHECK(train_accuracy(result.model, *result.encoder, split.train, split.label_space) >= 0.9);
    // the table moved away from its init
    const auto* hashed = dynamic_cast<const HashedMeanEncoder*>(result.encoder.get());
    REQUIRE(hashed != nullptr);
    HashedMeanEncoder fresh(spec, config.seed);
    CHECK(hashed->table().raw() != fresh.table().raw());
}

TEST_CASE("train propagates contract violations") {
    const SplitResult split = blob_split(2, 1.0, 9);
    EncoderSpec spec;
    spec.kind = EncoderKind::identity;
    spec.dim = 2;

    SUBCASE("open quota without a pool") {
        TrainConfig config = small_config(9);
        config.ratio = {10, 5, 0};
        CHECK_THROWS_AS(train(config, split, {}, spec), DataError);
    }
    SUBCASE("bad patience") {
        TrainConfig config = small_config(9);
        config.patience = 0;
        CHECK_THROWS_AS(train(config, split, {}, spec), UsageError);
    }
    SUBCASE("divergence guard names the failing step") {
        TrainConfig config = small_config(9);
        config.head_lr = 1e38;  // a few steps overflow the f32 parameters
        CHECK_THROWS_WITH_AS(train(config, split, {}, spec), doctest::Contains("epoch"), NumericalError);
    }
    SUBCASE("whole-set parents and mix-gradient backflow both reject the combination") {
        TrainConfig config = small_config(9);
        config.synth_from_whole_set = true;
        config.detach_synthetic = false;
        CHECK_THROWS_AS(train(config, split, {}, spec), UsageError);
    }
}

TEST_CASE("parent-sourcing and gradient-backflow variants train successfully") {
    // text task with a trainable table so both flags have something to do
    Dataset ds;
    ds.class_names = {"a", "b"};
    const char* a_texts[] = {"red apple pie", "green apple tart", "apple juice fresh", "red fruit bowl"};
    const char* b_texts[] = {"fast car race", "slow car ride", "car engine noise", "race track day"};
    for (int i = 0; i < 4; ++i) {
        ds.examples.push_back({oos::test::text_utterance("a" + std::to_string(i), a_texts[i]), "a"});
        ds.examples.push_back({oos::test::text_utterance("b" + std::to_string(i), b_texts[i]), "b"});
    }
    const SplitResult split = split_known_unknown(ds, {1.0, 2}, 0.3);

    EncoderSpec spec;
    spec.kind = EncoderKind::hashed_mean;
    spec.dim = 8;
    spec.hash_buckets = 1024;
    spec.trainable = true;

    TrainConfig base;
    base.ratio = {3, 0, 6};
    base.head_lr = 0.01;
    base.encoder_lr = 0.02;
    base.hidden = {8};
    base.max_epochs = 5;
    base.patience = 5;
    base.seed = 21;

    TrainConfig whole = base;
    whole.synth_from_whole_set = true;
    TrainConfig attached = base;
    attached.detach_synthetic = false;

    const TrainResult r_base = train(base, split, {}, spec);
    const TrainResult r_whole = train(whole, split, {}, spec);
    const TrainResult r_attached = train(attached, split, {}, spec);
    CHECK(r_base.history.epochs.size() == 5);
    CHECK(r_whole.history.epochs.size() == 5);
    CHECK(r_attached.history.epochs.size() == 5);
    // the mix-parent gradient path changes the encoder table updates
    const auto* t_base = dynamic_cast<const HashedMeanEncoder*>(r_base.encoder.get());
    const auto* t_attached = dynamic_cast<const HashedMeanEncoder*>(r_attached.encoder.get());
    REQUIRE(t_base != nullptr);
    REQUIRE(t_attached != nullptr);
    CHECK(t_base->table().raw() != t_attached->table().raw());
}

TEST_CASE("validation_score closed forms") {
    Dataset val;
    val.class_names = {"a", "b"};
    val.examples.push_back({oos::test::numeric_utterance("v0", {1.0, 0.0}), "a"});
    val.examples.push_back({oos::test::numeric_utterance("v1", {0.0, 1.0}), "b"});
    val.examples.push_back({oos::test::numeric_utterance("v2", {1.0, 0.0}), "a"});
    val.examples.push_back({oos::test::numeric_utterance("v3", {0.0, 1.0}), "b"});
    LabelSpace ls;
    ls.known_classes = {"a", "b"};
    ls.oos_index = 2;
    IdentityEncoder enc(2);

    SUBCASE("uniform model scores -ln(K+1)") {
        MlpClassifier uniform(2, {}, 3, 1.0, 0);
        uniform.weight(0).fill(0.0f);
        uniform.bias(0).fill(0.0f);
        const double score = validation_score(uniform, enc, val, ls, 0, 42);
        CHECK(score == doctest::Approx(-std::log(3.0)).epsilon(1e-12));
    }

    SUBCASE("a calibrated model scores strictly higher, near zero when confident") {
        auto diag_model = [](float c) {
            MlpClassifier m(2, {}, 3, 1.0, 0);
            m.weight(0).fill(0.0f);
            m.bias(0).fill(0.0f);
            m.weight(0)(0, 0) = c;
            m.weight(0)(1, 1) = c;
            return m;
        };
        const MlpClassifier weak = diag_model(2.0f);
        const MlpClassifier strong = diag_model(30.0f);
        const double weak_score = validation_score(weak, enc, val, ls, 0, 42);
        const double strong_score = validation_score(strong, enc, val, ls, 0, 42);
        // hand-computed: -log(e^c / (e^c + 2)) = log(1 + 2 e^-c)
        CHECK(weak_score == doctest::Approx(-std::log(1.0 + 2.0 * std::exp(-2.0))).epsilon(1e-9));
        CHECK(strong_score > weak_score);
        CHECK(strong_score <= 0.0);
        CHECK(strong_score > -1e-9);
    }

    SUBCASE("synthetic quota augments the set deterministically") {
        MlpClassifier m(2, {4}, 3, 1.0, 12);
        const double s1 = validation_score(m, enc, val, ls, 8, 42);
        const double s2 = validation_score(m, enc, val, ls, 8, 42);
        CHECK(s1 == s2);
        const double s3 = validation_score(m, enc, val, ls, 8, 43);
        CHECK(s1 != s3);
    }

    SUBCASE("single class with a synthetic quota is an error") {
        Dataset single;
        single.class_names = {"a"};
        single.examples.push_back({oos::test::numeric_utterance("v0", {1.0, 0.0}), "a"});
        LabelSpace ls1;
        ls1.known_classes = {"a"};
        ls1.oos_index = 1;
        MlpClassifier m(2, {}, 2, 1.0, 0);
        CHECK_THROWS_AS(validation_score(m, enc, single, ls1, 4, 0), DataError);
        CHECK_NOTHROW(validation_score(m, enc, single, ls1, 0, 0));
    }
}

TEST_CASE("each full epoch consumes n_batches * (ni + no + ns) examples") {
    // per class: 36 points -> 9 test, 5 validation, 22 train; 66 train
    // points split exactly into 3 batches of 22
    const SplitResult split = blob_split(3, 1.0, 12, 36);
    REQUIRE(split.train.examples.size() == 66);

    EncoderSpec spec;
    spec.kind = EncoderKind::identity;
    spec.dim = 2;
    TrainConfig config = small_config(12);
    config.ratio = {22, 10, 30};
    config.max_epochs = 3;
    config.patience = 3;

    std::vector<Utterance> pool;
    for (int i = 0; i < 5; ++i) {
        pool.push_back(oos::test::numeric_utterance("p" + std::to_string(i), {9.0, 9.0}));
    }
    const TrainResult result = train(config, split, pool, spec);
    for (const auto& rec : result.history.epochs) {
        CHECK(rec.open_used == 3 * 10);
        CHECK(rec.synthetic_used == 3 * 30);
    }
}

TEST_CASE("synthetic trace logs parents and theta as jsonl") {
    oos::test::TempDir dir("trace");
    const SplitResult split = blob_split(3, 1.0, 13);
    EncoderSpec spec;
    spec.kind = EncoderKind::identity;
    spec.dim = 2;
    TrainConfig config = small_config(13);
    config.ratio = {20, 0, 8};
    config.max_epochs = 2;
    config.patience = 2;
    config.synth_trace_path = (dir / "trace.jsonl").string();
    train(config, split, {}, spec);

    std::ifstream in(dir / "trace.jsonl");
    REQUIRE(in.good());
    std::string line;
    size_t lines = 0;
    while (std::getline(in, line)) {
        const auto rec = nlohmann::json::parse(line);
        CHECK(rec.contains("epoch"));
        CHECK(rec["class_alpha"] != rec["class_beta"]);
        const double theta = rec["theta"].get<double>();
        CHECK(theta >= 0.0);
        CHECK(theta < 1.0);
        ++lines;
    }
    CHECK(lines > 0);
    CHECK(lines % 8 == 0);  // 8 synthetics per composed batch
}

TEST_CASE("history jsonl is stable and excludes wall time") {
    TrainHistory history;
    history.epochs.push_back({1, 0.5, -1.0, 40, 10, 123.456});
    history.epochs.push_back({2, 0.25, -0.5, 40, 10, 99.0});
    history.best_epoch = 2;
    const std::string text = history_to_jsonl(history);
    CHECK(text.find("wall") == std::string::npos);
    CHECK(text.find("123.456") == std::string::npos);
    TrainHistory same = history;
    same.epochs[0].wall_ms = 777.0;  // timing must not affect the artifact
    CHECK(history_to_jsonl(same) == text);
}
