#include "test_support.hpp"

#include "vulnpipe/cnn.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace vulnpipe;
using namespace vulnpipe::cnn;

namespace {

FieldTensor tiny_tensor(std::vector<double> values, std::size_t w, std::size_t k, std::size_t d) {
    FieldTensor t;
    t.w = w;
    t.k = k;
    t.d = d;
    t.values = std::move(values);
    t.mask.assign(w, false);
    return t;
}

// Two blobs: class 1 lights up feature 0 in field 0, class 0 feature 1, plus noise.
Dataset blobs(Rng& rng, std::size_t n, std::size_t w, std::size_t k, std::size_t d) {
    Dataset data;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        std::vector<bool> mask(w, false);
        FieldTensor t = oracle::random_tensor(rng, w, k, d, mask);
        for (double& v : t.values) v *= 0.1;
        t.values[label == 1 ? 0 : 1] += 2.0 + rng.uniform(-0.3, 0.3);
        data.tensors.push_back(std::move(t));
        data.targets.push_back(label);
    }
    return data;
}

double accuracy(const ModelParams& p, const Dataset& data) {
    std::size_t right = 0;
    for (std::size_t i = 0; i < data.size(); ++i) right += predict(p, data.tensors[i]).label == data.targets[i];
    return static_cast<double>(right) / static_cast<double>(data.size());
}

}  // namespace

TEST(Forward, ZeroParamsGiveUniformSoftmax) {
    Rng rng(1);
    const ModelParams p = ModelParams::zeros(3, 4, 6, 2);
    const Cache c = forward(p, oracle::random_tensor(rng, 4, 2, 3, std::vector<bool>(4, false)));
    EXPECT_EQ(c.logits, (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(c.probabilities, (std::vector<double>{0.5, 0.5}));
}

TEST(Forward, ZeroInputGivesDenseBias) {
    ModelParams p = ModelParams::random(3, 4, 6, 2, 5);
    p.dense_bias = {0.25, -1.5};
    const Cache c = forward(p, tiny_tensor(std::vector<double>(24, 0.0), 4, 2, 3));
    EXPECT_EQ(c.logits, p.dense_bias);
}

TEST(Forward, HandWorkedExample) {
    // One filter [2] over fields [1] and [3]; dense routes field p to class p.
    ModelParams p = ModelParams::zeros(1, 2, 1, 2);
    p.conv_weights = {2.0};
    p.dense_weights = {1.0, 0.0, 0.0, 1.0};
    const Cache c = forward(p, tiny_tensor({1.0, 3.0}, 2, 1, 1));
    EXPECT_EQ(c.activation, (std::vector<double>{2.0, 6.0}));
    EXPECT_EQ(c.logits, (std::vector<double>{2.0, 6.0}));
    const double e = std::exp(-4.0);
    EXPECT_NEAR(c.probabilities[0], e / (1.0 + e), 1e-15);
}

TEST(Forward, MaskedFieldsContributeNothing) {
    Rng rng(3);
    ModelParams p = ModelParams::random(4, 3, 6, 2, 9);
    for (double& b : p.conv_bias) b = 1.0;  // would leak through ReLU if not masked
    FieldTensor t = oracle::random_tensor(rng, 3, 2, 3, {false, true, true});
    const Cache c = forward(p, t);
    for (std::size_t f = 0; f < 4; ++f) {
        EXPECT_EQ(c.activation[f * 3 + 1], 0.0);
        EXPECT_EQ(c.activation[f * 3 + 2], 0.0);
    }
    ModelParams q = p;
    for (std::size_t f = 0; f < 4; ++f) {
        for (std::size_t cls = 0; cls < 2; ++cls) {
            q.dense_weights[(f * 3 + 1) * 2 + cls] = 123.0;
        }
    }
    EXPECT_EQ(forward(q, t).logits, c.logits);
}

TEST(Forward, ShapeMismatch) {
    const ModelParams p = ModelParams::zeros(2, 4, 6, 2);
    EXPECT_THROW((void)forward(p, tiny_tensor(std::vector<double>(30, 0.0), 5, 2, 3)), ShapeMismatch);
    EXPECT_THROW((void)forward(p, tiny_tensor(std::vector<double>(32, 0.0), 4, 2, 4)), ShapeMismatch);
}

TEST(Softmax, SumsToOne) {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> logits(4);
        for (double& l : logits) l = rng.uniform(-50, 50);
        const auto p = softmax(logits);
        EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    }
}

TEST(Backward, MatchesFiniteDifferences) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed * 101);
        const ModelParams p = ModelParams::random(3, 4, 2 * 5, 2, seed);
        const FieldTensor t = oracle::random_tensor(rng, 4, 2, 5, {false, false, true, false});
        EXPECT_LT(oracle::gradient_check(p, t, static_cast<int>(seed % 2)), 1e-4) << seed;
    }
}

TEST(Backward, TypeHeadMatchesFiniteDifferences) {
    Rng rng(8);
    const ModelParams p = ModelParams::random(2, 3, 4, 4, 8);
    const FieldTensor t = oracle::random_tensor(rng, 3, 2, 2, {false, false, false});
    EXPECT_LT(oracle::gradient_check(p, t, 3), 1e-4);
}

TEST(Backward, SaturatedCorrectSampleHasTinyGradient) {
    ModelParams p = ModelParams::zeros(1, 2, 1, 2);
    p.dense_bias = {-40.0, 40.0};
    const FieldTensor t = tiny_tensor({1.0, 3.0}, 2, 1, 1);
    const ModelParams g = backward(p, t, forward(p, t), kInsecure);
    for (std::size_t i = 0; i < g.parameter_count(); ++i) EXPECT_LT(std::abs(g.at(i)), 1e-30);
}

TEST(Backward, DuplicatedSampleDoublesTheGradient) {
    Rng rng(4);
    Dataset data;
    data.tensors.push_back(oracle::random_tensor(rng, 3, 2, 2, {false, false, false}));
    data.targets.push_back(1);
    const ModelParams p = ModelParams::random(2, 3, 4, 2, 4);
    const std::vector<std::size_t> once = {0};
    const std::vector<std::size_t> twice = {0, 0};
    const ModelParams g1 = batch_gradient(p, data, once);
    const ModelParams g2 = batch_gradient(p, data, twice);
    for (std::size_t i = 0; i < g1.parameter_count(); ++i) EXPECT_EQ(g2.at(i), 2.0 * g1.at(i));
}

TEST(Train, SeparableBlobsReachFullAccuracy) {
    Rng rng(12);
    const Dataset train_set = blobs(rng, 40, 3, 2, 3);
    const Dataset val_set = blobs(rng, 10, 3, 2, 3);
    TrainConfig cfg;
    cfg.filters = 4;
    cfg.patience = 100;
    const TrainResult r = train(ModelParams::random(4, 3, 6, 2, 12), train_set, val_set, cfg);
    EXPECT_LE(r.history.size(), 100u);
    EXPECT_EQ(accuracy(r.params, train_set), 1.0);
    // Every training point is classified as its own label.
    EXPECT_EQ(predict(r.params, train_set.tensors[0]).label, train_set.targets[0]);
}

TEST(Train, PatienceZeroRunsOneEpoch) {
    Rng rng(13);
    const Dataset d = blobs(rng, 8, 2, 1, 2);
    TrainConfig cfg;
    cfg.patience = 0;
    const TrainResult r = train(ModelParams::random(16, 2, 2, 2, 1), d, d, cfg);
    EXPECT_EQ(r.history.size(), 1u);
    EXPECT_EQ(r.best_epoch, 1u);
}

TEST(Train, SameSeedSameBits) {
    Rng rng(14);
    const Dataset d = blobs(rng, 20, 3, 2, 3);
    TrainConfig cfg;
    cfg.max_epochs = 15;
    const TrainResult a = train(ModelParams::random(16, 3, 6, 2, 3), d, d, cfg);
    const TrainResult b = train(ModelParams::random(16, 3, 6, 2, 3), d, d, cfg);
    EXPECT_EQ(a.params, b.params);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        EXPECT_EQ(a.history[i].train_loss, b.history[i].train_loss);
        EXPECT_EQ(a.history[i].val_loss, b.history[i].val_loss);
    }
}

TEST(Train, RepeatedSampleLossNeverRises) {
    Rng rng(15);
    Dataset d;
    d.tensors.push_back(oracle::random_tensor(rng, 3, 2, 3, {false, false, false}));
    d.targets.push_back(1);
    ModelParams p = ModelParams::random(4, 3, 6, 2, 15);
    const std::vector<std::size_t> idx = {0};
    double previous = loss(p, d.tensors[0], 1);
    for (int step = 0; step < 50; ++step) {
        p.add_scaled(batch_gradient(p, d, idx), -0.001);
        const double now = loss(p, d.tensors[0], 1);
        EXPECT_LE(now, previous);
        previous = now;
    }
}

TEST(Train, SingleClassIsFlaggedButTrains) {
    Rng rng(16);
    Dataset d = blobs(rng, 6, 2, 1, 2);
    for (int& t : d.targets) t = 1;
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.patience = 3;
    const TrainResult r = train(ModelParams::random(2, 2, 2, 2, 1), d, d, cfg);
    EXPECT_TRUE(r.degenerate_data);
    EXPECT_EQ(r.history.size(), 3u);
}

TEST(Train, RejectsBadConfigAndEmptySplits) {
    Rng rng(17);
    const Dataset d = blobs(rng, 4, 2, 1, 2);
    const ModelParams p = ModelParams::random(2, 2, 2, 2, 1);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    EXPECT_THROW((void)train(p, d, d, cfg), ConfigError);
    cfg = {};
    cfg.patience = 200;
    EXPECT_THROW((void)train(p, d, d, cfg), ConfigError);
    EXPECT_THROW((void)train(p, Dataset{}, d, TrainConfig{}), ConfigError);
}

TEST(Predict, TieIsInsecure) {
    ModelParams p = ModelParams::zeros(1, 1, 1, 2);
    p.dense_bias = {3.0, 3.0};
    EXPECT_EQ(predict(p, tiny_tensor({0.0}, 1, 1, 1)).label, kInsecure);
}

TEST(Predict, ConfidentSecure) {
    ModelParams p = ModelParams::zeros(1, 1, 1, 2);
    p.dense_bias = {10.0, -10.0};
    const Prediction pr = predict(p, tiny_tensor({0.0}, 1, 1, 1));
    EXPECT_EQ(pr.label, kSecure);
    EXPECT_NEAR(pr.probability, 1.0, 1e-8);
}

TEST(Checkpoint, RoundTripAndEncoderGuard) {
    const patchy::EncoderConfig enc;
    const ModelParams p = ModelParams::random(16, enc.w, enc.k * enc.d, 2, 21);
    const std::string json = checkpoint_to_json(p, enc);
    EXPECT_EQ(checkpoint_from_json(json, enc), p);
    EXPECT_EQ(checkpoint_encoder(json), enc);
    patchy::EncoderConfig other = enc;
    other.k = 4;
    EXPECT_THROW((void)checkpoint_from_json(json, other), CheckpointError);
    EXPECT_THROW((void)checkpoint_from_json("{\"backend\":\"cnn\"}", enc), CheckpointError);
    EXPECT_THROW((void)checkpoint_from_json("not json", enc), CheckpointError);
}

TEST(Checkpoint, Base64KnownVectors) {
    const auto bytes = [](std::string_view s) {
        return std::vector<std::uint8_t>(s.begin(), s.end());
    };
    for (const auto& [plain, coded] : std::vector<std::pair<std::string, std::string>>{
             {"", ""}, {"f", "Zg=="}, {"fo", "Zm8="}, {"foo", "Zm9v"}, {"foobar", "Zm9vYmFy"}}) {
        EXPECT_EQ(base64_encode(bytes(plain)), coded);
        EXPECT_EQ(base64_decode(coded), bytes(plain));
    }
    EXPECT_THROW((void)base64_decode("Zm9"), std::invalid_argument);
    EXPECT_THROW((void)base64_decode("Zm9v\n"), std::invalid_argument);
    EXPECT_THROW((void)base64_decode("Z!9v"), std::invalid_argument);
}
