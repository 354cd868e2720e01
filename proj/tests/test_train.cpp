#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "semcom/train.hpp"

using namespace semcom;

namespace {

Tensor randomTensor(int w, int h, int c, uint64_t seed) {
    Tensor t(w, h, c);
    Rng rng(seed);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.flat()[i] = static_cast<float>(rng.uniform());
    return t;
}

CodecConfig tinyCfg() {
    CodecConfig cfg;
    cfg.n = 2;
    cfg.n1 = 2;
    cfg.n2 = 1;
    cfg.m = 6;
    cfg.f = 4;
    cfg.enc_depth = 1;
    cfg.dec_depth = 1;
    cfg.fusion_width = 4;
    cfg.flow_width = 4;
    return cfg;
}

ChannelCodecConfig tinyChanCfg() {
    ChannelCodecConfig c;
    c.width = 4;
    c.rate_channels = 4;
    c.enc_depth = 1;
    c.dec_depth = 1;
    return c;
}

std::vector<StereoPair> tinyData(int frames) {
    std::vector<StereoPair> data;
    SyntheticSpec spec;
    spec.width = 24;
    spec.height = 24;
    spec.objects = 1;
    for (int i = 0; i < frames; ++i) data.push_back(synthStereo(static_cast<uint64_t>(i), spec));
    return data;
}

std::vector<Eigen::ArrayXf> snapshotParams(SemanticCodec& codec) {
    std::vector<Eigen::ArrayXf> out;
    for (nn::Param* p : codec.allParams()) out.push_back(p->value);
    return out;
}

}  // namespace

TEST_CASE("charbonnier loss identities and epsilon floor") {
    Tensor a = randomTensor(6, 6, 3, 1), b = a;
    // identical inputs: global form floors at epsilon
    CHECK(charbonnierLoss(a, b, 1e-3f) == doctest::Approx(1e-3).epsilon(1e-6));
    // single-element: sqrt(d^2 + eps^2)
    Tensor x(1, 1, 1), y(1, 1, 1);
    x(0, 0, 0) = 1.0f;
    CHECK(charbonnierLoss(x, y, 1e-3f) == doctest::Approx(std::sqrt(1.0 + 1e-6)).epsilon(1e-9));
    // per-pixel variant of identical inputs also floors at epsilon
    CHECK(charbonnierLoss(a, b, 1e-3f, true) == doctest::Approx(1e-3).epsilon(1e-6));
    // mse reference
    Tensor d = a;
    d.flat() += 0.25f;
    CHECK(mseLossT(a, d) == doctest::Approx(0.0625).epsilon(1e-6));
}

TEST_CASE("masked and hybrid losses obey their definitions") {
    Tensor a = randomTensor(8, 8, 3, 2), b = randomTensor(8, 8, 3, 3);
    Tensor mask(8, 8, 1);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 4; ++x) mask(x, y, 0) = 1.0f;

    // masked loss = charbonnier of mask-multiplied arguments
    Tensor am = a, bm = b;
    for (int z = 0; z < 3; ++z)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                am(x, y, z) *= mask(x, y, 0);
                bm(x, y, z) *= mask(x, y, 0);
            }
    CHECK(maskedCharbonnierLoss(a, b, mask, 1e-3f) == doctest::Approx(charbonnierLoss(am, bm, 1e-3f)).epsilon(1e-9));
    // hybrid = masked + lambda * plain
    const double expect = maskedCharbonnierLoss(a, b, mask, 1e-3f) + 0.5 * charbonnierLoss(a, b, 1e-3f);
    CHECK(hybridMaskedCharbonnierLoss(a, b, mask, 1e-3f, 0.5f) == doctest::Approx(expect).epsilon(1e-9));
    // lambda 0 collapses to the masked loss
    CHECK(hybridMaskedCharbonnierLoss(a, b, mask, 1e-3f, 0.0f) ==
          doctest::Approx(maskedCharbonnierLoss(a, b, mask, 1e-3f)).epsilon(1e-9));
}

TEST_CASE("lossNode values match the plain-tensor losses") {
    Tensor pred = randomTensor(8, 8, 3, 4), target = randomTensor(8, 8, 3, 5);
    Tensor mask(8, 8, 1);
    for (int y = 0; y < 8; ++y)
        for (int x = 2; x < 7; ++x) mask(x, y, 0) = 1.0f;

    LossSpec spec;
    spec.kind = LossKind::Charbonnier;
    nn::NodeP p = nn::constant(pred);
    CHECK(lossNode(spec, p, target, nullptr)->value.flat()[0] ==
          doctest::Approx(charbonnierLoss(target, pred, spec.epsilon)).epsilon(1e-6));
    spec.kind = LossKind::MaskedCharbonnier;
    CHECK(lossNode(spec, p, target, &mask)->value.flat()[0] ==
          doctest::Approx(maskedCharbonnierLoss(target, pred, mask, spec.epsilon)).epsilon(1e-6));
    spec.kind = LossKind::HybridMaskedCharbonnier;
    CHECK(lossNode(spec, p, target, &mask)->value.flat()[0] ==
          doctest::Approx(hybridMaskedCharbonnierLoss(target, pred, mask, spec.epsilon, spec.lambda)).epsilon(1e-6));
    spec.kind = LossKind::MeanSquaredError;
    CHECK(lossNode(spec, p, target, nullptr)->value.flat()[0] ==
          doctest::Approx(mseLossT(target, pred)).epsilon(1e-6));
}

TEST_CASE("lossNode gradients match central differences for every kind") {
    Tensor pred = randomTensor(4, 4, 3, 6), target = randomTensor(4, 4, 3, 7);
    Tensor mask(4, 4, 1);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 2; ++x) mask(x, y, 0) = 1.0f;

    for (LossKind kind : {LossKind::Charbonnier, LossKind::MaskedCharbonnier, LossKind::HybridMaskedCharbonnier,
                          LossKind::MeanSquaredError}) {
        LossSpec spec;
        spec.kind = kind;
        spec.epsilon = 1e-2f;
        const Tensor* m = (kind == LossKind::MaskedCharbonnier || kind == LossKind::HybridMaskedCharbonnier)
                              ? &mask
                              : nullptr;
        nn::NodeP in = nn::makeNode(pred, true);
        nn::NodeP loss = lossNode(spec, in, target, m);
        nn::backward(loss);
        auto eval = [&](const Tensor& t) { return lossNode(spec, nn::constant(t), target, m)->value.flat()[0]; };
        for (Eigen::Index i = 0; i < pred.size(); i += 7) {
            Tensor tp = pred, tm = pred;
            const float h = 1e-3f;
            tp.flat()[i] += h;
            tm.flat()[i] -= h;
            const double fd = (eval(tp) - eval(tm)) / (2.0 * h);
            if (std::abs(fd) < 1e-6) {
                CHECK(std::abs(in->grad.flat()[i]) < 1e-4);
            } else {
                CHECK(in->grad.flat()[i] == doctest::Approx(fd).epsilon(0.02));
            }
        }
    }
}

TEST_CASE("loss spec and schedule validation") {
    LossSpec bad;
    bad.epsilon = 0.0f;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad.epsilon = 1e-3f;
    bad.lambda = -1.0f;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    StageSchedule s = StageSchedule::defaults(1);
    CHECK_NOTHROW(s.validate());
    s.stage_id = 6;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = StageSchedule::defaults(5);
    s.snr_lo_db = 20.0;  // inverted range
    CHECK_THROWS_AS(s.validate(), ConfigError);
    CHECK_THROWS_AS(StageSchedule::defaults(0), ConfigError);
}

TEST_CASE("published stage defaults follow the five-step strategy") {
    StageSchedule s1 = StageSchedule::defaults(1);
    CHECK(s1.epochs_a == 2);
    CHECK(s1.epochs_b == 10);
    CHECK(s1.lr.global_tx == doctest::Approx(2e-4f));
    CHECK(s1.lr.flow == doctest::Approx(2.5e-5f));
    CHECK(s1.lr.fusion == doctest::Approx(1e-4f));
    CHECK(s1.lr.key_tx == 0.0f);

    StageSchedule s2 = StageSchedule::defaults(2);
    CHECK(s2.epochs_a == 10);
    CHECK(s2.lr.key_tx == doctest::Approx(1e-4f));
    CHECK(s2.lr.key_rx == doctest::Approx(2e-4f));
    CHECK(s2.lr.global_tx == 0.0f);

    StageSchedule s3 = StageSchedule::defaults(3);
    CHECK(s3.epochs_a == 6);
    CHECK(s3.lr.fusion == doctest::Approx(1e-4f));
    CHECK(s3.lr.key_rx == 0.0f);

    StageSchedule s4 = StageSchedule::defaults(4);
    CHECK(s4.epochs_a == 10);
    CHECK(s4.lr.global_tx == doctest::Approx(1e-4f));
    CHECK(s4.lr.key_tx == doctest::Approx(2e-5f));
    CHECK(s4.lr.flow == doctest::Approx(1.25e-5f));
    CHECK(s4.hybrid_fraction == doctest::Approx(0.7f));

    StageSchedule s5 = StageSchedule::defaults(5);
    CHECK(s5.epochs_a == 25);
    CHECK(s5.epochs_b == 20);
    CHECK(s5.lr.channel == doctest::Approx(1e-4f));

    // desk-scale override shrinks every sub-phase
    StageSchedule quick = StageSchedule::defaults(1, 1);
    CHECK(quick.epochs_a == 1);
    CHECK(quick.epochs_b == 1);
}

TEST_CASE("stage order is enforced and stage 5 needs a noisy channel") {
    SemanticCodec codec(tinyCfg());
    Rng rng(1);
    codec.initWeights(rng);
    TrainState state(codec, 7);
    auto data = tinyData(2);
    ChannelConfig noiseless;
    noiseless.kind = ChannelKind::Noiseless;

    CHECK_THROWS_AS(runStage(StageSchedule::defaults(2, 1), state, data, noiseless), StateError);

    ChannelCodec chan(tinyChanCfg());
    Rng crng(2);
    chan.initWeights(crng);
    TrainState s5(codec, 7, &chan);
    s5.completed_stage = 4;
    CHECK_THROWS_AS(runStage(StageSchedule::defaults(5, 1), s5, data, noiseless), ConfigError);
}

TEST_CASE("stage 3 trains fusion only and leaves every other group frozen") {
    SemanticCodec codec(tinyCfg());
    Rng rng(3);
    codec.initWeights(rng);
    TrainState state(codec, 11);
    state.completed_stage = 2;
    auto data = tinyData(2);
    ChannelConfig noiseless;
    noiseless.kind = ChannelKind::Noiseless;

    auto before = snapshotParams(codec);
    runStage(StageSchedule::defaults(3, 1), state, data, noiseless);
    auto after = snapshotParams(codec);

    auto inGroup = [](std::vector<nn::Param*> group, nn::Param* p) {
        return std::find(group.begin(), group.end(), p) != group.end();
    };
    auto all = codec.allParams();
    bool fusion_moved = false;
    for (size_t i = 0; i < all.size(); ++i) {
        const float diff = (before[i] - after[i]).abs().maxCoeff();
        if (inGroup(codec.fusionParams(), all[i])) {
            fusion_moved = fusion_moved || diff > 0.0f;
        } else {
            CHECK(diff == 0.0f);  // bitwise frozen
        }
    }
    CHECK(fusion_moved);
    CHECK(state.completed_stage == 3);
    CHECK(state.history.size() == 1);
    CHECK(std::isfinite(state.history[0].loss));
}

TEST_CASE("training history is seed-deterministic") {
    auto run = [] {
        SemanticCodec codec(tinyCfg());
        Rng rng(5);
        codec.initWeights(rng);
        TrainState state(codec, 13);
        auto data = tinyData(2);
        ChannelConfig noiseless;
        noiseless.kind = ChannelKind::Noiseless;
        runStage(StageSchedule::defaults(1, 1), state, data, noiseless);
        return state.history;
    };
    auto h1 = run(), h2 = run();
    REQUIRE(h1.size() == h2.size());
    for (size_t i = 0; i < h1.size(); ++i) CHECK(h1[i].loss == h2[i].loss);
}

TEST_CASE("checkpoint round trip restores training bitwise") {
    const auto dir = std::filesystem::temp_directory_path() / "semcom_train_test";
    std::filesystem::create_directories(dir);
    auto data = tinyData(2);
    ChannelConfig noiseless;
    noiseless.kind = ChannelKind::Noiseless;

    SemanticCodec codec(tinyCfg());
    Rng rng(6);
    codec.initWeights(rng);
    TrainState state(codec, 17);
    runStage(StageSchedule::defaults(1, 1), state, data, noiseless);
    saveCheckpoint(dir / "s1.ckpt", state);

    // continue training in-place
    runStage(StageSchedule::defaults(2, 1), state, data, noiseless);
    auto direct = snapshotParams(codec);

    // reload into a fresh model and repeat stage 2
    SemanticCodec codec2(tinyCfg());
    TrainState state2(codec2, 999);  // seed overwritten by the checkpoint
    loadCheckpoint(dir / "s1.ckpt", state2);
    CHECK(state2.completed_stage == 1);
    CHECK(state2.history.size() == state.history.size() - 1);  // stage 2 adds one epoch record
    runStage(StageSchedule::defaults(2, 1), state2, data, noiseless);
    auto resumed = snapshotParams(codec2);

    REQUIRE(direct.size() == resumed.size());
    for (size_t i = 0; i < direct.size(); ++i) CHECK((direct[i] - resumed[i]).abs().maxCoeff() == 0.0f);

    // architecture mismatch names the offending parameter
    CodecConfig other = tinyCfg();
    other.f = 6;
    SemanticCodec codec3(other);
    TrainState state3(codec3, 1);
    CHECK_THROWS_AS(loadCheckpoint(dir / "s1.ckpt", state3), ConfigError);
}

TEST_CASE("stage 5 runs end to end over the learned channel") {
    SemanticCodec codec(tinyCfg());
    Rng rng(8);
    codec.initWeights(rng);
    ChannelCodec chan(tinyChanCfg());
    Rng crng(9);
    chan.initWeights(crng);
    TrainState state(codec, 23, &chan);
    state.completed_stage = 4;
    auto data = tinyData(2);
    ChannelConfig awgn;
    awgn.kind = ChannelKind::AWGN;
    awgn.snr_db = 10.0;
    awgn.seed = 31;

    runStage(StageSchedule::defaults(5, 1), state, data, awgn);
    CHECK(state.completed_stage == 5);
    CHECK(state.history.size() == 2);  // one codec-only epoch + one joint epoch
    for (const auto& rec : state.history) CHECK(std::isfinite(rec.loss));
}

TEST_CASE("loss csv layout") {
    const auto dir = std::filesystem::temp_directory_path() / "semcom_train_test";
    std::filesystem::create_directories(dir);
    std::vector<LossRecord> hist{{1, 0, 0.5, 1.25}, {1, 1, 0.25, 2.5}};
    writeLossCsv(dir / "loss.csv", hist);
    std::ifstream in(dir / "loss.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "stage,epoch,loss,wall_seconds");
    std::getline(in, line);
    CHECK(line.rfind("1,0,0.5", 0) == 0);
}
