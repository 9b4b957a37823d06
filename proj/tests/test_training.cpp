#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "checkpoint.hpp"
#include "errors.hpp"
#include "training.hpp"

using namespace squidlet;

namespace {

ModelSpec tiny_spec(int n_memory = 4) {
    ModelSpec spec;
    spec.n_max_memory = 8;
    spec.pi_s_cfg = DecoderConfig{16, 1, 2, 32, 0, 128, 10000.0};
    spec.pi_l_cfg = DecoderConfig{16, 2, 2, 32, 0, 160, 10000.0};
    spec.d_proj = 16;
    spec.comp = CompressionConfig{n_memory, 96};
    return spec;
}

Corpus tiny_corpus() {
    Corpus corpus;
    corpus.samples.push_back({"The kiln sits in Oslo.", "Where is the kiln?", "Oslo", "contextual_qa"});
    corpus.samples.push_back({"A dynamo hums at 50 hertz.", "At how many hertz?", "50", "numeric_qa"});
    corpus.samples.push_back({"Marble crates line the hall.", "What lines the hall?", "crates", ""});
    corpus.samples.push_back({"The lathe was built in 1968.", "When was it built?", "1968", "numeric_qa"});
    corpus.provenance = "inline";
    return corpus;
}

std::vector<float> snapshot_params(const TrainState& st, const std::string& which) {
    std::vector<float> out;
    auto grab = [&out](const std::vector<std::pair<std::string, Tensor>>& params) {
        for (const auto& [name, p] : params) out.insert(out.end(), p.data().begin(), p.data().end());
    };
    if (which == "pi_s") grab(st.pi_s.named_parameters("pi_s"));
    if (which == "phi") grab(st.phi.named_parameters("phi"));
    if (which == "pi_l") grab(st.pi_l.named_parameters("pi_l"));
    return out;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("initial restoration loss sits near ln(vocab)") {
    auto st = init_train_state(tiny_spec(), 1);
    const auto corpus = tiny_corpus();
    StageConfig stage;
    stage.steps = 1;
    stage.batch_size = 4;
    train(st, stage, corpus);
    REQUIRE(st.loss_history.size() == 1);
    const double ln_v = std::log(static_cast<double>(st.tokenizer.vocab_size()));
    CHECK(st.loss_history[0] > 0.9 * ln_v);
    CHECK(st.loss_history[0] < 1.1 * ln_v);
}

TEST_CASE("initial instruction loss sits near ln(vocab)") {
    auto st = init_train_state(tiny_spec(), 2);
    StageConfig stage;
    stage.stage = "instruction";
    stage.steps = 1;
    stage.batch_size = 4;
    train(st, stage, tiny_corpus());
    const double ln_v = std::log(static_cast<double>(st.tokenizer.vocab_size()));
    CHECK(st.loss_history[0] > 0.9 * ln_v);
    CHECK(st.loss_history[0] < 1.1 * ln_v);
}

TEST_CASE("cross-entropy mask contract: masked-out targets are inert") {
    Rng rng(3);
    auto logits = Tensor::randn({6, 12}, rng, 1.0);
    std::vector<int> targets = {1, 2, 3, 4, 5, 6};
    std::vector<uint8_t> mask = {0, 0, 1, 1, 1, 0};
    const float base = cross_entropy_loss(logits, targets, mask).item();
    targets[0] = 9;
    targets[1] = 0;
    targets[5] = 11;
    const float perturbed = cross_entropy_loss(logits, targets, mask).item();
    CHECK(std::memcmp(&base, &perturbed, sizeof(float)) == 0);
}

TEST_CASE("determinism: identical seed, config, and corpus give bitwise-equal histories") {
    const auto corpus = tiny_corpus();
    auto run = [&corpus] {
        auto st = init_train_state(tiny_spec(), 11);
        StageConfig stage;
        stage.steps = 6;
        stage.batch_size = 2;
        train(st, stage, corpus);
        return st;
    };
    auto a = run();
    auto b = run();
    REQUIRE(a.loss_history.size() == b.loss_history.size());
    CHECK(std::memcmp(a.loss_history.data(), b.loss_history.data(),
                      a.loss_history.size() * sizeof(float)) == 0);
    CHECK(bitwise_equal(snapshot_params(a, "pi_l"), snapshot_params(b, "pi_l")));
}

TEST_CASE("freeze discipline: frozen groups stay bitwise untouched") {
    auto st = init_train_state(tiny_spec(), 13);
    const auto before_pi_l = snapshot_params(st, "pi_l");
    const auto before_pi_s = snapshot_params(st, "pi_s");
    StageConfig stage;
    stage.steps = 4;
    stage.batch_size = 2;
    stage.train_pi_l = false;
    train(st, stage, tiny_corpus());
    CHECK(bitwise_equal(before_pi_l, snapshot_params(st, "pi_l")));
    CHECK_FALSE(bitwise_equal(before_pi_s, snapshot_params(st, "pi_s")));

    StageConfig none = stage;
    none.train_pi_s = none.train_phi = none.train_pi_l = false;
    CHECK_THROWS_AS(train(st, none, tiny_corpus()), ConfigError);
}

TEST_CASE("train rejects an empty corpus and reports overlength samples by index") {
    auto st = init_train_state(tiny_spec(), 17);
    CHECK_THROWS_AS(train(st, StageConfig{}, Corpus{}), BatchError);

    Corpus corpus = tiny_corpus();
    corpus.samples[2].context = std::string(200, 'x'); // over the 96-token cap
    try {
        StageConfig stage;
        stage.steps = 1;
        train(st, stage, corpus);
        FAIL("expected BatchError");
    } catch (const BatchError& e) {
        CHECK(std::string(e.what()).find("sample 2") != std::string::npos);
    }
}

TEST_CASE("instruction stage rejects samples with empty fields") {
    auto st = init_train_state(tiny_spec(), 19);
    Corpus corpus = tiny_corpus();
    corpus.samples[1].response = "";
    StageConfig stage;
    stage.stage = "instruction";
    stage.steps = 1;
    stage.batch_size = 4;
    CHECK_THROWS_AS(train(st, stage, corpus), BatchError);
}

TEST_CASE("continual stage requires splittable contexts") {
    auto st = init_train_state(tiny_spec(), 23);
    Corpus corpus = tiny_corpus();
    corpus.samples[0].context = "q";
    StageConfig stage;
    stage.stage = "continual";
    stage.steps = 1;
    CHECK_THROWS_AS(train(st, stage, corpus), BatchError);
}

TEST_CASE("checkpoint: save-load-save produces byte-identical files") {
    auto st = init_train_state(tiny_spec(), 29);
    StageConfig stage;
    stage.steps = 2;
    stage.batch_size = 2;
    train(st, stage, tiny_corpus());

    const std::string p1 = "/tmp/squidlet_test_ck1.sqd";
    const std::string p2 = "/tmp/squidlet_test_ck2.sqd";
    save_checkpoint(st, p1);
    auto loaded = load_checkpoint(p1);
    save_checkpoint(loaded, p2);
    CHECK(slurp(p1) == slurp(p2));
    CHECK(loaded.step == st.step);
    CHECK(loaded.stage_provenance == st.stage_provenance);
    CHECK(bitwise_equal(snapshot_params(st, "pi_l"), snapshot_params(loaded, "pi_l")));
    CHECK(bitwise_equal(snapshot_params(st, "phi"), snapshot_params(loaded, "phi")));
    CHECK(loaded.rng == st.rng);
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("checkpoint: a tampered byte fails the checksum") {
    auto st = init_train_state(tiny_spec(), 31);
    const std::string path = "/tmp/squidlet_test_tamper.sqd";
    save_checkpoint(st, path);
    auto bytes = slurp(path);
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << bytes;
    }
    CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);
    std::remove(path.c_str());
}

TEST_CASE("resume from checkpoint equals uninterrupted training bitwise") {
    const auto corpus = tiny_corpus();
    StageConfig stage;
    stage.steps = 5;
    stage.batch_size = 2;

    auto uninterrupted = init_train_state(tiny_spec(), 37);
    train(uninterrupted, stage, corpus);
    train(uninterrupted, stage, corpus);

    auto resumed = init_train_state(tiny_spec(), 37);
    train(resumed, stage, corpus);
    const std::string path = "/tmp/squidlet_test_resume.sqd";
    save_checkpoint(resumed, path);
    auto restored = load_checkpoint(path);
    train(restored, stage, corpus);
    std::remove(path.c_str());

    CHECK(restored.step == uninterrupted.step);
    CHECK(std::memcmp(restored.loss_history.data(), uninterrupted.loss_history.data(),
                      uninterrupted.loss_history.size() * sizeof(float)) == 0);
    for (const char* group : {"pi_s", "phi", "pi_l"}) {
        CHECK(bitwise_equal(snapshot_params(restored, group),
                            snapshot_params(uninterrupted, group)));
    }
}

TEST_CASE("loss history length equals completed steps") {
    auto st = init_train_state(tiny_spec(), 41);
    StageConfig stage;
    stage.steps = 3;
    stage.batch_size = 4;
    train(st, stage, tiny_corpus());
    CHECK(st.loss_history.size() == 3);
    CHECK(st.step == 3);
    stage.stage = "continual";
    train(st, stage, tiny_corpus());
    CHECK(st.loss_history.size() == 6);
    CHECK(st.step == 6);
    CHECK(st.stage_provenance == "restoration;continual");
}
