#include "qbench/qmat_file.hpp"
#include "qbench/toymodel.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace qbench;

namespace {

const LayerShapes kSmall{64, 96, 1};

} // namespace

TEST_SUITE("toymodel") {

TEST_CASE("presets: declared constants, unknown names rejected") {
    const LayerShapes toy = preset_shapes("toy");
    CHECK(toy.d_model == 512);
    CHECK(toy.d_ff == 1376);
    CHECK(toy.n_layers == 2);

    const LayerShapes llama = preset_shapes("llama8b-layer");
    CHECK(llama.d_model == 4096);
    CHECK(llama.d_ff == 14336);
    CHECK(llama.n_layers == 1);

    CHECK_THROWS_AS(preset_shapes("gpt5"), std::invalid_argument);
}

TEST_CASE("shape validation") {
    CHECK_THROWS_AS(ToyDecoder(LayerShapes{48, 96, 1}, 1), std::invalid_argument);
    CHECK_THROWS_AS(ToyDecoder(LayerShapes{64, 100, 1}, 1), std::invalid_argument);
    CHECK_THROWS_AS(ToyDecoder(LayerShapes{64, 96, 0}, 1), std::invalid_argument);
}

TEST_CASE("same shapes and seed give bitwise-identical weights") {
    const ToyDecoder a(kSmall, 2024);
    const ToyDecoder b(kSmall, 2024);
    CHECK(serialize_qmat(a.layers()[0].wq) == serialize_qmat(b.layers()[0].wq));
    CHECK(serialize_qmat(a.layers()[0].wdown) == serialize_qmat(b.layers()[0].wdown));

    const ToyDecoder c(kSmall, 2025);
    CHECK(serialize_qmat(a.layers()[0].wq) != serialize_qmat(c.layers()[0].wq));
}

TEST_CASE("token embeddings are deterministic per index") {
    const ToyDecoder model(kSmall, 5);
    CHECK(model.token_embedding(5) == model.token_embedding(5));
    CHECK(model.token_embedding(5) != model.token_embedding(6));
}

TEST_CASE("prefill returns (prompt_len, d_model) hidden states and fills the cache") {
    ToyDecoder model(kSmall, 9);
    WorkerPool pool(2);
    const auto [hidden, stats] = model.prefill(5, pool);
    CHECK(hidden.size() == static_cast<std::size_t>(5 * kSmall.d_model));
    CHECK(stats.tokens == 5);
    CHECK(stats.seconds > 0.0);
    CHECK(model.kv_len() == 5);
    CHECK(model.layers()[0].k_cache.size() == static_cast<std::size_t>(5 * kSmall.d_model));
}

TEST_CASE("kv cache length is prompt plus generated tokens") {
    ToyDecoder model(kSmall, 10);
    WorkerPool pool(2);
    model.prefill(22, pool);
    const PhaseStats stats = model.generate(256, pool);
    CHECK(stats.tokens == 256);
    CHECK(model.kv_len() == 278);
    CHECK(model.layers()[0].k_cache.size() == static_cast<std::size_t>(278 * kSmall.d_model));
}

TEST_CASE("generate before prefill is a state error") {
    ToyDecoder model(kSmall, 11);
    WorkerPool pool(1);
    CHECK_THROWS_AS(model.generate(1, pool), std::logic_error);
    model.prefill(2, pool);
    model.generate(1, pool); // fine now
    model.reset();
    CHECK_THROWS_AS(model.generate(1, pool), std::logic_error);
}

TEST_CASE("generate(0) accumulates zero time and guards tokens/s") {
    ToyDecoder model(kSmall, 12);
    WorkerPool pool(1);
    model.prefill(1, pool);
    const PhaseStats stats = model.generate(0, pool);
    CHECK(stats.tokens == 0);
    CHECK(stats.seconds == 0.0);
    CHECK_THROWS_AS(stats.tokens_per_s(), std::domain_error);
}

TEST_CASE("prompt_len 1 routes through the b = 1 path") {
    ToyDecoder model(kSmall, 13);
    WorkerPool pool(2);
    const auto [hidden, stats] = model.prefill(1, pool);
    CHECK(stats.tokens == 1);
    CHECK(hidden.size() == static_cast<std::size_t>(kSmall.d_model));
    CHECK_THROWS_AS(model.prefill(0, pool), std::invalid_argument);
}

TEST_CASE("prefill final hidden state equals sequential generation steps bitwise") {
    for (int p : {1, 4}) {
        ToyDecoder model(kSmall, 14);
        WorkerPool pool(2);
        const auto [hidden, stats] = model.prefill(p, pool);
        (void)stats;

        model.reset();
        std::vector<float> last;
        for (int t = 0; t < p; ++t)
            last = model.step_token(pool);
        CHECK(model.kv_len() == p);
        REQUIRE(last.size() == static_cast<std::size_t>(kSmall.d_model));
        CHECK(std::equal(last.begin(), last.end(),
                         hidden.end() - static_cast<std::ptrdiff_t>(kSmall.d_model)));
    }
}

TEST_CASE("outputs are independent of thread count and policy") {
    std::vector<float> reference;
    for (int t : {1, 2, 4}) {
        ToyDecoder model(kSmall, 15);
        WorkerPool pool(t);
        pool.apply_policy(t == 4 ? NumaPolicy::MemoryInterleave : NumaPolicy::AllOff);
        if (pool.first_touch_active())
            model.place_weights(pool);
        const auto [hidden, stats] = model.prefill(3, pool);
        (void)stats;
        if (reference.empty())
            reference = hidden;
        else
            CHECK(hidden == reference);
    }
}

TEST_CASE("export_weights writes per-matrix .qmat files and a manifest") {
    const auto dir = std::filesystem::temp_directory_path() / "qbench_export_test";
    std::filesystem::remove_all(dir);

    ToyDecoder model(kSmall, 16, "toy-small");
    model.export_weights(dir.string());

    CHECK(load_qmat((dir / "layer0_wq.qmat").string()) == model.layers()[0].wq);
    CHECK(load_qmat((dir / "layer0_wdown.qmat").string()) == model.layers()[0].wdown);

    std::ifstream manifest(dir / "manifest.txt");
    REQUIRE(manifest.good());
    std::string text((std::istreambuf_iterator<char>(manifest)),
                     std::istreambuf_iterator<char>());
    CHECK(text.find("name=toy-small") != std::string::npos);
    CHECK(text.find("d_model=64") != std::string::npos);
    CHECK(text.find("d_ff=96") != std::string::npos);
    CHECK(text.find("n_layers=1") != std::string::npos);
    CHECK(text.find("seed=16") != std::string::npos);

    std::filesystem::remove_all(dir);
}

TEST_CASE("convenience prefill/generate wrappers") {
    ToyDecoder model(kSmall, 17);
    const auto [hidden, stats] = prefill(model, 2, 2, NumaPolicy::AllOff);
    CHECK(stats.tokens == 2);
    const PhaseStats gen = generate(model, 2, 2, NumaPolicy::MemoryInterleave);
    CHECK(gen.tokens == 2);
    CHECK(gen.tokens_per_s() > 0.0);
}

} // TEST_SUITE
