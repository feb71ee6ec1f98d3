#include "qbench/toymodel.hpp"

#include "qbench/qmat_file.hpp"
#include "qbench/rng.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace qbench {

namespace {

constexpr std::uint64_t kWeightStream = 0x57454947; // stream tags for seed mixing
constexpr std::uint64_t kEmbedStream = 0x454d4244;

using Clock = std::chrono::steady_clock;

double elapsed_s(Clock::time_point t0, Clock::time_point t1) {
    return std::chrono::duration<double>(t1 - t0).count();
}

QuantMatrixQ4 random_weight(std::int64_t rows, std::int64_t cols, double stddev, Rng& rng) {
    QuantMatrixQ4 out;
    out.m = rows;
    out.n = cols;
    out.blocks.resize(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols / kBlockSize));
    std::vector<float> row(static_cast<std::size_t>(cols));
    for (std::int64_t r = 0; r < rows; ++r) {
        for (float& v : row)
            v = rng.gaussian_f32(stddev);
        BlockQ4* dst = out.row(r);
        for (std::int64_t b = 0; b < out.blocks_per_row(); ++b)
            dst[b] = quantize_block_q4(
                std::span<const float>(row).subspan(static_cast<std::size_t>(b) * kBlockSize, kBlockSize));
    }
    return out;
}

void rms_norm(std::span<const float> x, std::span<float> out) {
    float sum = 0.0f;
    for (float v : x)
        sum += v * v;
    const float inv = 1.0f / std::sqrt(sum / static_cast<float>(x.size()) + 1e-5f);
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = x[i] * inv;
}

float silu(float v) {
    return v / (1.0f + std::exp(-v));
}

} // namespace

LayerShapes preset_shapes(std::string_view name) {
    if (name == "toy")
        return {512, 1376, 2};
    if (name == "llama8b-layer")
        return {4096, 14336, 1};
    throw std::invalid_argument("unknown preset '" + std::string(name) +
                                "' (expected toy|llama8b-layer)");
}

std::vector<std::string> preset_names() {
    return {"toy", "llama8b-layer"};
}

double PhaseStats::tokens_per_s() const {
    if (tokens == 0 || seconds <= 0.0)
        throw std::domain_error("tokens/s undefined: no tokens or no elapsed time");
    return static_cast<double>(tokens) / seconds;
}

ToyDecoder::ToyDecoder(const LayerShapes& shapes, std::uint64_t seed, std::string name)
    : shapes_(shapes), seed_(seed), name_(std::move(name)) {
    if (shapes.d_model < kBlockSize || shapes.d_model % kBlockSize != 0)
        throw std::invalid_argument("d_model must be a positive multiple of 32");
    if (shapes.d_ff < kBlockSize || shapes.d_ff % kBlockSize != 0)
        throw std::invalid_argument("d_ff must be a positive multiple of 32");
    if (shapes.n_layers < 1)
        throw std::invalid_argument("n_layers must be >= 1");

    const double stddev = 1.0 / std::sqrt(static_cast<double>(shapes.d_model));
    std::uint64_t stream = 0;
    layers_.resize(static_cast<std::size_t>(shapes.n_layers));
    for (Layer& layer : layers_) {
        auto next = [&] { return Rng(mix_seed(seed_, kWeightStream + stream++)); };
        Rng r0 = next(), r1 = next(), r2 = next(), r3 = next(), r4 = next(), r5 = next(), r6 = next();
        layer.wq = random_weight(shapes.d_model, shapes.d_model, stddev, r0);
        layer.wk = random_weight(shapes.d_model, shapes.d_model, stddev, r1);
        layer.wv = random_weight(shapes.d_model, shapes.d_model, stddev, r2);
        layer.wo = random_weight(shapes.d_model, shapes.d_model, stddev, r3);
        layer.wup = random_weight(shapes.d_ff, shapes.d_model, stddev, r4);
        layer.wgate = random_weight(shapes.d_ff, shapes.d_model, stddev, r5);
        layer.wdown = random_weight(shapes.d_model, shapes.d_ff, stddev, r6);
    }
}

ToyDecoder build_toy_decoder(const LayerShapes& shapes, std::uint64_t seed) {
    return ToyDecoder(shapes, seed);
}

void ToyDecoder::reset() {
    for (Layer& layer : layers_) {
        layer.k_cache.clear();
        layer.v_cache.clear();
    }
    tokens_processed_ = 0;
    prefilled_ = false;
}

std::vector<float> ToyDecoder::token_embedding(std::int64_t index) const {
    Rng rng(mix_seed(mix_seed(seed_, kEmbedStream), static_cast<std::uint64_t>(index)));
    std::vector<float> emb(static_cast<std::size_t>(shapes_.d_model));
    for (float& v : emb)
        v = rng.gaussian_f32();
    return emb;
}

std::vector<float> ToyDecoder::attend(const Layer& layer, std::span<const float> q,
                                      std::int64_t upto) const {
    const std::int64_t d = shapes_.d_model;
    const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(d));

    std::vector<float> scores(static_cast<std::size_t>(upto));
    for (std::int64_t t = 0; t < upto; ++t) {
        const float* key = layer.k_cache.data() + t * d;
        float dot = 0.0f;
        for (std::int64_t j = 0; j < d; ++j)
            dot += key[j] * q[static_cast<std::size_t>(j)];
        scores[static_cast<std::size_t>(t)] = dot * inv_sqrt_d;
    }

    float max_score = scores[0];
    for (float s : scores)
        max_score = std::max(max_score, s);
    float denom = 0.0f;
    for (float& s : scores) {
        s = std::exp(s - max_score);
        denom += s;
    }
    const float inv_denom = 1.0f / denom;

    std::vector<float> out(static_cast<std::size_t>(d), 0.0f);
    for (std::int64_t t = 0; t < upto; ++t) {
        const float w = scores[static_cast<std::size_t>(t)] * inv_denom;
        const float* value = layer.v_cache.data() + t * d;
        for (std::int64_t j = 0; j < d; ++j)
            out[static_cast<std::size_t>(j)] += w * value[j];
    }
    return out;
}

std::vector<float> ToyDecoder::forward_token(std::span<const float> embedding, WorkerPool& pool) {
    const std::int64_t d = shapes_.d_model;
    const ThreadPlan plan_d = partition_rows(d, pool.size());
    const ThreadPlan plan_ff = partition_rows(shapes_.d_ff, pool.size());

    std::vector<float> x(embedding.begin(), embedding.end());
    std::vector<float> h(static_cast<std::size_t>(d));
    const std::int64_t pos = tokens_processed_;

    for (Layer& layer : layers_) {
        rms_norm(x, h);
        std::vector<float> q = parallel_gemv(layer.wq, h, plan_d, pool);
        std::vector<float> k = parallel_gemv(layer.wk, h, plan_d, pool);
        std::vector<float> v = parallel_gemv(layer.wv, h, plan_d, pool);
        layer.k_cache.insert(layer.k_cache.end(), k.begin(), k.end());
        layer.v_cache.insert(layer.v_cache.end(), v.begin(), v.end());

        const std::vector<float> attn = attend(layer, q, pos + 1);
        const std::vector<float> o = parallel_gemv(layer.wo, attn, plan_d, pool);
        for (std::int64_t j = 0; j < d; ++j)
            x[static_cast<std::size_t>(j)] += o[static_cast<std::size_t>(j)];

        rms_norm(x, h);
        const std::vector<float> up = parallel_gemv(layer.wup, h, plan_ff, pool);
        std::vector<float> gate = parallel_gemv(layer.wgate, h, plan_ff, pool);
        for (std::size_t j = 0; j < gate.size(); ++j)
            gate[j] = silu(gate[j]) * up[j];
        const std::vector<float> down = parallel_gemv(layer.wdown, gate, plan_d, pool);
        for (std::int64_t j = 0; j < d; ++j)
            x[static_cast<std::size_t>(j)] += down[static_cast<std::size_t>(j)];
    }
    ++tokens_processed_;
    return x;
}

std::vector<float> ToyDecoder::step_token(WorkerPool& pool) {
    return forward_token(token_embedding(tokens_processed_), pool);
}

std::pair<std::vector<float>, PhaseStats> ToyDecoder::prefill(int prompt_len, WorkerPool& pool) {
    if (prompt_len < 1)
        throw std::invalid_argument("prompt_len must be >= 1");
    reset();

    const std::int64_t d = shapes_.d_model;
    const std::int64_t p = prompt_len;
    const ThreadPlan plan_d = partition_rows(d, pool.size());
    const ThreadPlan plan_ff = partition_rows(shapes_.d_ff, pool.size());

    const auto t0 = Clock::now();

    // b == 1 routes to the GEMV kernel, larger batches to thin GEMM
    const auto project = [&pool](const QuantMatrixQ4& W, const ThinMatrix& H,
                                 const ThreadPlan& plan) {
        if (H.cols == 1)
            return parallel_gemv(W, H.column(0), plan, pool);
        return parallel_gemm_thin(W, H, plan, pool);
    };

    // hidden states, column-major d_model x p (column per token)
    ThinMatrix X{d, p, std::vector<float>(static_cast<std::size_t>(d * p))};
    for (std::int64_t t = 0; t < p; ++t) {
        const std::vector<float> emb = token_embedding(t);
        std::copy(emb.begin(), emb.end(), X.values.begin() + t * d);
    }

    ThinMatrix H{d, p, std::vector<float>(static_cast<std::size_t>(d * p))};
    ThinMatrix Act{shapes_.d_ff, p, std::vector<float>(static_cast<std::size_t>(shapes_.d_ff) *
                                                       static_cast<std::size_t>(p))};
    for (Layer& layer : layers_) {
        for (std::int64_t t = 0; t < p; ++t)
            rms_norm(X.column(t), std::span<float>(H.values.data() + t * d,
                                                   static_cast<std::size_t>(d)));
        const std::vector<float> Q = project(layer.wq, H, plan_d);
        const std::vector<float> K = project(layer.wk, H, plan_d);
        const std::vector<float> V = project(layer.wv, H, plan_d);
        layer.k_cache.assign(K.begin(), K.end());
        layer.v_cache.assign(V.begin(), V.end());

        ThinMatrix Attn{d, p, std::vector<float>(static_cast<std::size_t>(d * p))};
        for (std::int64_t t = 0; t < p; ++t) {
            const std::vector<float> a =
                attend(layer, std::span<const float>(Q.data() + t * d, static_cast<std::size_t>(d)),
                       t + 1);
            std::copy(a.begin(), a.end(), Attn.values.begin() + t * d);
        }
        const std::vector<float> O = project(layer.wo, Attn, plan_d);
        for (std::size_t i = 0; i < X.values.size(); ++i)
            X.values[i] += O[i];

        for (std::int64_t t = 0; t < p; ++t)
            rms_norm(X.column(t), std::span<float>(H.values.data() + t * d,
                                                   static_cast<std::size_t>(d)));
        const std::vector<float> Up = project(layer.wup, H, plan_ff);
        const std::vector<float> Gate = project(layer.wgate, H, plan_ff);
        for (std::size_t i = 0; i < Act.values.size(); ++i)
            Act.values[i] = silu(Gate[i]) * Up[i];
        const std::vector<float> Down = project(layer.wdown, Act, plan_d);
        for (std::size_t i = 0; i < X.values.size(); ++i)
            X.values[i] += Down[i];
    }

    const auto t1 = Clock::now();
    tokens_processed_ = p;
    prefilled_ = true;

    // row-major (prompt_len, d_model)
    std::vector<float> hidden(static_cast<std::size_t>(p * d));
    for (std::int64_t t = 0; t < p; ++t)
        for (std::int64_t j = 0; j < d; ++j)
            hidden[static_cast<std::size_t>(t * d + j)] = X.values[static_cast<std::size_t>(t * d + j)];

    return {std::move(hidden), PhaseStats{p, elapsed_s(t0, t1)}};
}

PhaseStats ToyDecoder::generate(int n_tokens, WorkerPool& pool) {
    if (n_tokens < 0)
        throw std::invalid_argument("n_tokens must be >= 0");
    if (!prefilled_)
        throw std::logic_error("generate called before prefill");

    double total = 0.0;
    for (int i = 0; i < n_tokens; ++i) {
        const auto t0 = Clock::now();
        step_token(pool);
        const auto t1 = Clock::now();
        total += elapsed_s(t0, t1);
    }
    return PhaseStats{n_tokens, total};
}

void ToyDecoder::place_weights(WorkerPool& pool) {
    for (Layer& layer : layers_) {
        for (QuantMatrixQ4* w : {&layer.wq, &layer.wk, &layer.wv, &layer.wo, &layer.wup,
                                 &layer.wgate, &layer.wdown})
            *w = first_touch_copy(*w, partition_rows(w->m, pool.size()), pool);
    }
}

void ToyDecoder::export_weights(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    static constexpr const char* kNames[7] = {"wq", "wk", "wv", "wo", "wup", "wgate", "wdown"};
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const Layer& layer = layers_[li];
        const QuantMatrixQ4* mats[7] = {&layer.wq, &layer.wk, &layer.wv, &layer.wo,
                                        &layer.wup, &layer.wgate, &layer.wdown};
        for (int w = 0; w < 7; ++w)
            save_qmat(*mats[static_cast<std::size_t>(w)],
                      (fs::path(dir) / ("layer" + std::to_string(li) + "_" + kNames[w] + ".qmat"))
                          .string());
    }

    std::ofstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest)
        throw std::runtime_error("cannot write manifest in " + dir);
    manifest << "name=" << name_ << "\n"
             << "d_model=" << shapes_.d_model << "\n"
             << "d_ff=" << shapes_.d_ff << "\n"
             << "n_layers=" << shapes_.n_layers << "\n"
             << "seed=" << seed_ << "\n";
}

std::pair<std::vector<float>, PhaseStats> prefill(ToyDecoder& model, int prompt_len,
                                                  int n_threads, NumaPolicy policy) {
    WorkerPool pool(n_threads);
    pool.apply_policy(policy);
    if (pool.first_touch_active())
        model.place_weights(pool);
    return model.prefill(prompt_len, pool);
}

PhaseStats generate(ToyDecoder& model, int n_tokens, int n_threads, NumaPolicy policy) {
    WorkerPool pool(n_threads);
    pool.apply_policy(policy);
    if (pool.first_touch_active())
        model.place_weights(pool);
    return model.generate(n_tokens, pool);
}

} // namespace qbench
