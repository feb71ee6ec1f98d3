#pragma once

#include "qbench/parallel.hpp"
#include "qbench/quant.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace qbench {

struct LayerShapes {
    int d_model = 0;
    int d_ff = 0;
    int n_layers = 0;
};

// "toy" = (512, 1376, 2); "llama8b-layer" = (4096, 14336, 1), one layer at
// Llama-3-8B widths.
LayerShapes preset_shapes(std::string_view name);
std::vector<std::string> preset_names();

struct PhaseStats {
    std::int64_t tokens = 0;
    double seconds = 0.0;

    // Throws std::domain_error when no tokens (or no time) were accumulated.
    double tokens_per_s() const;
};

// Synthetic decoder stack: quantized projection and MLP weights, fp32
// KV cache, single-head causal attention. A throughput harness, not a
// language model: token embeddings are seeded pseudo-random vectors.
class ToyDecoder {
public:
    ToyDecoder(const LayerShapes& shapes, std::uint64_t seed, std::string name = "custom");

    const LayerShapes& shapes() const { return shapes_; }
    std::uint64_t seed() const { return seed_; }
    const std::string& name() const { return name_; }

    // Tokens processed so far == per-layer KV cache length.
    std::int64_t kv_len() const { return tokens_processed_; }
    void reset();

    // Batched prompt pass over tokens [0, prompt_len): every linear layer
    // runs as thin GEMM with b = prompt_len. Resets the KV cache first.
    // Returns row-major (prompt_len, d_model) hidden states plus timing.
    std::pair<std::vector<float>, PhaseStats> prefill(int prompt_len, WorkerPool& pool);

    // Sequential one-token steps (b = 1 GEMV per linear layer). Requires a
    // prior prefill; throws std::logic_error otherwise. tokens/s is the token
    // count over the sum of per-step wall times.
    PhaseStats generate(int n_tokens, WorkerPool& pool);

    // One step of the generation path for the next token; appends to the
    // cache and returns the final-layer hidden state. This is the primitive
    // generate() loops over, usable from a fresh model for equivalence checks.
    std::vector<float> step_token(WorkerPool& pool);

    std::vector<float> token_embedding(std::int64_t index) const;

    // Re-materializes every weight matrix with worker-side first-touch copies.
    void place_weights(WorkerPool& pool);

    // Writes one .qmat per weight matrix plus a manifest.txt.
    void export_weights(const std::string& dir) const;

    struct Layer {
        QuantMatrixQ4 wq, wk, wv, wo; // d_model x d_model
        QuantMatrixQ4 wup, wgate;     // d_ff x d_model
        QuantMatrixQ4 wdown;          // d_model x d_ff
        std::vector<float> k_cache;   // kv_len x d_model, row per token
        std::vector<float> v_cache;
    };
    const std::vector<Layer>& layers() const { return layers_; }

private:
    std::vector<float> forward_token(std::span<const float> embedding, WorkerPool& pool);
    std::vector<float> attend(const Layer& layer, std::span<const float> q,
                              std::int64_t upto) const;

    LayerShapes shapes_;
    std::uint64_t seed_ = 0;
    std::string name_;
    std::vector<Layer> layers_;
    std::int64_t tokens_processed_ = 0;
    bool prefilled_ = false;
};

ToyDecoder build_toy_decoder(const LayerShapes& shapes, std::uint64_t seed);

// Conveniences matching the benchmark surface: own pool, policy applied.
std::pair<std::vector<float>, PhaseStats> prefill(ToyDecoder& model, int prompt_len,
                                                  int n_threads, NumaPolicy policy);
PhaseStats generate(ToyDecoder& model, int n_tokens, int n_threads, NumaPolicy policy);

} // namespace qbench
