#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dcache/error.hpp"
#include "dcache/flops.hpp"
#include "dcache/state.hpp"
#include "dcache/tensor.hpp"

namespace dcache {

inline constexpr float kLayerNormEps = 1e-5f;

struct ModelConfig {
    std::size_t num_layers = 4;
    std::size_t hidden_dim = 64;
    std::size_t num_heads = 4;
    std::size_t ffn_dim = 256;
    std::size_t vocab_size = 258;
    TokenId mask_token_id = 256;
    std::uint64_t seed = 0;

    void validate() const {
        if (num_layers < 1 || hidden_dim < 1 || num_heads < 1 || ffn_dim < 1)
            throw config_error("model: all size fields must be >= 1");
        if (hidden_dim % num_heads != 0)
            throw config_error("model: hidden_dim must be divisible by num_heads");
        if (vocab_size < 2)
            throw config_error("model: vocab_size must be >= 2 (mask plus one real token)");
        if (mask_token_id >= vocab_size)
            throw config_error("model: mask_token_id must be < vocab_size");
    }
};

struct LayerWeights {
    Matrix q_proj, k_proj, v_proj;  // hidden x hidden
    Matrix out_proj;                // hidden x hidden
    Matrix ffn_up;                  // hidden x ffn
    Matrix ffn_down;                // ffn x hidden
};

namespace detail {

// Seeded Gaussian stream via Box-Muller over explicit 53-bit uniforms, so the
// draw sequence is fixed by the seed alone (std::normal_distribution is
// implementation-defined).
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : rng_(seed) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform01();  // in (0, 1]
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    double uniform01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

    std::mt19937_64 rng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline void fill_gaussian(Matrix& m, GaussianStream& g, double stddev) {
    for (float& v : m.data())
        v = static_cast<float>(stddev * g.next());
}

}  // namespace detail

// Immutable toy transformer weights. Construction is a pure function of the
// config: equal configs give bit-identical weights.
class ModelParams {
public:
    explicit ModelParams(const ModelConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        detail::GaussianStream g(cfg.seed);
        constexpr double kStd = 0.02;
        token_embedding_ = Matrix(cfg.vocab_size, cfg.hidden_dim);
        detail::fill_gaussian(token_embedding_, g, kStd);
        layers_.resize(cfg.num_layers);
        for (auto& lw : layers_) {
            lw.q_proj = Matrix(cfg.hidden_dim, cfg.hidden_dim);
            lw.k_proj = Matrix(cfg.hidden_dim, cfg.hidden_dim);
            lw.v_proj = Matrix(cfg.hidden_dim, cfg.hidden_dim);
            lw.out_proj = Matrix(cfg.hidden_dim, cfg.hidden_dim);
            lw.ffn_up = Matrix(cfg.hidden_dim, cfg.ffn_dim);
            lw.ffn_down = Matrix(cfg.ffn_dim, cfg.hidden_dim);
            detail::fill_gaussian(lw.q_proj, g, kStd);
            detail::fill_gaussian(lw.k_proj, g, kStd);
            detail::fill_gaussian(lw.v_proj, g, kStd);
            detail::fill_gaussian(lw.out_proj, g, kStd);
            detail::fill_gaussian(lw.ffn_up, g, kStd);
            detail::fill_gaussian(lw.ffn_down, g, kStd);
        }
        logit_head_ = Matrix(cfg.hidden_dim, cfg.vocab_size);
        detail::fill_gaussian(logit_head_, g, kStd);
    }

    const ModelConfig& config() const { return cfg_; }
    const Matrix& token_embedding() const { return token_embedding_; }
    const LayerWeights& layer(std::size_t l) const { return layers_.at(l); }
    const Matrix& logit_head() const { return logit_head_; }

private:
    ModelConfig cfg_;
    Matrix token_embedding_;
    std::vector<LayerWeights> layers_;
    Matrix logit_head_;
};

inline ModelParams init_model(const ModelConfig& cfg) { return ModelParams(cfg); }

// Fixed sinusoidal positional term added to the token embedding.
inline float sinusoidal_position(std::size_t pos, std::size_t col, std::size_t dim) {
    const double exponent = static_cast<double>(2 * (col / 2)) / static_cast<double>(dim);
    const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
    return static_cast<float>(col % 2 == 0 ? std::sin(angle) : std::cos(angle));
}

inline Matrix embed(const ModelParams& params, std::span<const TokenId> tokens) {
    const auto& cfg = params.config();
    Matrix out(tokens.size(), cfg.hidden_dim);
    for (std::size_t t = 0; t < tokens.size(); t++) {
        if (tokens[t] >= cfg.vocab_size)
            throw contract_error("embed: token id out of range");
        const float* emb = params.token_embedding().row_data(tokens[t]);
        float* dst = out.row_data(t);
        for (std::size_t c = 0; c < cfg.hidden_dim; c++)
            dst[c] = emb[c] + sinusoidal_position(t, c, cfg.hidden_dim);
    }
    return out;
}

struct QkvProjection {
    Matrix q, k, v;
};

inline QkvProjection qkv_project(const ModelParams& params, std::size_t layer,
                                 const Matrix& x_norm, FlopCounter& flops) {
    const auto& lw = params.layer(layer);
    if (x_norm.cols() != params.config().hidden_dim)
        throw contract_error("qkv_project: input column count != hidden_dim");
    QkvProjection out;
    out.q = matmul(x_norm, lw.q_proj);
    out.k = matmul(x_norm, lw.k_proj);
    out.v = matmul(x_norm, lw.v_proj);
    flops.add(3 * 2 * static_cast<std::uint64_t>(x_norm.rows()) * x_norm.cols() * x_norm.cols());
    return out;
}

inline Matrix project_value(const ModelParams& params, std::size_t layer, const Matrix& x_norm,
                            FlopCounter& flops) {
    if (x_norm.cols() != params.config().hidden_dim)
        throw contract_error("project_value: input column count != hidden_dim");
    flops.add_matmul(x_norm.rows(), x_norm.cols(), x_norm.cols());
    return matmul(x_norm, params.layer(layer).v_proj);
}

inline std::pair<Matrix, Matrix> project_query_key(const ModelParams& params, std::size_t layer,
                                                   const Matrix& x_norm, FlopCounter& flops) {
    if (x_norm.cols() != params.config().hidden_dim)
        throw contract_error("project_query_key: input column count != hidden_dim");
    flops.add(2 * 2 * static_cast<std::uint64_t>(x_norm.rows()) * x_norm.cols() * x_norm.cols());
    const auto& lw = params.layer(layer);
    return {matmul(x_norm, lw.q_proj), matmul(x_norm, lw.k_proj)};
}

// Bidirectional multi-head scaled dot-product attention followed by the
// output projection. No causal mask; queries may cover a subset of tokens
// while keys/values span the full sequence. Each output row depends only on
// its own query row, so restricting Q to a row subset reproduces exactly
// those rows of the full result.
inline Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t num_heads,
                        const Matrix& out_proj, FlopCounter& flops) {
    const std::size_t d = q.cols();
    if (k.cols() != d || v.cols() != d)
        throw contract_error("attention: Q/K/V column counts differ");
    if (k.rows() != v.rows())
        throw contract_error("attention: K and V row counts differ");
    if (out_proj.rows() != d || out_proj.cols() != d)
        throw contract_error("attention: output projection must be d x d");
    if (num_heads == 0 || d % num_heads != 0)
        throw contract_error("attention: hidden dim not divisible by head count");
    if (k.rows() == 0 && q.rows() > 0)
        throw contract_error("attention: no keys to attend over");

    const std::size_t head_dim = d / num_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
    const std::size_t kv = k.rows();

    Matrix context(q.rows(), d);
    std::vector<float> logits(kv);
    std::vector<double> weights(kv);
    for (std::size_t h = 0; h < num_heads; h++) {
        const std::size_t off = h * head_dim;
        for (std::size_t i = 0; i < q.rows(); i++) {
            const float* qrow = q.row_data(i) + off;
            for (std::size_t j = 0; j < kv; j++) {
                const float* krow = k.row_data(j) + off;
                double acc = 0.0;
                for (std::size_t t = 0; t < head_dim; t++)
                    acc += static_cast<double>(qrow[t]) * static_cast<double>(krow[t]);
                logits[j] = static_cast<float>(acc * scale);
            }
            float mx = logits[0];
            for (std::size_t j = 1; j < kv; j++)
                mx = std::max(mx, logits[j]);
            double sum = 0.0;
            for (std::size_t j = 0; j < kv; j++) {
                weights[j] = std::exp(static_cast<double>(logits[j]) - static_cast<double>(mx));
                sum += weights[j];
            }
            for (std::size_t j = 0; j < kv; j++)
                weights[j] /= sum;
            float* crow = context.row_data(i) + off;
            for (std::size_t c = 0; c < head_dim; c++) {
                double acc = 0.0;
                for (std::size_t j = 0; j < kv; j++)
                    acc += weights[j] * static_cast<double>(v(j, off + c));
                crow[c] = static_cast<float>(acc);
            }
        }
    }
    // scores + context, 2 FLOPs per multiply-add, all heads together
    flops.add(4 * static_cast<std::uint64_t>(q.rows()) * kv * d);
    flops.add_matmul(q.rows(), d, d);
    return matmul(context, out_proj);
}

inline float gelu(float x) {
    const double xd = x;
    return static_cast<float>(0.5 * xd * (1.0 + std::erf(xd / std::sqrt(2.0))));
}

inline Matrix ffn(const ModelParams& params, std::size_t layer, const Matrix& h_norm,
                  FlopCounter& flops) {
    const auto& lw = params.layer(layer);
    if (h_norm.cols() != params.config().hidden_dim)
        throw contract_error("ffn: input column count != hidden_dim");
    Matrix up = matmul(h_norm, lw.ffn_up);
    for (float& v : up.data())
        v = gelu(v);
    flops.add(2 * 2 * static_cast<std::uint64_t>(h_norm.rows()) * h_norm.cols() * lw.ffn_up.cols());
    return matmul(up, lw.ffn_down);
}

struct GreedyDecode {
    std::vector<TokenId> tokens;     // per response position
    std::vector<float> confidence;   // softmax probability of the chosen token
};

// Per-position greedy decode over the logit head. The mask token is excluded
// from the argmax so generation always commits a real token; ties resolve to
// the lowest token id. Unmasked positions keep their token with confidence 1.
// Not charged to the FLOPs ledger.
inline GreedyDecode decode_greedy(const ModelParams& params, const Matrix& hidden,
                                  const SequenceState& state) {
    const auto& cfg = params.config();
    const std::size_t m = state.prompt_len();
    const std::size_t lr = state.response_len();
    if (hidden.rows() != m + lr)
        throw contract_error("decode_greedy: hidden row count != full sequence length");

    GreedyDecode out;
    out.tokens.resize(lr);
    out.confidence.resize(lr);
    const Matrix& head = params.logit_head();
    std::vector<double> logits(cfg.vocab_size);
    for (std::size_t j = 0; j < lr; j++) {
        if (!state.masked[j]) {
            out.tokens[j] = state.response[j];
            out.confidence[j] = 1.0f;
            continue;
        }
        std::fill(logits.begin(), logits.end(), 0.0);
        const float* hrow = hidden.row_data(m + j);
        for (std::size_t c = 0; c < cfg.hidden_dim; c++) {
            const double hv = hrow[c];
            const float* wrow = head.row_data(c);
            for (std::size_t t = 0; t < cfg.vocab_size; t++)
                logits[t] += hv * static_cast<double>(wrow[t]);
        }
        std::size_t best = cfg.mask_token_id == 0 ? 1 : 0;
        for (std::size_t t = 0; t < cfg.vocab_size; t++) {
            if (t == cfg.mask_token_id)
                continue;
            if (logits[t] > logits[best])
                best = t;
        }
        double mx = logits[0];
        for (std::size_t t = 1; t < cfg.vocab_size; t++)
            mx = std::max(mx, logits[t]);
        double sum = 0.0;
        for (std::size_t t = 0; t < cfg.vocab_size; t++)
            sum += std::exp(logits[t] - mx);
        out.tokens[j] = static_cast<TokenId>(best);
        out.confidence[j] = static_cast<float>(std::exp(logits[best] - mx) / sum);
    }
    return out;
}

}  // namespace dcache
