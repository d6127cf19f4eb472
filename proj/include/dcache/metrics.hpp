#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dcache/error.hpp"
#include "dcache/model.hpp"
#include "dcache/policy.hpp"
#include "dcache/state.hpp"
#include "dcache/tensor.hpp"

namespace dcache {

// Per-layer case codes as they appear in metrics.csv. 'I' is the k = K
// initialization pass; 'F' a plain uncached full pass (reference runs).
enum : char {
    kCaseInit = 'I',
    kCaseFullRefresh = '1',
    kCasePromptOnly = '2',
    kCaseResponseOnly = '3',
    kCaseAdaptive = '4',
    kCaseReference = 'F',
};

struct StepRecord {
    std::size_t step = 0;            // k
    std::string case_codes;          // one char per layer
    std::uint64_t flops = 0;
    std::uint64_t tokens_recomputed = 0;  // rows run through fresh QKV/attention/FFN
};

// How each (step, layer) instance of the k = K-1 .. 1 loop was handled. The
// five counters partition (K-1) * num_layers; adaptive covers rho > 0 partial
// updates and pure_reuse the rho = 0 retrieval branch.
struct RefreshCounts {
    std::uint64_t joint = 0;
    std::uint64_t prompt_only = 0;
    std::uint64_t response_only = 0;
    std::uint64_t adaptive = 0;
    std::uint64_t pure_reuse = 0;

    std::uint64_t total() const {
        return joint + prompt_only + response_only + adaptive + pure_reuse;
    }
};

struct Divergence {
    double match_rate = 0.0;      // fraction of equal response tokens
    double max_hidden_diff = 0.0; // max |delta| over final hidden states
};

struct RunMetrics {
    std::uint64_t total_flops = 0;
    std::vector<StepRecord> per_step;     // length K, in execution order k = K .. 1
    std::uint64_t cache_elements = 0;     // 0 for uncached runs
    RefreshCounts refresh_counts;
    std::optional<Divergence> divergence;
};

// ---------------------------------------------------------------------------
// Closed-form FLOPs oracle. Counts exactly what the instrumented engine
// charges: projections, attention scores/context and FFN matmuls, with one
// multiply-add = 2 FLOPs. The embedding lookup and decode head are outside
// the ledger.
namespace flopmath {

inline std::uint64_t qkv_proj(std::uint64_t rows, std::uint64_t d) { return 3 * 2 * rows * d * d; }
inline std::uint64_t attention(std::uint64_t q_rows, std::uint64_t kv_rows, std::uint64_t d) {
    return 2 * q_rows * kv_rows * d + 2 * q_rows * kv_rows * d;
}
inline std::uint64_t out_proj(std::uint64_t q_rows, std::uint64_t d) { return 2 * q_rows * d * d; }
inline std::uint64_t ffn(std::uint64_t rows, std::uint64_t d, std::uint64_t f) {
    return 2 * rows * d * f + 2 * rows * f * d;
}

// Per-layer cost of one full pass over all T = M + R tokens (init, Case 1 and
// the uncached reference are the same count).
inline std::uint64_t layer_full(std::uint64_t m, std::uint64_t r, std::uint64_t d,
                                std::uint64_t f) {
    const std::uint64_t t = m + r;
    return qkv_proj(t, d) + attention(t, t, d) + out_proj(t, d) + ffn(t, d, f);
}
inline std::uint64_t layer_prompt_only(std::uint64_t m, std::uint64_t r, std::uint64_t d,
                                       std::uint64_t f) {
    return qkv_proj(m, d) + attention(m, m + r, d) + out_proj(m, d) + ffn(m, d, f);
}
inline std::uint64_t layer_response_only(std::uint64_t m, std::uint64_t r, std::uint64_t d,
                                         std::uint64_t f) {
    return qkv_proj(r, d) + attention(r, m + r, d) + out_proj(r, d) + ffn(r, d, f);
}
// Adaptive layer with n selected tokens. The V-verify projection over all R
// response rows is real work and is charged.
inline std::uint64_t layer_adaptive(std::uint64_t m, std::uint64_t r, std::uint64_t d,
                                    std::uint64_t f, std::uint64_t n) {
    const std::uint64_t v_verify = 2 * r * d * d;
    const std::uint64_t qk_sel = 2 * 2 * n * d * d;
    return v_verify + qk_sel + attention(n, m + r, d) + out_proj(n, d) + ffn(n, d, f);
}

}  // namespace flopmath

// Enumerates every step and layer of a run and returns the exact ledger total
// the engine must report. A disabled policy describes the uncached reference.
inline std::uint64_t analytic_flops(const ModelConfig& model, const GenConfig& gen,
                                    const CachePolicy& policy) {
    const std::uint64_t m = gen.prompt.size();
    const std::uint64_t r = gen.gen_len;
    const std::uint64_t d = model.hidden_dim;
    const std::uint64_t f = model.ffn_dim;
    const std::uint64_t layers = model.num_layers;

    const std::uint64_t full = flopmath::layer_full(m, r, d, f);
    if (!policy.enabled)
        return gen.steps * layers * full;

    const std::uint64_t n_sel = update_count(policy.update_ratio, gen.gen_len);
    std::uint64_t total = layers * full;  // k = K initialization pass
    for (std::size_t k = gen.steps; k-- > 1;) {
        const RefreshFlags flags = refresh_flags(k, policy);
        std::uint64_t per_layer = 0;
        if (flags.prompt && flags.response)
            per_layer = full;
        else if (flags.prompt)
            per_layer = flopmath::layer_prompt_only(m, r, d, f);
        else if (flags.response)
            per_layer = flopmath::layer_response_only(m, r, d, f);
        else if (policy.update_ratio > 0.0)
            per_layer = flopmath::layer_adaptive(m, r, d, f, n_sel);
        total += layers * per_layer;
    }
    return total;
}

inline double speedup(const RunMetrics& reference, const RunMetrics& cached) {
    if (cached.total_flops == 0)
        throw contract_error("speedup: cached run reports zero FLOPs");
    return static_cast<double>(reference.total_flops) / static_cast<double>(cached.total_flops);
}

inline Divergence compare_outputs(const std::vector<TokenId>& a_tokens, const Matrix& a_hidden,
                                  const std::vector<TokenId>& b_tokens, const Matrix& b_hidden) {
    if (a_tokens.size() != b_tokens.size())
        throw contract_error("compare_outputs: token sequence lengths differ");
    if (a_hidden.rows() != b_hidden.rows() || a_hidden.cols() != b_hidden.cols())
        throw contract_error("compare_outputs: hidden state shapes differ");
    Divergence d;
    std::size_t match = 0;
    for (std::size_t i = 0; i < a_tokens.size(); i++)
        match += a_tokens[i] == b_tokens[i] ? 1 : 0;
    d.match_rate = a_tokens.empty() ? 1.0
                                    : static_cast<double>(match) /
                                          static_cast<double>(a_tokens.size());
    double mx = 0.0;
    for (std::size_t i = 0; i < a_hidden.size(); i++)
        mx = std::max(mx, std::fabs(static_cast<double>(a_hidden.data()[i]) -
                                    static_cast<double>(b_hidden.data()[i])));
    d.max_hidden_diff = mx;
    return d;
}

// ---------------------------------------------------------------------------
// Similarity diagnostics (reference path only): per adjacent step pair, the
// cosine similarity of each token's K, V, AttnOut and FFNOut against the
// previous step, plus rank correlations of V similarity with the downstream
// features over the quarter of response rows that changed most.

struct TraceRow {
    std::size_t step = 0;   // the newer step of the pair
    std::size_t layer = 0;
    std::size_t token = 0;  // 0-based over [prompt; response]
    double sim_k = 0.0, sim_v = 0.0, sim_attn = 0.0, sim_ffn = 0.0;
};

struct SimilarityTrace {
    std::vector<TraceRow> rows;
    double v_attn_rank_corr = 0.0;
    double v_ffn_rank_corr = 0.0;
};

namespace detail {

inline std::vector<double> average_ranks(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]])
            j++;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; t++)
            ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; i++) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; i++) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    if (va == 0.0 && vb == 0.0)
        return 1.0;  // identical constant rank vectors
    if (va == 0.0 || vb == 0.0)
        return 0.0;
    return cov / std::sqrt(va * vb);
}

}  // namespace detail

inline double spearman_rank_corr(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw contract_error("spearman_rank_corr: length mismatch");
    if (a.empty())
        return 0.0;
    return detail::pearson(detail::average_ranks(a), detail::average_ranks(b));
}

// Computes the rank correlations over the floor(25%) most dissimilar response
// rows (lowest V similarity), pooled across steps and layers.
inline void finalize_trace(SimilarityTrace& trace, std::size_t prompt_len) {
    std::vector<std::size_t> resp;
    for (std::size_t i = 0; i < trace.rows.size(); i++)
        if (trace.rows[i].token >= prompt_len)
            resp.push_back(i);
    const std::size_t take = resp.size() / 4;
    if (take == 0) {
        trace.v_attn_rank_corr = 0.0;
        trace.v_ffn_rank_corr = 0.0;
        return;
    }
    std::sort(resp.begin(), resp.end(), [&](std::size_t a, std::size_t b) {
        if (trace.rows[a].sim_v != trace.rows[b].sim_v)
            return trace.rows[a].sim_v < trace.rows[b].sim_v;
        return a < b;
    });
    resp.resize(take);
    std::vector<double> v(take), attn(take), ffn_sim(take);
    for (std::size_t i = 0; i < take; i++) {
        v[i] = trace.rows[resp[i]].sim_v;
        attn[i] = trace.rows[resp[i]].sim_attn;
        ffn_sim[i] = trace.rows[resp[i]].sim_ffn;
    }
    trace.v_attn_rank_corr = spearman_rank_corr(v, attn);
    trace.v_ffn_rank_corr = spearman_rank_corr(v, ffn_sim);
}

}  // namespace dcache
