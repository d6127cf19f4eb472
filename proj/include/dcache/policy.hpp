#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "dcache/error.hpp"
#include "dcache/tensor.hpp"

namespace dcache {

enum class SimilarityMetric { cosine, l2 };

// Caching schedule: refresh the prompt segment every prompt_interval steps and
// the response segment every response_interval steps; between response
// refreshes, recompute the floor(update_ratio * L_r) most-changed response
// tokens as judged by the similarity metric over Value vectors.
struct CachePolicy {
    std::size_t prompt_interval = 16;    // K_p
    std::size_t response_interval = 8;   // K_r
    double update_ratio = 0.25;          // rho in [0, 1]
    SimilarityMetric metric = SimilarityMetric::cosine;
    bool enabled = true;

    void validate() const {
        if (prompt_interval < 1 || response_interval < 1)
            throw config_error("policy: refresh intervals must be >= 1");
        if (!(update_ratio >= 0.0 && update_ratio <= 1.0))
            throw config_error("policy: update_ratio must be in [0, 1]");
    }
};

struct RefreshFlags {
    bool prompt = false;
    bool response = false;
};

// Algorithm-level refresh test for step k (consulted only for k < K; the
// k = K pass is the unconditional initialization).
inline RefreshFlags refresh_flags(std::size_t k, const CachePolicy& policy) {
    return {k % policy.prompt_interval == 0, k % policy.response_interval == 0};
}

// floor(rho * len) with a tiny guard against binary rounding of products like
// 0.15 * 20 landing just below an integer.
inline std::size_t update_count(double rho, std::size_t len) {
    const double n = std::floor(rho * static_cast<double>(len) + 1e-9);
    if (n <= 0.0)
        return 0;
    return std::min(len, static_cast<std::size_t>(n));
}

// Row-wise similarity between new and cached Value matrices.
inline std::vector<double> score_tokens(const Matrix& v_new, const Matrix& v_cached,
                                        SimilarityMetric metric) {
    if (v_new.rows() != v_cached.rows() || v_new.cols() != v_cached.cols())
        throw contract_error("score_tokens: shape mismatch");
    std::vector<double> scores(v_new.rows());
    for (std::size_t j = 0; j < v_new.rows(); j++)
        scores[j] = metric == SimilarityMetric::cosine
                        ? cosine_similarity(v_new.row(j), v_cached.row(j))
                        : l2_distance(v_new.row(j), v_cached.row(j));
    return scores;
}

// Pick the floor(rho * L) most-changed token indices, ascending. For cosine a
// lower score means more changed; for l2 a larger distance does. Ties resolve
// to the lower index.
inline std::vector<std::size_t> select_update_indices(const std::vector<double>& scores,
                                                      double rho, SimilarityMetric metric) {
    const std::size_t n = update_count(rho, scores.size());
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b])
            return metric == SimilarityMetric::cosine ? scores[a] < scores[b]
                                                      : scores[a] > scores[b];
        return a < b;
    });
    order.resize(n);
    std::sort(order.begin(), order.end());
    return order;
}

}  // namespace dcache
