#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "dcache/error.hpp"
#include "dcache/tensor.hpp"

namespace dcache {

enum class CacheSide { prompt, response };
enum class CacheFeature { key, value, attn_out, ffn_out };

inline const char* to_string(CacheSide s) {
    return s == CacheSide::prompt ? "prompt" : "response";
}
inline const char* to_string(CacheFeature f) {
    switch (f) {
        case CacheFeature::key: return "key";
        case CacheFeature::value: return "value";
        case CacheFeature::attn_out: return "attn_out";
        case CacheFeature::ffn_out: return "ffn_out";
    }
    return "?";
}

// The four per-layer feature matrices a segment caches. All share the same
// row count (the segment's token count) and hidden_dim columns.
struct LayerFeatures {
    Matrix key, value, attn_out, ffn_out;
};

// Feature subset selector for scatter updates. Value is deliberately absent:
// the response Value cache is only ever replaced wholesale.
enum : unsigned {
    kUpdateKey = 1u << 0,
    kUpdateAttnOut = 1u << 1,
    kUpdateFfnOut = 1u << 2,
};

struct CacheWriteEvent {
    std::size_t step = 0;
    std::size_t layer = 0;
    CacheSide side = CacheSide::prompt;
    CacheFeature feature = CacheFeature::key;
    bool full = false;                // wholesale replacement
    std::vector<std::size_t> rows;    // scattered rows when not full
};

using CacheWriteLog = std::vector<CacheWriteEvent>;

// Dual feature cache: one prompt segment and one response segment per layer,
// each holding K, V, AttnOut and FFNOut. Entries are zero-filled and marked
// cold at construction; reading a cold entry is an internal scheduling error.
// Shapes are fixed for the cache's lifetime, so the memory footprint is
// constant across denoising steps.
class DualCache {
public:
    DualCache(std::size_t num_layers, std::size_t prompt_len, std::size_t response_len,
              std::size_t hidden_dim)
        : num_layers_(num_layers),
          prompt_len_(prompt_len),
          response_len_(response_len),
          hidden_dim_(hidden_dim) {
        if (num_layers < 1 || hidden_dim < 1 || response_len < 1)
            throw contract_error("DualCache: layers, hidden_dim and response_len must be >= 1");
        prompt_.resize(num_layers);
        response_.resize(num_layers);
        for (std::size_t l = 0; l < num_layers; l++) {
            init_entry(prompt_[l], prompt_len);
            init_entry(response_[l], response_len);
        }
        cold_.assign(2 * num_layers, 1);
    }

    std::size_t num_layers() const { return num_layers_; }
    std::size_t prompt_len() const { return prompt_len_; }
    std::size_t response_len() const { return response_len_; }
    std::size_t hidden_dim() const { return hidden_dim_; }

    bool cold(std::size_t layer, CacheSide side) const { return cold_[flag_index(layer, side)] != 0; }

    const LayerFeatures& features(std::size_t layer, CacheSide side) const {
        check_layer(layer);
        if (cold(layer, side))
            throw internal_error(std::string("DualCache: read of cold ") + to_string(side) +
                                 " entry at layer " + std::to_string(layer));
        return side == CacheSide::prompt ? prompt_[layer] : response_[layer];
    }

    // Wholesale replacement of a layer/side entry (full refresh path).
    void replace_segment(std::size_t layer, CacheSide side, LayerFeatures feats) {
        check_layer(layer);
        const std::size_t len = side_len(side);
        for (const Matrix* m : {&feats.key, &feats.value, &feats.attn_out, &feats.ffn_out})
            if (m->rows() != len || m->cols() != hidden_dim_)
                throw contract_error("replace_segment: feature shape does not match segment");
        LayerFeatures& dst = entry(layer, side);
        dst = std::move(feats);
        cold_[flag_index(layer, side)] = 0;
        if (log_writes) {
            for (CacheFeature f : {CacheFeature::key, CacheFeature::value, CacheFeature::attn_out,
                                   CacheFeature::ffn_out})
                write_log_.push_back({step_, layer, side, f, true, {}});
        }
    }

    // Wholesale replacement of one feature matrix; used for the response
    // Value cache during adaptive steps ("always use new V").
    void replace_feature(std::size_t layer, CacheSide side, CacheFeature feature, Matrix m) {
        check_layer(layer);
        check_warm(layer, side, "replace_feature");
        if (m.rows() != side_len(side) || m.cols() != hidden_dim_)
            throw contract_error("replace_feature: shape does not match segment");
        select(entry(layer, side), feature) = std::move(m);
        if (log_writes)
            write_log_.push_back({step_, layer, side, feature, true, {}});
    }

    // In-place replacement of the given rows of one feature matrix.
    void scatter_update_feature(std::size_t layer, CacheSide side, CacheFeature feature,
                                const std::vector<std::size_t>& idx, const Matrix& rows) {
        check_layer(layer);
        check_warm(layer, side, "scatter_update_feature");
        if (feature == CacheFeature::value)
            throw contract_error("scatter_update_feature: V is replaced wholesale, never scattered");
        validate_row_indices(idx, side_len(side), "scatter_update_feature");
        if (rows.rows() != idx.size() || rows.cols() != hidden_dim_)
            throw contract_error("scatter_update_feature: partial rows shape mismatch");
        Matrix& dst = select(entry(layer, side), feature);
        for (std::size_t i = 0; i < idx.size(); i++)
            std::memcpy(dst.row_data(idx[i]), rows.row_data(i), hidden_dim_ * sizeof(float));
        if (log_writes)
            write_log_.push_back({step_, layer, side, feature, false, idx});
    }

    // Scatter several features of one segment at the shared index list.
    // `which` is any subset of {K, AttnOut, FFNOut}; only the named members
    // of `partial` are consulted.
    void scatter_update_segment(std::size_t layer, CacheSide side,
                                const std::vector<std::size_t>& idx, const LayerFeatures& partial,
                                unsigned which) {
        if (which & kUpdateKey)
            scatter_update_feature(layer, side, CacheFeature::key, idx, partial.key);
        if (which & kUpdateAttnOut)
            scatter_update_feature(layer, side, CacheFeature::attn_out, idx, partial.attn_out);
        if (which & kUpdateFfnOut)
            scatter_update_feature(layer, side, CacheFeature::ffn_out, idx, partial.ffn_out);
    }

    // Total cached element count: 4 feature matrices per layer and side.
    std::uint64_t memory_elements() const {
        return 4ull * num_layers_ * (prompt_len_ + response_len_) * hidden_dim_;
    }

    // --- write tracking (used by staleness and update-pattern tests) ---
    bool log_writes = false;
    void set_step(std::size_t k) { step_ = k; }
    const CacheWriteLog& write_log() const { return write_log_; }
    CacheWriteLog take_write_log() { return std::move(write_log_); }

    // Debug dump: 16-byte header (rows, cols as little-endian u64) followed
    // by row-major float32 payload.
    void dump_feature(std::size_t layer, CacheSide side, CacheFeature feature,
                      const std::filesystem::path& path) const {
        const Matrix& m = select(const_cast<LayerFeatures&>(features(layer, side)), feature);
        std::FILE* f = std::fopen(path.string().c_str(), "wb");
        if (!f)
            throw config_error("dump_feature: cannot open " + path.string());
        const std::uint64_t header[2] = {m.rows(), m.cols()};
        std::fwrite(header, sizeof(std::uint64_t), 2, f);
        if (m.size() > 0)
            std::fwrite(m.data().data(), sizeof(float), m.size(), f);
        std::fclose(f);
    }

private:
    void init_entry(LayerFeatures& e, std::size_t len) {
        e.key = Matrix(len, hidden_dim_);
        e.value = Matrix(len, hidden_dim_);
        e.attn_out = Matrix(len, hidden_dim_);
        e.ffn_out = Matrix(len, hidden_dim_);
    }

    void check_layer(std::size_t layer) const {
        if (layer >= num_layers_)
            throw contract_error("DualCache: layer index out of range");
    }
    void check_warm(std::size_t layer, CacheSide side, const char* op) const {
        if (cold(layer, side))
            throw internal_error(std::string(op) + ": partial update of a cold entry");
    }

    std::size_t side_len(CacheSide side) const {
        return side == CacheSide::prompt ? prompt_len_ : response_len_;
    }
    std::size_t flag_index(std::size_t layer, CacheSide side) const {
        return layer * 2 + (side == CacheSide::prompt ? 0 : 1);
    }
    LayerFeatures& entry(std::size_t layer, CacheSide side) {
        return side == CacheSide::prompt ? prompt_[layer] : response_[layer];
    }
    static Matrix& select(LayerFeatures& e, CacheFeature f) {
        switch (f) {
            case CacheFeature::key: return e.key;
            case CacheFeature::value: return e.value;
            case CacheFeature::attn_out: return e.attn_out;
            case CacheFeature::ffn_out: return e.ffn_out;
        }
        throw contract_error("DualCache: unknown feature");
    }

    std::size_t num_layers_, prompt_len_, response_len_, hidden_dim_;
    std::vector<LayerFeatures> prompt_;
    std::vector<LayerFeatures> response_;
    std::vector<std::uint8_t> cold_;
    std::size_t step_ = 0;
    CacheWriteLog write_log_;
};

inline DualCache cache_init(std::size_t num_layers, std::size_t prompt_len,
                            std::size_t response_len, std::size_t hidden_dim) {
    return DualCache(num_layers, prompt_len, response_len, hidden_dim);
}

}  // namespace dcache
