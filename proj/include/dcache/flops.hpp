#pragma once

#include <cstdint>

namespace dcache {

// Running FLOPs tally. Convention: one multiply-add counts as 2 FLOPs, and
// only matmul-shaped work is charged (projections, attention scores/context,
// FFN). Softmax, layer norm, gelu, the embedding lookup and the decode head
// are excluded from the ledger.
struct FlopCounter {
    std::uint64_t flops = 0;

    void add(std::uint64_t n) { flops += n; }
    void add_matmul(std::uint64_t rows, std::uint64_t inner, std::uint64_t cols) {
        flops += 2 * rows * inner * cols;
    }
};

}  // namespace dcache
