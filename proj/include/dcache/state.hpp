#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <vector>

#include "dcache/error.hpp"

namespace dcache {

using TokenId = std::uint32_t;

// Generation run shape: K denoising steps over a gen_len response decoded in
// semi-autoregressive blocks of block_len tokens. A final short block and a
// step count not divisible by the block count are both allowed; the schedule
// spreads the remainder over the earliest steps.
struct GenConfig {
    std::size_t steps = 64;      // K
    std::size_t gen_len = 64;    // L_r
    std::size_t block_len = 8;   // B
    std::vector<TokenId> prompt;

    std::size_t num_blocks() const { return (gen_len + block_len - 1) / block_len; }
    std::size_t total_len() const { return prompt.size() + gen_len; }
};

// Prompt tokens are fixed for the whole run; response tokens start fully
// masked and unmask monotonically. masked[j] is true iff response[j] is the
// mask token.
struct SequenceState {
    std::vector<TokenId> prompt;
    std::vector<TokenId> response;
    std::vector<std::uint8_t> masked;
    std::size_t step = 0;          // current k
    std::size_t block_cursor = 0;  // first block that still has masked tokens

    static SequenceState initial(const GenConfig& gen, TokenId mask_token_id) {
        SequenceState s;
        s.prompt = gen.prompt;
        s.response.assign(gen.gen_len, mask_token_id);
        s.masked.assign(gen.gen_len, 1);
        s.step = gen.steps;
        s.block_cursor = 0;
        return s;
    }

    std::size_t prompt_len() const { return prompt.size(); }
    std::size_t response_len() const { return response.size(); }

    std::vector<TokenId> full_tokens() const {
        std::vector<TokenId> out(prompt);
        out.insert(out.end(), response.begin(), response.end());
        return out;
    }

    bool fully_unmasked() const {
        for (auto m : masked)
            if (m)
                return false;
        return true;
    }
};

// One decode/transition event. Events run in order k = K, K-1, ..., 1; entry
// e = K - k names the active block and how many tokens it commits.
struct ScheduleEntry {
    std::size_t block = 0;
    std::size_t commits = 0;
};

inline std::vector<ScheduleEntry> block_schedule(const GenConfig& gen) {
    const std::size_t nb = gen.num_blocks();
    if (gen.steps < nb)
        throw config_error("gen.steps must be >= number of blocks");
    std::vector<ScheduleEntry> sched;
    sched.reserve(gen.steps);
    const std::size_t steps_base = gen.steps / nb;
    const std::size_t steps_extra = gen.steps % nb;
    for (std::size_t b = 0; b < nb; b++) {
        const std::size_t block_steps = steps_base + (b < steps_extra ? 1 : 0);
        const std::size_t block_tokens =
            std::min(gen.block_len, gen.gen_len - b * gen.block_len);
        const std::size_t base = block_tokens / block_steps;
        const std::size_t extra = block_tokens % block_steps;
        for (std::size_t s = 0; s < block_steps; s++)
            sched.push_back({b, base + (s < extra ? 1 : 0)});
    }
    return sched;
}

}  // namespace dcache
