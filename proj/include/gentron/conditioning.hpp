#pragma once

#include <cctype>
#include <string>
#include <vector>

#include "gentron/tensor.hpp"

namespace gentron {

// Per-prompt conditioning bundle. is_null marks the learned null embedding
// used both for classifier-free dropout during training and for the
// unconditional branch at sampling time; the two must be the same object.
template <typename T>
struct TextConditionT {
    TensorT<T> tokens; // [L, d_text], L >= 1 always
    TensorT<T> pooled; // [d_text]
    bool is_null = false;
    std::string source;
};

enum class EncoderMode { single, dual_interleaved };

// Which text encoders feed the model and how blocks pick between them.
// In dual mode even blocks read encoder 0 and odd blocks encoder 1; pooled
// vectors of every encoder are summed into the time-embedding pathway
// regardless of parity.
struct EncoderSpec {
    EncoderMode mode = EncoderMode::single;
    std::vector<int> d_texts{64};
    int vocab = 512;
    int max_len = 8;

    int n_encoders() const { return mode == EncoderMode::single ? 1 : 2; }
    int d_text_for_block(int block_index) const {
        if (block_index < 0) throw ValueError("encoder spec: negative block index");
        return d_texts[mode == EncoderMode::single ? 0 : static_cast<size_t>(block_index % 2)];
    }
    void validate() const {
        const size_t want = mode == EncoderMode::single ? 1 : 2;
        if (d_texts.size() != want)
            throw ValueError("encoder spec: d_texts size must match encoder mode");
        for (int d : d_texts)
            if (d < 1) throw ValueError("encoder spec: d_text must be positive");
        if (vocab < 1 || max_len < 1) throw ValueError("encoder spec: vocab and max_len must be positive");
    }
};

inline std::vector<std::string> whitespace_tokenize(const std::string& prompt) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : prompt) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

// Deterministic stand-in for a pretrained text tower: whitespace tokens are
// hashed into a jointly-trained embedding table, a learned per-position row is
// added, and pooling is the token mean. The null condition is its own learned
// row rather than zeros, so gate-off degenerate cases stay distinguishable.
template <typename T>
struct ToyEncoderT {
    std::string name;
    int vocab = 0;
    int max_len = 0;
    TensorT<T> table;      // [vocab, d_text]
    TensorT<T> positions;  // [max_len, d_text]
    TensorT<T> null_token; // [1, d_text]

    int d_text() const { return table.dim(1); }

    TextConditionT<T> null_condition() const {
        TextConditionT<T> c;
        c.tokens = null_token;
        c.pooled = mean_axis0(null_token);
        c.is_null = true;
        c.source = name;
        return c;
    }

    TextConditionT<T> encode(const std::string& prompt) const {
        const auto words = whitespace_tokenize(prompt);
        if (words.empty()) return null_condition(); // empty prompt routes to the null object
        std::vector<int> tok_idx, pos_idx;
        tok_idx.reserve(words.size());
        pos_idx.reserve(words.size());
        for (size_t i = 0; i < words.size(); ++i) {
            tok_idx.push_back(static_cast<int>(fnv1a64(words[i].data(), words[i].size()) %
                                               static_cast<uint64_t>(vocab)));
            pos_idx.push_back(static_cast<int>(std::min(i, static_cast<size_t>(max_len - 1))));
        }
        TextConditionT<T> c;
        c.tokens = add(gather_rows(table, tok_idx), gather_rows(positions, pos_idx));
        c.pooled = mean_axis0(c.tokens);
        c.is_null = false;
        c.source = name;
        return c;
    }
};

// Classifier-free dropout: with probability p_text the condition collapses to
// the encoder's learned null object.
template <typename T>
TextConditionT<T> drop_condition(const TextConditionT<T>& c, double p_text, Rng& rng,
                                 const ToyEncoderT<T>& enc) {
    if (p_text < 0.0 || p_text > 1.0) throw ValueError("drop_condition: probability out of range");
    if (rng.uniform() < p_text) return enc.null_condition();
    return c;
}

// Parity routing between encoders; single mode ignores the index.
template <typename T>
const TextConditionT<T>& select_context(const EncoderSpec& spec,
                                        const std::vector<TextConditionT<T>>& conditions,
                                        int block_index) {
    if (block_index < 0) throw ValueError("select_context: negative block index");
    if (static_cast<int>(conditions.size()) != spec.n_encoders())
        throw ValueError("select_context: condition count does not match encoder spec");
    if (spec.mode == EncoderMode::single) return conditions[0];
    return conditions[static_cast<size_t>(block_index % 2)];
}

} // namespace gentron
