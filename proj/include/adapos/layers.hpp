#pragma once

#include <span>
#include <string>
#include <vector>

#include "adapos/rng.hpp"
#include "adapos/tensor.hpp"

namespace adapos {

// Layer structs hold pointers into a ParamSet (std::map nodes are stable), so
// a model is one ParamSet plus a topology of these views. The *_init helpers
// register parameters under `prefix` and initialize them: uniform
// (-1/sqrt(fan_in), +1/sqrt(fan_in)) for dense/conv weights, zeros for
// biases, normal(0, 0.02) for embedding rows.

struct DenseLayer {
    Tensor* w = nullptr;  // [d_in x d_out]
    Tensor* b = nullptr;  // [d_out]
    int d_in = 0;
    int d_out = 0;
};

DenseLayer dense_init(ParamSet& ps, const std::string& prefix, int d_in, int d_out, Rng& rng);

// x may be [d_in] or [N x d_in].
Tensor dense_forward(Tape& tape, const DenseLayer& layer, const Tensor& x);

// Two width-3 same-padded convolutions with a skip path:
// out = relu(conv2(relu(conv1(x))) + skip(x)). The skip is the identity when
// channel counts match and a 1x1 projection otherwise.
struct ResNet1DBlock {
    Tensor* w1 = nullptr;
    Tensor* b1 = nullptr;
    Tensor* w2 = nullptr;
    Tensor* b2 = nullptr;
    Tensor* wproj = nullptr;  // null for identity skip
    int c_in = 0;
    int c_out = 0;
};

ResNet1DBlock resnet_block_init(ParamSet& ps, const std::string& prefix, int c_in, int c_out, Rng& rng);
Tensor resnet_block_forward(Tape& tape, const ResNet1DBlock& block, const Tensor& x);

struct MultiHeadAttention {
    Tensor* wq = nullptr;
    Tensor* wk = nullptr;
    Tensor* wv = nullptr;
    Tensor* wo = nullptr;
    int heads = 0;
    int d = 0;
};

MultiHeadAttention mha_init(ParamSet& ps, const std::string& prefix, int d, int heads, Rng& rng);

// Per-head attention weight matrices [N x N], captured on request by tests.
struct AttnDebug {
    std::vector<Tensor> head_weights;
};

// Scaled dot-product self-attention over a set of N embeddings, scale
// 1/sqrt(d/heads). Defined for N = 1 (the single attention weight is 1).
Tensor multi_head_attention(Tape& tape, const MultiHeadAttention& mha, const Tensor& x,
                            AttnDebug* debug = nullptr);

// Post-norm transformer encoder layer:
// y = LN(x + MHA(x)); out = LN(y + W2 relu(W1 y)).
struct EncoderLayer {
    MultiHeadAttention mha;
    DenseLayer ff1;
    DenseLayer ff2;
    Tensor* ln1_gain = nullptr;
    Tensor* ln1_off = nullptr;
    Tensor* ln2_gain = nullptr;
    Tensor* ln2_off = nullptr;
    int d = 0;
    int d_ff = 0;
};

EncoderLayer encoder_layer_init(ParamSet& ps, const std::string& prefix, int d, int heads, int d_ff,
                                Rng& rng);
Tensor encoder_layer_forward(Tape& tape, const EncoderLayer& layer, const Tensor& x);

struct EmbeddingTable {
    Tensor* rows = nullptr;  // [a_max x d]
    int a_max = 0;
    int d = 0;
};

EmbeddingTable embedding_init(ParamSet& ps, const std::string& prefix, int a_max, int d, Rng& rng);

// Rows for the given antenna ids, in order. Ids must be distinct and in
// range; gradients accumulate into the looked-up rows only.
Tensor embedding_lookup(Tape& tape, const EmbeddingTable& table, std::span<const int> ids);

}  // namespace adapos
