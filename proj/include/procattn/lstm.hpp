// LSTM cell and bidirectional wrapper over padded batches.
//
// Sequences are left-padded; a 0/1 mask marks real positions. At a masked
// (pad) timestep the carried states keep their previous value and the
// emitted output is exactly zero, so downstream attention sums can treat
// pads as absent.

#ifndef PROCATTN_LSTM_HPP
#define PROCATTN_LSTM_HPP

#include <random>
#include <vector>

#include "procattn/tensor.hpp"

namespace procattn {

// Single-direction cell. Gate kernels are packed along the last axis in the
// order input, forget, cell candidate, output.
struct LstmCell {
    Tensor w_input;   // [input_size, 4*hidden]
    Tensor w_hidden;  // [hidden, 4*hidden]
    Tensor bias;      // [4*hidden], forget section starts at 1.0
    int input_size = 0;
    int hidden_size = 0;

    static LstmCell init(int input_size, int hidden_size, std::mt19937_64& rng);

    std::vector<Tensor> params() const;

    // inputs: [B, L, input_size], mask: [B, L] -> outputs [B, L, hidden]
    Tensor run(Tape& tape, const Tensor& inputs, const Tensor& mask) const;
};

// Forward and reversed cells; outputs concatenated on the feature axis.
struct BiLstm {
    LstmCell forward;
    LstmCell backward;

    static BiLstm init(int input_size, int hidden_size, std::mt19937_64& rng);

    std::vector<Tensor> params() const;

    // inputs: [B, L, input_size], mask: [B, L] -> [B, L, 2*hidden]
    Tensor run(Tape& tape, const Tensor& inputs, const Tensor& mask) const;
};

}  // namespace procattn

#endif
