#include "procattn/lstm.hpp"

namespace procattn {

LstmCell LstmCell::init(int input_size, int hidden_size, std::mt19937_64& rng) {
    LstmCell cell;
    cell.input_size = input_size;
    cell.hidden_size = hidden_size;
    cell.w_input = Tensor::glorot({input_size, 4 * hidden_size}, input_size,
                                  4 * hidden_size, rng);
    cell.w_hidden = Tensor::glorot({hidden_size, 4 * hidden_size}, hidden_size,
                                   4 * hidden_size, rng);
    cell.bias = Tensor::zeros({4 * hidden_size}, true);
    // forget-gate bias at 1 keeps early training from flushing the cell state
    for (int j = hidden_size; j < 2 * hidden_size; ++j) cell.bias.values()[j] = 1.0;
    return cell;
}

std::vector<Tensor> LstmCell::params() const { return {w_input, w_hidden, bias}; }

Tensor LstmCell::run(Tape& tape, const Tensor& inputs, const Tensor& mask) const {
    if (inputs.ndim() != 3 || inputs.dim(2) != input_size) {
        throw NumericError("lstm: inputs " + shape_to_string(inputs.shape()) +
                           " do not match input_size " + std::to_string(input_size));
    }
    if (mask.ndim() != 2 || mask.dim(0) != inputs.dim(0) || mask.dim(1) != inputs.dim(1)) {
        throw NumericError("lstm: mask " + shape_to_string(mask.shape()) +
                           " does not match inputs " + shape_to_string(inputs.shape()));
    }
    const int B = inputs.dim(0);
    const int L = inputs.dim(1);
    const int H = hidden_size;

    // mask complement is constant data, built outside the tape
    std::vector<double> inv(mask.values().size());
    for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 - mask.values()[i];
    Tensor inv_mask = Tensor::from_data(mask.shape(), std::move(inv));

    Tensor h = Tensor::zeros({B, H});
    Tensor c = Tensor::zeros({B, H});
    std::vector<Tensor> outputs;
    outputs.reserve(static_cast<std::size_t>(L));

    for (int t = 0; t < L; ++t) {
        Tensor x_t = tape.slice_time(inputs, t);                       // [B, I]
        Tensor m_t = tape.reshape(tape.slice_time(mask, t), {B, 1});   // [B, 1]
        Tensor u_t = tape.reshape(tape.slice_time(inv_mask, t), {B, 1});

        Tensor gates = tape.add(
            tape.add(tape.matmul(x_t, w_input), tape.matmul(h, w_hidden)), bias);
        Tensor gi = tape.sigmoid(tape.slice_last_axis(gates, 0, H));
        Tensor gf = tape.sigmoid(tape.slice_last_axis(gates, H, H));
        Tensor gg = tape.tanh(tape.slice_last_axis(gates, 2 * H, H));
        Tensor go = tape.sigmoid(tape.slice_last_axis(gates, 3 * H, H));

        Tensor c_new = tape.add(tape.mul(gf, c), tape.mul(gi, gg));
        Tensor h_new = tape.mul(go, tape.tanh(c_new));

        c = tape.add(tape.mul(m_t, c_new), tape.mul(u_t, c));
        h = tape.add(tape.mul(m_t, h_new), tape.mul(u_t, h));
        outputs.push_back(tape.mul(m_t, h_new));
    }
    return tape.stack_time(outputs);  // [B, L, H]
}

BiLstm BiLstm::init(int input_size, int hidden_size, std::mt19937_64& rng) {
    BiLstm net;
    net.forward = LstmCell::init(input_size, hidden_size, rng);
    net.backward = LstmCell::init(input_size, hidden_size, rng);
    return net;
}

std::vector<Tensor> BiLstm::params() const {
    std::vector<Tensor> out = forward.params();
    for (const Tensor& p : backward.params()) out.push_back(p);
    return out;
}

Tensor BiLstm::run(Tape& tape, const Tensor& inputs, const Tensor& mask) const {
    Tensor fwd_out = forward.run(tape, inputs, mask);
    Tensor rev_in = tape.reverse_time(inputs);
    Tensor rev_mask = tape.reverse_time(mask);
    Tensor bwd_out = tape.reverse_time(backward.run(tape, rev_in, rev_mask));
    return tape.concat_last_axis({fwd_out, bwd_out});
}

}  // namespace procattn
