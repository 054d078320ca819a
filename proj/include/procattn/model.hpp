// The two attention architectures, their training loop, and the
// self-contained artifact format.
//
// Shared attention: one embedded+concatenated feature tensor feeds two
// BiLSTMs; a softmax head over timesteps yields event attention alpha, a
// tanh head yields attribute attention beta; context = sum_l a (.) b (.) v.
//
// Specialised attention: each one-hot feature stream gets its own BiLSTM and
// tanh head; influence vectors v_inf = v (.) beta are concatenated, a single
// BiLSTM + softmax head yields alpha; context = sum_l a (.) v_inf.

#ifndef PROCATTN_MODEL_HPP
#define PROCATTN_MODEL_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "procattn/encode.hpp"
#include "procattn/lstm.hpp"
#include "procattn/tensor.hpp"

namespace procattn {

enum class Architecture { Shared, Specialised };

Architecture architecture_from_string(const std::string& name);
std::string to_string(Architecture architecture);

struct Dense {
    Tensor w;  // [in, out]
    Tensor b;  // [out]
    static Dense init(int in, int out, std::mt19937_64& rng);
    Tensor run(Tape& tape, const Tensor& x) const;  // [..., in] -> [..., out]
    std::vector<Tensor> params() const;
};

struct ModelConfig {
    Architecture architecture = Architecture::Shared;
    int hidden_size = 50;
    // 0 = match the vocabulary size, which keeps the index-based weight
    // extraction exact; anything smaller flags the block-sum approximation.
    int activity_embedding_dim = 0;
    int resource_embedding_dim = 0;
    std::uint64_t seed = 1;
};

// Everything a forward pass produces, kept for interpretation. All tensors
// are batch-first; masked positions carry exactly zero alpha.
struct ForwardCapture {
    Architecture architecture = Architecture::Shared;
    Tensor logits;      // [B, classes]
    Tensor prediction;  // [B, classes], softmax of logits
    Tensor alpha;       // [B, L]
    Tensor mask;        // [B, L]
    Tensor context;     // [B, F]
    // shared only
    Tensor beta;  // [B, L, F]
    // specialised only
    Tensor beta_a, beta_r, beta_t;  // [B,L,|A|], [B,L,|R|], [B,L,1]
    Tensor inf_a, inf_r, inf_t;     // influence vectors, same shapes
};

struct SharedModel {
    ModelConfig config;
    int num_classes = 0;
    Tensor emb_activity;  // [|A|_vocab, d_a]
    Tensor emb_resource;  // [|R|_vocab, d_r]
    BiLstm lstm_alpha;
    BiLstm lstm_beta;
    Dense head_alpha;  // [2H -> 1]
    Dense head_beta;   // [2H -> F]
    Dense head_out;    // [F -> classes]

    static SharedModel init(const ModelConfig& config, int activity_vocab_size,
                            int resource_vocab_size, std::mt19937_64& rng);
    std::vector<Tensor> params() const;
    int feature_width() const;  // F = d_a + d_r + 1
    ForwardCapture forward(Tape& tape, const EncodedDataset& batch) const;
};

struct SpecialisedModel {
    ModelConfig config;
    int num_classes = 0;
    int activity_width = 0;  // one-hot widths = vocabulary sizes
    int resource_width = 0;
    BiLstm lstm_beta_a;
    BiLstm lstm_beta_r;
    BiLstm lstm_beta_t;
    BiLstm lstm_alpha;
    Dense head_beta_a;  // [2H -> |A|]
    Dense head_beta_r;  // [2H -> |R|]
    Dense head_beta_t;  // [2H -> 1]
    Dense head_alpha;   // [2H -> 1]
    Dense head_out;     // [F -> classes]

    static SpecialisedModel init(const ModelConfig& config, int activity_vocab_size,
                                 int resource_vocab_size, std::mt19937_64& rng);
    std::vector<Tensor> params() const;
    int feature_width() const;  // F = |A| + |R| + 1
    ForwardCapture forward(Tape& tape, const EncodedDataset& batch) const;
};

// Tagged union of the two architectures.
struct Model {
    Architecture architecture = Architecture::Shared;
    std::optional<SharedModel> shared;
    std::optional<SpecialisedModel> specialised;

    static Model init(const ModelConfig& config, int activity_vocab_size,
                      int resource_vocab_size);
    std::vector<Tensor> params() const;
    ForwardCapture forward(Tape& tape, const EncodedDataset& batch) const;
    // Stable names, fixed order: the serialization contract.
    std::vector<std::pair<std::string, Tensor>> named_params() const;
};

// Self-contained trained model: parameters + vocabularies + scaler + config.
struct ModelArtifact {
    ModelConfig config;
    Vocabulary activity_vocab;
    Vocabulary resource_vocab;
    TimeScaler scaler;
    TimeUnit unit = TimeUnit::Days;
    int pad_length = 0;
    Model model;

    int num_classes() const { return activity_vocab.size() - kFirstRealIndex; }
    std::string class_label(int class_index) const;

    void save(const std::string& path) const;
    static ModelArtifact load(const std::string& path);

    // Encodes raw prefixes against the stored vocabularies/scaler.
    EncodedDataset encode(const std::vector<PrefixTrace>& prefixes) const;
};

struct TrainConfig {
    int epochs = 50;
    int batch_size = 64;
    double lr = 0.001;
    int patience = 5;  // early stop when val accuracy stalls this many epochs
    // Stop as soon as validation accuracy reaches this value (<0 disables).
    double target_accuracy = -1.0;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    ModelArtifact artifact;
    std::vector<EpochStats> log;
    std::size_t skipped_unknown_targets = 0;  // train rows with <UNK> targets
    int best_epoch = -1;
    double best_val_accuracy = 0.0;
};

TrainResult train_model(const EncodedDataset& train, const EncodedDataset& validation,
                        const ModelConfig& model_config, const TrainConfig& train_config);

// Grad-free forward over one batch of encoded rows.
ForwardCapture run_forward(const Model& model, const EncodedDataset& batch);

struct Prediction {
    int class_index = -1;  // argmax, ties to the lowest index
    std::string label;
    double probability = 0.0;
    std::vector<double> distribution;
    int rank_of_actual = -1;  // 1-based; classes+1 when the target is unknowable
    bool correct = false;
};

std::vector<Prediction> predict(const ModelArtifact& artifact, const EncodedDataset& data,
                                std::size_t chunk_size = 256,
                                std::vector<ForwardCapture>* captures = nullptr);

}  // namespace procattn

#endif
