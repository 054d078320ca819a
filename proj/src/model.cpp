#include "procattn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "procattn/common.hpp"

namespace procattn {

namespace {

using nlohmann::json;

Tensor elapsed_tensor(const EncodedDataset& batch) {
    const int rows = static_cast<int>(batch.num_prefixes());
    return Tensor::from_data({rows, batch.pad_length, 1}, batch.elapsed, false);
}

Tensor mask_tensor(const EncodedDataset& batch) {
    const int rows = static_cast<int>(batch.num_prefixes());
    return Tensor::from_data({rows, batch.pad_length}, batch.mask, false);
}

void append_bilstm_params(const std::string& prefix, const BiLstm& lstm,
                          std::vector<std::pair<std::string, Tensor>>& out) {
    out.emplace_back(prefix + ".forward.w_input", lstm.forward.w_input);
    out.emplace_back(prefix + ".forward.w_hidden", lstm.forward.w_hidden);
    out.emplace_back(prefix + ".forward.bias", lstm.forward.bias);
    out.emplace_back(prefix + ".backward.w_input", lstm.backward.w_input);
    out.emplace_back(prefix + ".backward.w_hidden", lstm.backward.w_hidden);
    out.emplace_back(prefix + ".backward.bias", lstm.backward.bias);
}

void append_dense_params(const std::string& prefix, const Dense& dense,
                         std::vector<std::pair<std::string, Tensor>>& out) {
    out.emplace_back(prefix + ".w", dense.w);
    out.emplace_back(prefix + ".b", dense.b);
}

void validate_config(const ModelConfig& config) {
    if (config.hidden_size < 1) {
        throw ConfigError("hidden_size must be at least 1");
    }
    if (config.activity_embedding_dim < 0 || config.resource_embedding_dim < 0) {
        throw ConfigError("embedding dimensions must be non-negative");
    }
}

int resolve_dim(int configured, int vocab_size) {
    return configured > 0 ? configured : vocab_size;
}

}  // namespace

Architecture architecture_from_string(const std::string& name) {
    if (name == "shared") return Architecture::Shared;
    if (name == "specialised" || name == "specialized") return Architecture::Specialised;
    throw ConfigError("unknown architecture '" + name +
                      "' (expected 'shared' or 'specialised')");
}

std::string to_string(Architecture architecture) {
    return architecture == Architecture::Shared ? "shared" : "specialised";
}

Dense Dense::init(int in, int out, std::mt19937_64& rng) {
    Dense d;
    d.w = Tensor::glorot({in, out}, in, out, rng);
    d.b = Tensor::zeros({out}, true);
    return d;
}

Tensor Dense::run(Tape& tape, const Tensor& x) const {
    return tape.add(tape.matmul(x, w), b);
}

std::vector<Tensor> Dense::params() const { return {w, b}; }

// ---------------------------------------------------------------------------
// Shared attention
// ---------------------------------------------------------------------------

SharedModel SharedModel::init(const ModelConfig& config, int activity_vocab_size,
                              int resource_vocab_size, std::mt19937_64& rng) {
    validate_config(config);
    SharedModel m;
    m.config = config;
    m.config.activity_embedding_dim =
        resolve_dim(config.activity_embedding_dim, activity_vocab_size);
    m.config.resource_embedding_dim =
        resolve_dim(config.resource_embedding_dim, resource_vocab_size);
    m.num_classes = activity_vocab_size - kFirstRealIndex;
    if (m.num_classes < 1) {
        throw DataError("activity vocabulary has no predictable classes");
    }
    const int da = m.config.activity_embedding_dim;
    const int dr = m.config.resource_embedding_dim;
    const int f = da + dr + 1;
    const int h2 = 2 * config.hidden_size;
    m.emb_activity = Tensor::glorot({activity_vocab_size, da}, activity_vocab_size, da, rng);
    m.emb_resource = Tensor::glorot({resource_vocab_size, dr}, resource_vocab_size, dr, rng);
    m.lstm_alpha = BiLstm::init(f, config.hidden_size, rng);
    m.lstm_beta = BiLstm::init(f, config.hidden_size, rng);
    m.head_alpha = Dense::init(h2, 1, rng);
    m.head_beta = Dense::init(h2, f, rng);
    m.head_out = Dense::init(f, m.num_classes, rng);
    return m;
}

int SharedModel::feature_width() const {
    return config.activity_embedding_dim + config.resource_embedding_dim + 1;
}

std::vector<Tensor> SharedModel::params() const {
    std::vector<Tensor> out{emb_activity, emb_resource};
    for (const auto& t : lstm_alpha.params()) out.push_back(t);
    for (const auto& t : lstm_beta.params()) out.push_back(t);
    for (const auto& t : head_alpha.params()) out.push_back(t);
    for (const auto& t : head_beta.params()) out.push_back(t);
    for (const auto& t : head_out.params()) out.push_back(t);
    return out;
}

ForwardCapture SharedModel::forward(Tape& tape, const EncodedDataset& batch) const {
    const int rows = static_cast<int>(batch.num_prefixes());
    if (rows == 0) throw DataError("forward pass over an empty batch");
    const int len = batch.pad_length;

    Tensor mask = mask_tensor(batch);
    Tensor v_act = tape.embedding_lookup(emb_activity, batch.activity, {rows, len});
    Tensor v_res = tape.embedding_lookup(emb_resource, batch.resource, {rows, len});
    Tensor v_time = elapsed_tensor(batch);
    Tensor features = tape.concat_last_axis({v_act, v_res, v_time});  // [B,L,F]

    // Event attention: scalar score per timestep, masked softmax over time.
    Tensor h_alpha = lstm_alpha.run(tape, features, mask);
    Tensor scores = tape.reshape(head_alpha.run(tape, h_alpha), {rows, len});
    Tensor alpha = tape.softmax_masked(scores, mask);

    // Attribute attention: one weight per feature column, in (-1, 1).
    Tensor h_beta = lstm_beta.run(tape, features, mask);
    Tensor beta = tape.tanh(head_beta.run(tape, h_beta));  // [B,L,F]

    Tensor alpha3 = tape.reshape(alpha, {rows, len, 1});
    Tensor weighted = tape.mul(tape.mul(alpha3, beta), features);
    Tensor context = tape.sum_over_axis(weighted, 1);  // [B,F]

    ForwardCapture cap;
    cap.architecture = Architecture::Shared;
    cap.logits = head_out.run(tape, context);
    cap.prediction = tape.softmax(cap.logits);
    cap.alpha = alpha;
    cap.mask = mask;
    cap.beta = beta;
    cap.context = context;
    return cap;
}

// ---------------------------------------------------------------------------
// Specialised attention
// ---------------------------------------------------------------------------

SpecialisedModel SpecialisedModel::init(const ModelConfig& config, int activity_vocab_size,
                                        int resource_vocab_size, std::mt19937_64& rng) {
    validate_config(config);
    SpecialisedModel m;
    m.config = config;
    // One-hot streams have no embedding to size; record the widths used.
    m.config.activity_embedding_dim = activity_vocab_size;
    m.config.resource_embedding_dim = resource_vocab_size;
    m.num_classes = activity_vocab_size - kFirstRealIndex;
    if (m.num_classes < 1) {
        throw DataError("activity vocabulary has no predictable classes");
    }
    m.activity_width = activity_vocab_size;
    m.resource_width = resource_vocab_size;
    const int h = config.hidden_size;
    const int h2 = 2 * h;
    const int f = m.activity_width + m.resource_width + 1;
    m.lstm_beta_a = BiLstm::init(m.activity_width, h, rng);
    m.head_beta_a = Dense::init(h2, m.activity_width, rng);
    m.lstm_beta_r = BiLstm::init(m.resource_width, h, rng);
    m.head_beta_r = Dense::init(h2, m.resource_width, rng);
    m.lstm_beta_t = BiLstm::init(1, h, rng);
    m.head_beta_t = Dense::init(h2, 1, rng);
    m.lstm_alpha = BiLstm::init(f, h, rng);
    m.head_alpha = Dense::init(h2, 1, rng);
    m.head_out = Dense::init(f, m.num_classes, rng);
    return m;
}

int SpecialisedModel::feature_width() const {
    return activity_width + resource_width + 1;
}

std::vector<Tensor> SpecialisedModel::params() const {
    std::vector<Tensor> out;
    for (const auto& t : lstm_beta_a.params()) out.push_back(t);
    for (const auto& t : head_beta_a.params()) out.push_back(t);
    for (const auto& t : lstm_beta_r.params()) out.push_back(t);
    for (const auto& t : head_beta_r.params()) out.push_back(t);
    for (const auto& t : lstm_beta_t.params()) out.push_back(t);
    for (const auto& t : head_beta_t.params()) out.push_back(t);
    for (const auto& t : lstm_alpha.params()) out.push_back(t);
    for (const auto& t : head_alpha.params()) out.push_back(t);
    for (const auto& t : head_out.params()) out.push_back(t);
    return out;
}

ForwardCapture SpecialisedModel::forward(Tape& tape, const EncodedDataset& batch) const {
    const int rows = static_cast<int>(batch.num_prefixes());
    if (rows == 0) throw DataError("forward pass over an empty batch");
    const int len = batch.pad_length;

    Tensor mask = mask_tensor(batch);
    Tensor v_act = one_hot(batch.activity, rows, len, activity_width, &batch.mask);
    Tensor v_res = one_hot(batch.resource, rows, len, resource_width, &batch.mask);
    Tensor v_time = elapsed_tensor(batch);

    // Per-stream attribute attention; the influence vector scales each
    // observed value by its weight, so untaken one-hot cells stay zero.
    Tensor beta_a = tape.tanh(head_beta_a.run(tape, lstm_beta_a.run(tape, v_act, mask)));
    Tensor beta_r = tape.tanh(head_beta_r.run(tape, lstm_beta_r.run(tape, v_res, mask)));
    Tensor beta_t = tape.tanh(head_beta_t.run(tape, lstm_beta_t.run(tape, v_time, mask)));
    Tensor inf_a = tape.mul(v_act, beta_a);
    Tensor inf_r = tape.mul(v_res, beta_r);
    Tensor inf_t = tape.mul(v_time, beta_t);
    Tensor influence = tape.concat_last_axis({inf_a, inf_r, inf_t});  // [B,L,F]

    // Event attention runs over the influence stream.
    Tensor h_alpha = lstm_alpha.run(tape, influence, mask);
    Tensor scores = tape.reshape(head_alpha.run(tape, h_alpha), {rows, len});
    Tensor alpha = tape.softmax_masked(scores, mask);

    Tensor alpha3 = tape.reshape(alpha, {rows, len, 1});
    Tensor context = tape.sum_over_axis(tape.mul(alpha3, influence), 1);

    ForwardCapture cap;
    cap.architecture = Architecture::Specialised;
    cap.logits = head_out.run(tape, context);
    cap.prediction = tape.softmax(cap.logits);
    cap.alpha = alpha;
    cap.mask = mask;
    cap.context = context;
    cap.beta_a = beta_a;
    cap.beta_r = beta_r;
    cap.beta_t = beta_t;
    cap.inf_a = inf_a;
    cap.inf_r = inf_r;
    cap.inf_t = inf_t;
    return cap;
}

// ---------------------------------------------------------------------------
// Tagged union
// ---------------------------------------------------------------------------

Model Model::init(const ModelConfig& config, int activity_vocab_size,
                  int resource_vocab_size) {
    std::mt19937_64 rng(config.seed);
    Model m;
    m.architecture = config.architecture;
    if (config.architecture == Architecture::Shared) {
        m.shared = SharedModel::init(config, activity_vocab_size, resource_vocab_size, rng);
    } else {
        m.specialised =
            SpecialisedModel::init(config, activity_vocab_size, resource_vocab_size, rng);
    }
    return m;
}

std::vector<Tensor> Model::params() const {
    return architecture == Architecture::Shared ? shared->params() : specialised->params();
}

ForwardCapture Model::forward(Tape& tape, const EncodedDataset& batch) const {
    return architecture == Architecture::Shared ? shared->forward(tape, batch)
                                                : specialised->forward(tape, batch);
}

std::vector<std::pair<std::string, Tensor>> Model::named_params() const {
    std::vector<std::pair<std::string, Tensor>> out;
    if (architecture == Architecture::Shared) {
        const SharedModel& m = *shared;
        out.emplace_back("embedding.activity", m.emb_activity);
        out.emplace_back("embedding.resource", m.emb_resource);
        append_bilstm_params("lstm_alpha", m.lstm_alpha, out);
        append_bilstm_params("lstm_beta", m.lstm_beta, out);
        append_dense_params("head_alpha", m.head_alpha, out);
        append_dense_params("head_beta", m.head_beta, out);
        append_dense_params("head_out", m.head_out, out);
    } else {
        const SpecialisedModel& m = *specialised;
        append_bilstm_params("lstm_beta_activity", m.lstm_beta_a, out);
        append_dense_params("head_beta_activity", m.head_beta_a, out);
        append_bilstm_params("lstm_beta_resource", m.lstm_beta_r, out);
        append_dense_params("head_beta_resource", m.head_beta_r, out);
        append_bilstm_params("lstm_beta_time", m.lstm_beta_t, out);
        append_dense_params("head_beta_time", m.head_beta_t, out);
        append_bilstm_params("lstm_alpha", m.lstm_alpha, out);
        append_dense_params("head_alpha", m.head_alpha, out);
        append_dense_params("head_out", m.head_out, out);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Artifact serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'P', 'R', 'O', 'C', 'A', 'T', 'T', 'N'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32_le(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw DataError(std::string("model file truncated while reading ") + what);
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64_le(std::istream& in, const char* what) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
        throw DataError(std::string("model file truncated while reading ") + what);
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f64_block_le(std::ostream& out, const std::vector<double>& values) {
    for (double d : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        write_u64_le(out, bits);
    }
}

void read_f64_block_le(std::istream& in, std::vector<double>& values,
                       const std::string& name) {
    for (double& d : values) {
        unsigned char b[8];
        if (!in.read(reinterpret_cast<char*>(b), 8)) {
            throw DataError("model file truncated in parameter block '" + name + "'");
        }
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        std::memcpy(&d, &bits, 8);
    }
}

}  // namespace

std::string ModelArtifact::class_label(int class_index) const {
    return activity_vocab.label_of(class_index + kFirstRealIndex);
}

EncodedDataset ModelArtifact::encode(const std::vector<PrefixTrace>& prefixes) const {
    return encode_dataset(prefixes, activity_vocab, resource_vocab, pad_length, scaler, unit);
}

void ModelArtifact::save(const std::string& path) const {
    json header;
    header["architecture"] = to_string(config.architecture);
    header["hidden_size"] = config.hidden_size;
    header["activity_embedding_dim"] = config.activity_embedding_dim;
    header["resource_embedding_dim"] = config.resource_embedding_dim;
    header["seed"] = config.seed;
    header["num_classes"] = num_classes();
    header["pad_length"] = pad_length;
    header["time_unit"] = to_string(unit);
    header["scaler"] = {{"kind", scaler.kind}, {"scale", scaler.scale}};
    header["activity_vocab"] = activity_vocab.labels();
    header["resource_vocab"] = resource_vocab.labels();
    header["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
    json params = json::array();
    auto named = model.named_params();
    for (const auto& [name, tensor] : named) {
        params.push_back({{"name", name}, {"shape", tensor.shape()}});
    }
    header["params"] = params;
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write model file: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_u32_le(out, kFormatVersion);
    write_u64_le(out, header_text.size());
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& [name, tensor] : named) {
        write_f64_block_le(out, tensor.values());
    }
    out.flush();
    if (!out) throw DataError("failed writing model file: " + path);
}

ModelArtifact ModelArtifact::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model file: " + path);

    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw DataError("not a model file (bad magic): " + path);
    }
    const std::uint32_t version = read_u32_le(in, "format version");
    if (version != kFormatVersion) {
        throw DataError("unsupported model format version " + std::to_string(version));
    }
    const std::uint64_t header_len = read_u64_le(in, "header length");
    if (header_len == 0 || header_len > (1ull << 30)) {
        throw DataError("model header length out of range");
    }
    std::string header_text(header_len, '\0');
    if (!in.read(header_text.data(), static_cast<std::streamsize>(header_len))) {
        throw DataError("model file truncated while reading header");
    }
    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw DataError(std::string("model header is not valid JSON: ") + e.what());
    }

    ModelArtifact artifact;
    try {
        artifact.config.architecture =
            architecture_from_string(header.at("architecture").get<std::string>());
        artifact.config.hidden_size = header.at("hidden_size").get<int>();
        artifact.config.activity_embedding_dim =
            header.at("activity_embedding_dim").get<int>();
        artifact.config.resource_embedding_dim =
            header.at("resource_embedding_dim").get<int>();
        artifact.config.seed = header.at("seed").get<std::uint64_t>();
        artifact.pad_length = header.at("pad_length").get<int>();
        artifact.unit = time_unit_from_string(header.at("time_unit").get<std::string>());
        artifact.scaler.kind = header.at("scaler").at("kind").get<std::string>();
        artifact.scaler.scale = header.at("scaler").at("scale").get<double>();
        artifact.activity_vocab = Vocabulary(
            "activity", header.at("activity_vocab").get<std::vector<std::string>>());
        artifact.resource_vocab = Vocabulary(
            "resource", header.at("resource_vocab").get<std::vector<std::string>>());
    } catch (const json::exception& e) {
        throw DataError(std::string("model header is missing fields: ") + e.what());
    }

    artifact.model = Model::init(artifact.config, artifact.activity_vocab.size(),
                                 artifact.resource_vocab.size());

    auto named = artifact.model.named_params();
    const auto& declared = header.at("params");
    if (!declared.is_array() || declared.size() != named.size()) {
        throw DataError("model header declares " + std::to_string(declared.size()) +
                        " parameter blocks, expected " + std::to_string(named.size()));
    }
    for (std::size_t i = 0; i < named.size(); ++i) {
        auto& [name, tensor] = named[i];
        const std::string declared_name = declared[i].at("name").get<std::string>();
        const Shape declared_shape = declared[i].at("shape").get<Shape>();
        if (declared_name != name || declared_shape != tensor.shape()) {
            throw DataError("model parameter mismatch at block " + std::to_string(i) +
                            ": file has '" + declared_name + "' " +
                            shape_to_string(declared_shape) + ", expected '" + name +
                            "' " + shape_to_string(tensor.shape()));
        }
        read_f64_block_le(in, tensor.values(), name);
    }
    char extra;
    if (in.read(&extra, 1)) {
        throw DataError("model file has trailing bytes after the last parameter block");
    }
    return artifact;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace {

int argmax_lowest(const double* row, int n) {
    int best = 0;
    for (int j = 1; j < n; ++j) {
        if (row[j] > row[best]) best = j;
    }
    return best;
}

double dataset_accuracy(const Model& model, const EncodedDataset& data,
                        std::size_t chunk_size) {
    const std::size_t n = data.num_prefixes();
    if (n == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t from = 0; from < n; from += chunk_size) {
        const std::size_t to = std::min(n, from + chunk_size);
        std::vector<std::size_t> rows(to - from);
        for (std::size_t i = from; i < to; ++i) rows[i - from] = i;
        EncodedDataset batch = data.subset(rows);
        ForwardCapture cap = run_forward(model, batch);
        const int classes = cap.prediction.dim(1);
        const auto& probs = cap.prediction.values();
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const int target = batch.targets[r];
            if (target < kFirstRealIndex) continue;  // unknowable: never correct
            const int predicted = argmax_lowest(&probs[r * classes], classes);
            if (predicted == target - kFirstRealIndex) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace

ForwardCapture run_forward(const Model& model, const EncodedDataset& batch) {
    Tape tape(false);
    return model.forward(tape, batch);
}

TrainResult train_model(const EncodedDataset& train, const EncodedDataset& validation,
                        const ModelConfig& model_config, const TrainConfig& train_config) {
    if (train_config.batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (train_config.epochs < 0) throw ConfigError("epochs must be non-negative");
    if (!(train_config.lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (validation.num_prefixes() > 0 && validation.pad_length != train.pad_length) {
        throw DataError("validation prefix length does not match the training encoding");
    }

    TrainResult result;

    // Rows whose target never occurred in the vocabulary cannot be learned;
    // they are dropped from the optimisation and reported.
    std::vector<std::size_t> usable;
    usable.reserve(train.num_prefixes());
    for (std::size_t i = 0; i < train.num_prefixes(); ++i) {
        if (train.targets[i] >= kFirstRealIndex) usable.push_back(i);
    }
    result.skipped_unknown_targets = train.num_prefixes() - usable.size();
    if (usable.empty()) {
        throw DataError("no trainable prefixes: every target is outside the vocabulary");
    }
    EncodedDataset train_kept = train.subset(usable);

    Model model = Model::init(model_config, train.activity_vocab.size(),
                              train.resource_vocab.size());
    std::vector<Tensor> params = model.params();
    AdamConfig adam_config;
    adam_config.lr = train_config.lr;
    Adam optimiser(params, adam_config);

    const std::size_t n = train_kept.num_prefixes();
    const std::size_t batch_size = static_cast<std::size_t>(train_config.batch_size);

    double best_val = -1.0;
    std::vector<std::vector<double>> best_values;
    int epochs_since_best = 0;

    for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
        // Fresh deterministic order each epoch, derived from the model seed.
        std::vector<std::size_t> order = shuffled_indices(
            n, model_config.seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(epoch));

        double loss_sum = 0.0;
        int batch_number = 0;
        for (std::size_t from = 0; from < n; from += batch_size) {
            ++batch_number;
            const std::size_t to = std::min(n, from + batch_size);
            std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(from),
                                          order.begin() + static_cast<std::ptrdiff_t>(to));
            EncodedDataset batch = train_kept.subset(rows);
            std::vector<int> class_targets(batch.targets.size());
            for (std::size_t i = 0; i < batch.targets.size(); ++i) {
                class_targets[i] = batch.targets[i] - kFirstRealIndex;
            }

            Tape tape(true);
            ForwardCapture cap = model.forward(tape, batch);
            Tensor loss = tape.cross_entropy(cap.logits, class_targets,
                                             Tape::CrossEntropyInput::Logits);
            const double loss_value = loss.values()[0];
            if (!std::isfinite(loss_value)) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batch_number) +
                                   ": loss is not finite");
            }
            optimiser.zero_grad();
            tape.backward(loss);
            optimiser.step();
            loss_sum += loss_value * static_cast<double>(rows.size());
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(n);
        stats.val_accuracy = dataset_accuracy(model, validation, 256);
        result.log.push_back(stats);

        if (stats.val_accuracy > best_val) {
            best_val = stats.val_accuracy;
            result.best_epoch = epoch;
            best_values.clear();
            best_values.reserve(params.size());
            for (const auto& p : params) best_values.push_back(p.values());
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
        }
        if (train_config.target_accuracy >= 0.0 &&
            best_val >= train_config.target_accuracy) {
            break;
        }
        if (train_config.patience > 0 && epochs_since_best >= train_config.patience) {
            break;
        }
    }

    if (!best_values.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            params[i].values() = best_values[i];
        }
        result.best_val_accuracy = best_val;
    }

    ModelArtifact artifact;
    artifact.config = model.architecture == Architecture::Shared
                          ? model.shared->config
                          : model.specialised->config;
    artifact.activity_vocab = train.activity_vocab;
    artifact.resource_vocab = train.resource_vocab;
    artifact.scaler = train.scaler;
    artifact.unit = train.unit;
    artifact.pad_length = train.pad_length;
    artifact.model = std::move(model);
    result.artifact = std::move(artifact);
    return result;
}

std::vector<Prediction> predict(const ModelArtifact& artifact, const EncodedDataset& data,
                                std::size_t chunk_size, std::vector<ForwardCapture>* captures) {
    const std::size_t n = data.num_prefixes();
    std::vector<Prediction> out;
    out.reserve(n);
    if (captures) captures->clear();
    const int classes = artifact.num_classes();
    for (std::size_t from = 0; from < n; from += chunk_size) {
        const std::size_t to = std::min(n, from + chunk_size);
        std::vector<std::size_t> rows(to - from);
        for (std::size_t i = from; i < to; ++i) rows[i - from] = i;
        EncodedDataset batch = data.subset(rows);
        ForwardCapture cap = run_forward(artifact.model, batch);
        const auto& probs = cap.prediction.values();
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const double* row = &probs[r * static_cast<std::size_t>(classes)];
            Prediction p;
            p.class_index = argmax_lowest(row, classes);
            p.label = artifact.class_label(p.class_index);
            p.probability = row[p.class_index];
            p.distribution.assign(row, row + classes);
            for (double v : p.distribution) {
                if (!std::isfinite(v)) {
                    throw NumericError("model produced a non-finite probability for prefix '" +
                                       batch.prefix_ids[r] + "'");
                }
            }
            const int target = batch.targets[r];
            if (target >= kFirstRealIndex) {
                const int actual = target - kFirstRealIndex;
                // Rank under descending probability; equal probabilities are
                // ordered by class index, matching the argmax tie rule.
                int rank = 1;
                for (int j = 0; j < classes; ++j) {
                    if (row[j] > row[actual] || (row[j] == row[actual] && j < actual)) {
                        ++rank;
                    }
                }
                p.rank_of_actual = rank;
                p.correct = p.class_index == actual;
            } else {
                p.rank_of_actual = classes + 1;
                p.correct = false;
            }
            out.push_back(std::move(p));
        }
        if (captures) captures->push_back(std::move(cap));
    }
    return out;
}

}  // namespace procattn
