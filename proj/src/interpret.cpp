#include "procattn/interpret.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "procattn/common.hpp"

namespace procattn {

CategoryWeights shared_weights_at(double alpha, const double* beta, int activity_dim,
                                  int resource_dim, int j_a, int j_r) {
    CategoryWeights w;
    w.activity = alpha * beta[j_a];
    w.resource = alpha * beta[activity_dim + j_r];
    w.time = alpha * beta[activity_dim + resource_dim];
    return w;
}

CategoryWeights shared_block_sum_at(double alpha, const double* beta, int activity_dim,
                                    int resource_dim) {
    CategoryWeights w;
    double sum_a = 0.0, sum_r = 0.0;
    for (int i = 0; i < activity_dim; ++i) sum_a += beta[i];
    for (int i = 0; i < resource_dim; ++i) sum_r += beta[activity_dim + i];
    w.activity = alpha * sum_a;
    w.resource = alpha * sum_r;
    w.time = alpha * beta[activity_dim + resource_dim];
    return w;
}

namespace {

struct RowGeometry {
    int pad_length = 0;
    int length = 0;
    int first_slot = 0;  // pad_length - length
};

RowGeometry row_geometry(const EncodedDataset& batch, std::size_t row) {
    if (row >= batch.num_prefixes()) {
        throw NumericError("feature weights: row " + std::to_string(row) +
                           " out of range for a batch of " +
                           std::to_string(batch.num_prefixes()));
    }
    RowGeometry g;
    g.pad_length = batch.pad_length;
    g.length = batch.lengths[row];
    g.first_slot = g.pad_length - g.length;
    return g;
}

FeatureWeightRow base_row(const EncodedDataset& batch, std::size_t row,
                          const RowGeometry& g, int position, double alpha) {
    const std::size_t slot = row * static_cast<std::size_t>(g.pad_length) +
                             static_cast<std::size_t>(g.first_slot + position);
    FeatureWeightRow r;
    r.event_position = position;
    r.reverse_offset = position - g.length;
    r.activity_label = batch.activity_vocab.label_of(batch.activity[slot]);
    r.resource_label = batch.resource_vocab.label_of(batch.resource[slot]);
    r.alpha = alpha;
    return r;
}

}  // namespace

std::vector<FeatureWeightRow> shared_feature_weights(const ForwardCapture& capture,
                                                     const EncodedDataset& batch,
                                                     std::size_t row,
                                                     const EmbeddingBlocks& blocks,
                                                     bool* approximate) {
    if (capture.architecture != Architecture::Shared) {
        throw ConfigError("shared feature extraction applied to a specialised capture");
    }
    const RowGeometry g = row_geometry(batch, row);
    const int f = capture.beta.dim(2);
    if (blocks.activity_dim + blocks.resource_dim + 1 != f) {
        throw ConfigError("embedding block map does not span the captured feature width");
    }
    const bool exact = blocks.activity_dim == batch.activity_vocab.size() &&
                       blocks.resource_dim == batch.resource_vocab.size();
    if (approximate) *approximate = !exact;

    std::vector<FeatureWeightRow> rows;
    rows.reserve(static_cast<std::size_t>(g.length));
    for (int pos = 0; pos < g.length; ++pos) {
        const std::size_t slot = row * static_cast<std::size_t>(g.pad_length) +
                                 static_cast<std::size_t>(g.first_slot + pos);
        const double alpha = capture.alpha.values()[slot];
        const double* beta = &capture.beta.values()[slot * static_cast<std::size_t>(f)];
        FeatureWeightRow r = base_row(batch, row, g, pos, alpha);
        r.weights = exact ? shared_weights_at(alpha, beta, blocks.activity_dim,
                                              blocks.resource_dim, batch.activity[slot],
                                              batch.resource[slot])
                          : shared_block_sum_at(alpha, beta, blocks.activity_dim,
                                                blocks.resource_dim);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<FeatureWeightRow> specialised_feature_weights(const ForwardCapture& capture,
                                                          const EncodedDataset& batch,
                                                          std::size_t row) {
    if (capture.architecture != Architecture::Specialised) {
        throw ConfigError("specialised feature extraction applied to a shared capture");
    }
    const RowGeometry g = row_geometry(batch, row);
    const int va = capture.beta_a.dim(2);
    const int vr = capture.beta_r.dim(2);
    if (va != batch.activity_vocab.size() || vr != batch.resource_vocab.size()) {
        throw ConfigError("captured one-hot widths do not match the batch vocabularies");
    }

    std::vector<FeatureWeightRow> rows;
    rows.reserve(static_cast<std::size_t>(g.length));
    for (int pos = 0; pos < g.length; ++pos) {
        const std::size_t slot = row * static_cast<std::size_t>(g.pad_length) +
                                 static_cast<std::size_t>(g.first_slot + pos);
        const double alpha = capture.alpha.values()[slot];
        FeatureWeightRow r = base_row(batch, row, g, pos, alpha);
        // The one-hot input makes the observed label's cell the only one that
        // can reach the context vector, so its beta entry is the weight.
        r.weights.activity =
            alpha * capture.beta_a.values()[slot * static_cast<std::size_t>(va) +
                                            static_cast<std::size_t>(batch.activity[slot])];
        r.weights.resource =
            alpha * capture.beta_r.values()[slot * static_cast<std::size_t>(vr) +
                                            static_cast<std::size_t>(batch.resource[slot])];
        r.weights.time = alpha * capture.beta_t.values()[slot];
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<FeatureWeightRow> feature_weights(const ForwardCapture& capture,
                                              const EncodedDataset& batch, std::size_t row,
                                              const EmbeddingBlocks& blocks,
                                              bool* approximate) {
    if (capture.architecture == Architecture::Shared) {
        return shared_feature_weights(capture, batch, row, blocks, approximate);
    }
    if (approximate) *approximate = false;
    return specialised_feature_weights(capture, batch, row);
}

std::vector<int> top_k_events(const std::vector<FeatureWeightRow>& rows, int k) {
    if (k < 1) throw ConfigError("top-k event count must be at least 1");
    std::vector<int> order(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double aa = rows[static_cast<std::size_t>(a)].alpha;
        const double ab = rows[static_cast<std::size_t>(b)].alpha;
        if (aa != ab) return aa > ab;
        return rows[static_cast<std::size_t>(a)].event_position >
               rows[static_cast<std::size_t>(b)].event_position;
    });
    std::vector<int> out;
    for (int idx : order) {
        if (static_cast<int>(out.size()) == k) break;
        out.push_back(rows[static_cast<std::size_t>(idx)].event_position);
    }
    return out;
}

namespace {

EmbeddingBlocks blocks_of(const ModelArtifact& artifact) {
    return EmbeddingBlocks{artifact.config.activity_embedding_dim,
                           artifact.config.resource_embedding_dim};
}

LocalExplanation explain_row(const ModelArtifact& artifact, const ForwardCapture& capture,
                             const EncodedDataset& batch, std::size_t row, int k) {
    LocalExplanation e;
    e.prefix_id = batch.prefix_ids[row];
    const int classes = capture.prediction.dim(1);
    const double* probs =
        &capture.prediction.values()[row * static_cast<std::size_t>(classes)];
    int best = 0;
    for (int j = 1; j < classes; ++j) {
        if (probs[j] > probs[best]) best = j;
    }
    e.predicted = artifact.class_label(best);
    e.probability = probs[best];
    e.actual = batch.activity_vocab.label_of(batch.targets[row]);
    e.rows = feature_weights(capture, batch, row, blocks_of(artifact), &e.approximate);
    e.top_events = top_k_events(e.rows, k);
    return e;
}

}  // namespace

LocalExplanation local_explanation(const ModelArtifact& artifact, const PrefixTrace& prefix,
                                   int k) {
    if (k < 1) throw ConfigError("top-k event count must be at least 1");
    EncodedDataset batch = artifact.encode({prefix});
    ForwardCapture capture = run_forward(artifact.model, batch);
    return explain_row(artifact, capture, batch, 0, k);
}

std::vector<LocalExplanation> local_explanations(const ModelArtifact& artifact,
                                                 const EncodedDataset& data, int k) {
    if (k < 1) throw ConfigError("top-k event count must be at least 1");
    std::vector<LocalExplanation> out;
    out.reserve(data.num_prefixes());
    const std::size_t chunk = 256;
    for (std::size_t from = 0; from < data.num_prefixes(); from += chunk) {
        const std::size_t to = std::min(data.num_prefixes(), from + chunk);
        std::vector<std::size_t> rows(to - from);
        for (std::size_t i = from; i < to; ++i) rows[i - from] = i;
        EncodedDataset batch = data.subset(rows);
        ForwardCapture capture = run_forward(artifact.model, batch);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            out.push_back(explain_row(artifact, capture, batch, r, k));
        }
    }
    return out;
}

CohortSelector selector_from_string(const std::string& name) {
    if (name == "predicted") return CohortSelector::Predicted;
    if (name == "actual") return CohortSelector::Actual;
    throw ConfigError("unknown cohort selector '" + name +
                      "' (expected 'predicted' or 'actual')");
}

std::string to_string(CohortSelector selector) {
    return selector == CohortSelector::Predicted ? "predicted" : "actual";
}

const GlobalValueCell* GlobalExplanation::modal(int offset,
                                                const std::string& category) const {
    for (const auto& cell : value_cells) {
        if (cell.offset == offset && cell.category == category) return &cell;
    }
    return nullptr;
}

GlobalExplanation global_explanation(const ModelArtifact& artifact,
                                     const EncodedDataset& test,
                                     const std::string& decision_point,
                                     const std::string& target, CohortSelector selector,
                                     int window) {
    if (window < 1) throw ConfigError("alignment window must be at least 1");
    if (test.num_prefixes() == 0) throw DataError("global explanation over an empty test set");

    GlobalExplanation g;
    g.decision_point = decision_point;
    g.target = target;
    g.selector = selector;
    g.window = window;

    struct Acc {
        double sum = 0.0, sum_abs = 0.0;
        std::size_t count = 0;
        void add(double v) {
            sum += v;
            sum_abs += std::fabs(v);
            ++count;
        }
    };
    // index [offset-1][category]; categories 0=activity 1=resource 2=time
    std::vector<std::array<Acc, 3>> cells(static_cast<std::size_t>(window));
    std::vector<std::array<std::map<std::string, Acc>, 2>> values(
        static_cast<std::size_t>(window));
    std::set<std::string> seen_decision_points;

    const EmbeddingBlocks blocks = blocks_of(artifact);
    const std::size_t n = test.num_prefixes();
    const std::size_t chunk = 256;
    const std::size_t pad = static_cast<std::size_t>(test.pad_length);
    for (std::size_t from = 0; from < n; from += chunk) {
        const std::size_t to = std::min(n, from + chunk);
        std::vector<std::size_t> rows(to - from);
        for (std::size_t i = from; i < to; ++i) rows[i - from] = i;
        EncodedDataset batch = test.subset(rows);
        ForwardCapture capture = run_forward(artifact.model, batch);
        const int classes = capture.prediction.dim(1);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const std::string last_activity =
                batch.activity_vocab.label_of(batch.activity[(r + 1) * pad - 1]);
            seen_decision_points.insert(last_activity);
            if (last_activity != decision_point) continue;

            std::string selected;
            if (selector == CohortSelector::Predicted) {
                const double* probs =
                    &capture.prediction.values()[r * static_cast<std::size_t>(classes)];
                int best = 0;
                for (int j = 1; j < classes; ++j) {
                    if (probs[j] > probs[best]) best = j;
                }
                selected = artifact.class_label(best);
            } else {
                selected = batch.activity_vocab.label_of(batch.targets[r]);
            }
            if (selected != target) continue;

            bool approx = false;
            const auto weight_rows = feature_weights(capture, batch, r, blocks, &approx);
            g.approximate = g.approximate || approx;
            ++g.cohort_size;
            for (const auto& row : weight_rows) {
                const int back = -row.reverse_offset;  // 1 = last event
                if (back > window) continue;
                auto& cell = cells[static_cast<std::size_t>(back - 1)];
                cell[0].add(row.weights.activity);
                cell[1].add(row.weights.resource);
                cell[2].add(row.weights.time);
                auto& vals = values[static_cast<std::size_t>(back - 1)];
                vals[0][row.activity_label].add(row.weights.activity);
                vals[1][row.resource_label].add(row.weights.resource);
            }
        }
    }

    if (g.cohort_size == 0) {
        std::ostringstream os;
        os << "no test prefix matches decision point '" << decision_point
           << "' with target '" << target << "' under selector '" << to_string(selector)
           << "'; decision points present:";
        for (const auto& dp : seen_decision_points) os << " '" << dp << "'";
        throw DataError(os.str());
    }

    static const char* kCategories[3] = {"activity", "resource", "time"};
    for (int back = 1; back <= window; ++back) {
        const auto& cell = cells[static_cast<std::size_t>(back - 1)];
        if (cell[0].count == 0) continue;  // no cohort member reaches this far back
        for (int c = 0; c < 3; ++c) {
            GlobalCell out;
            out.offset = -back;
            out.category = kCategories[c];
            out.count = cell[static_cast<std::size_t>(c)].count;
            out.mean = cell[static_cast<std::size_t>(c)].sum / static_cast<double>(out.count);
            out.mean_abs =
                cell[static_cast<std::size_t>(c)].sum_abs / static_cast<double>(out.count);
            g.cells.push_back(std::move(out));
        }
        for (int c = 0; c < 2; ++c) {
            std::vector<GlobalValueCell> group;
            for (const auto& [label, acc] : values[static_cast<std::size_t>(back - 1)]
                                                  [static_cast<std::size_t>(c)]) {
                GlobalValueCell out;
                out.offset = -back;
                out.category = kCategories[c];
                out.value = label;
                out.count = acc.count;
                out.mean = acc.sum / static_cast<double>(acc.count);
                out.mean_abs = acc.sum_abs / static_cast<double>(acc.count);
                group.push_back(std::move(out));
            }
            // modal value first; ties resolved by label so output is stable
            std::stable_sort(group.begin(), group.end(),
                             [](const GlobalValueCell& a, const GlobalValueCell& b) {
                                 if (a.count != b.count) return a.count > b.count;
                                 return a.value < b.value;
                             });
            for (auto& cellv : group) g.value_cells.push_back(std::move(cellv));
        }
    }
    return g;
}

}  // namespace procattn
