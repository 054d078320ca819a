// Turns captured attention tensors into per-event feature weights, local
// explanations for single prefixes, and cohort-level global explanations
// anchored on a decision-point activity.

#ifndef PROCATTN_INTERPRET_HPP
#define PROCATTN_INTERPRET_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "procattn/model.hpp"

namespace procattn {

struct CategoryWeights {
    double activity = 0.0;
    double resource = 0.0;
    double time = 0.0;
};

// Index rule for the shared architecture: the weight of each attribute is
// the element of alpha (.) beta at that attribute's position in the feature
// layout [activity block | resource block | elapsed]. j_a / j_r are the
// in-block indices of the observed labels.
CategoryWeights shared_weights_at(double alpha, const double* beta, int activity_dim,
                                  int resource_dim, int j_a, int j_r);

// Fallback when an embedding block is not vocabulary-sized, so no single
// element corresponds to the observed label: sum alpha (.) beta over the
// whole block. Callers flag explanations built this way as approximate.
CategoryWeights shared_block_sum_at(double alpha, const double* beta, int activity_dim,
                                    int resource_dim);

struct FeatureWeightRow {
    int event_position = 0;  // 0-based within the prefix
    int reverse_offset = 0;  // last event = -1
    std::string activity_label;
    std::string resource_label;
    double alpha = 0.0;
    CategoryWeights weights;
};

struct EmbeddingBlocks {
    int activity_dim = 0;
    int resource_dim = 0;
};

// One row per real event of batch row `row`, in prefix order. `approximate`
// (optional) reports whether the block-sum fallback was used.
std::vector<FeatureWeightRow> shared_feature_weights(const ForwardCapture& capture,
                                                     const EncodedDataset& batch,
                                                     std::size_t row,
                                                     const EmbeddingBlocks& blocks,
                                                     bool* approximate = nullptr);

std::vector<FeatureWeightRow> specialised_feature_weights(const ForwardCapture& capture,
                                                          const EncodedDataset& batch,
                                                          std::size_t row);

// Architecture dispatch over the capture.
std::vector<FeatureWeightRow> feature_weights(const ForwardCapture& capture,
                                              const EncodedDataset& batch, std::size_t row,
                                              const EmbeddingBlocks& blocks,
                                              bool* approximate = nullptr);

// Event positions ranked by descending alpha; equal alphas rank the later
// position first. At most k entries.
std::vector<int> top_k_events(const std::vector<FeatureWeightRow>& rows, int k);

struct LocalExplanation {
    std::string prefix_id;
    std::string predicted;
    double probability = 0.0;
    std::string actual;
    bool approximate = false;
    std::vector<FeatureWeightRow> rows;
    std::vector<int> top_events;
};

inline constexpr int kDefaultTopK = 3;

LocalExplanation local_explanation(const ModelArtifact& artifact, const PrefixTrace& prefix,
                                   int k = kDefaultTopK);

// Batch variant over already-encoded rows (the rows must have been encoded
// with the artifact's vocabularies).
std::vector<LocalExplanation> local_explanations(const ModelArtifact& artifact,
                                                 const EncodedDataset& data,
                                                 int k = kDefaultTopK);

enum class CohortSelector { Predicted, Actual };

CohortSelector selector_from_string(const std::string& name);
std::string to_string(CohortSelector selector);

struct GlobalCell {
    int offset = 0;        // -1 .. -window
    std::string category;  // "activity" | "resource" | "time"
    double mean = 0.0;
    double mean_abs = 0.0;
    std::size_t count = 0;
};

struct GlobalValueCell {
    int offset = 0;
    std::string category;  // "activity" | "resource"
    std::string value;     // observed label at that offset
    double mean = 0.0;
    double mean_abs = 0.0;
    std::size_t count = 0;
};

struct GlobalExplanation {
    std::string decision_point;
    std::string target;
    CohortSelector selector = CohortSelector::Predicted;
    int window = 0;
    std::size_t cohort_size = 0;
    bool approximate = false;
    // Offsets nearest the decision point first; categories in the fixed
    // order activity, resource, time. Only offsets some cohort member has.
    std::vector<GlobalCell> cells;
    // Per concrete label; within one (offset, category) ordered by count
    // descending, then label, so the modal value leads.
    std::vector<GlobalValueCell> value_cells;

    const GlobalValueCell* modal(int offset, const std::string& category) const;
};

inline constexpr int kDefaultAlignmentWindow = 10;

// Cohort: rows of `test` whose last-event activity equals decision_point and
// whose selector-side class label equals `target`. Empty cohort raises a
// DataError listing the decision points that do occur.
GlobalExplanation global_explanation(const ModelArtifact& artifact,
                                     const EncodedDataset& test,
                                     const std::string& decision_point,
                                     const std::string& target,
                                     CohortSelector selector = CohortSelector::Predicted,
                                     int window = kDefaultAlignmentWindow);

}  // namespace procattn

#endif
