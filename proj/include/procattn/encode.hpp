// Prefix traces -> padded numeric features: index-encoded activities and
// resources, elapsed-time channel, mask, targets, vocabularies.

#ifndef PROCATTN_ENCODE_HPP
#define PROCATTN_ENCODE_HPP

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "procattn/eventlog.hpp"
#include "procattn/tensor.hpp"

namespace procattn {

inline constexpr const char* kPadLabel = "<PAD>";
inline constexpr const char* kUnkLabel = "<UNK>";  // also the absent resource

inline constexpr int kPadIndex = 0;
inline constexpr int kUnkIndex = 1;
inline constexpr int kFirstRealIndex = 2;

class Vocabulary {
public:
    Vocabulary() = default;
    // labels must already include the reserved entries at 0 and 1.
    Vocabulary(std::string kind, std::vector<std::string> labels);

    const std::string& kind() const { return kind_; }
    int size() const { return static_cast<int>(labels_.size()); }
    // Unseen labels map to <UNK>; never throws.
    int index_of(const std::string& label) const;
    const std::string& label_of(int index) const;
    const std::vector<std::string>& labels() const { return labels_; }
    bool contains(const std::string& label) const;

private:
    std::string kind_;
    std::vector<std::string> labels_;
    std::unordered_map<std::string, int> index_;
};

// First-occurrence order over each prefix's events then its target, so a
// fixed prefix sequence always produces the same mapping. When
// include_end_label is set (or an end target is present) the end label is
// appended as the final activity index.
std::pair<Vocabulary, Vocabulary> fit_vocabularies(const std::vector<PrefixTrace>& prefixes,
                                                   bool include_end_label);

enum class TimeUnit { Milliseconds, Seconds, Minutes, Hours, Days };

TimeUnit time_unit_from_string(const std::string& name);
std::string to_string(TimeUnit unit);
double ms_to_unit(std::int64_t delta_ms, TimeUnit unit);

// Delta from the first event of the prefix, in `unit`; element 0 is 0.
std::vector<double> elapsed_time(const PrefixTrace& prefix, TimeUnit unit);

// Divisor-style scaler for the elapsed channel. "maxabs" divides by the
// largest absolute value seen at fit time; "identity" leaves values alone.
struct TimeScaler {
    std::string kind = "maxabs";
    double scale = 1.0;

    static TimeScaler identity();
    static TimeScaler fit_maxabs(const std::vector<double>& values);
    double apply(double v) const { return v / scale; }
};

struct EncodedDataset {
    int pad_length = 0;  // L
    // row-major [num × L]
    std::vector<int> activity;
    std::vector<int> resource;
    std::vector<double> elapsed;  // scaled
    std::vector<double> mask;     // 1.0 real, 0.0 pad
    std::vector<int> targets;     // activity-vocabulary indices
    std::vector<int> lengths;
    std::vector<std::string> prefix_ids;  // "<case>#<length>"
    Vocabulary activity_vocab;
    Vocabulary resource_vocab;
    TimeScaler scaler;
    TimeUnit unit = TimeUnit::Days;

    std::size_t num_prefixes() const { return targets.size(); }
    EncodedDataset subset(const std::vector<std::size_t>& rows) const;
};

EncodedDataset encode_dataset(const std::vector<PrefixTrace>& prefixes,
                              const Vocabulary& activity_vocab,
                              const Vocabulary& resource_vocab, int pad_length,
                              const TimeScaler& scaler, TimeUnit unit);

// Deterministic Fisher–Yates permutation of [0, n) under the seed.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

std::pair<EncodedDataset, EncodedDataset> split_dataset(const EncodedDataset& dataset,
                                                        double train_fraction,
                                                        std::uint64_t seed);

// Same shuffle core applied before encoding, so vocabularies and the time
// scaler can be fitted on the training side only.
std::pair<std::vector<PrefixTrace>, std::vector<PrefixTrace>> split_prefixes(
    const std::vector<PrefixTrace>& prefixes, double train_fraction, std::uint64_t seed);

// indices: row-major [rows × L] -> {0,1}^[rows × L × width]; positions where
// mask is 0 become all-zero rows (index 0 would otherwise light up the pad
// column).
Tensor one_hot(const std::vector<int>& indices, int rows, int pad_length, int width,
               const std::vector<double>* mask = nullptr);

}  // namespace procattn

#endif
