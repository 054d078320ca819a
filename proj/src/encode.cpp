#include "procattn/encode.hpp"

#include <algorithm>
#include <cmath>

namespace procattn {

Vocabulary::Vocabulary(std::string kind, std::vector<std::string> labels)
    : kind_(std::move(kind)), labels_(std::move(labels)) {
    if (labels_.size() < 2 || labels_[0] != kPadLabel || labels_[1] != kUnkLabel) {
        throw ConfigError("vocabulary must start with the reserved pad/unk labels");
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        index_[labels_[i]] = static_cast<int>(i);
    }
    if (index_.size() != labels_.size()) {
        throw ConfigError("vocabulary labels are not distinct");
    }
}

int Vocabulary::index_of(const std::string& label) const {
    const auto it = index_.find(label);
    return it == index_.end() ? kUnkIndex : it->second;
}

const std::string& Vocabulary::label_of(int index) const {
    if (index < 0 || index >= size()) {
        throw NumericError("vocabulary index " + std::to_string(index) + " outside [0," +
                           std::to_string(size()) + ")");
    }
    return labels_[static_cast<std::size_t>(index)];
}

bool Vocabulary::contains(const std::string& label) const {
    return index_.count(label) != 0;
}

std::pair<Vocabulary, Vocabulary> fit_vocabularies(const std::vector<PrefixTrace>& prefixes,
                                                   bool include_end_label) {
    if (prefixes.empty()) throw DataError("cannot fit vocabularies on an empty prefix set");
    std::vector<std::string> acts = {kPadLabel, kUnkLabel};
    std::vector<std::string> ress = {kPadLabel, kUnkLabel};
    std::unordered_map<std::string, int> seen_a = {{kPadLabel, 0}, {kUnkLabel, 1}};
    std::unordered_map<std::string, int> seen_r = seen_a;
    bool end_seen = false;

    auto note_activity = [&](const std::string& label) {
        if (label == kEndLabel) {
            end_seen = true;
            return;
        }
        if (seen_a.emplace(label, static_cast<int>(acts.size())).second) {
            acts.push_back(label);
        }
    };
    for (const PrefixTrace& p : prefixes) {
        for (const Event& e : p.events) {
            note_activity(e.activity);
            if (e.resource.has_value() &&
                seen_r.emplace(*e.resource, static_cast<int>(ress.size())).second) {
                ress.push_back(*e.resource);
            }
        }
        note_activity(p.target);
    }
    if (include_end_label || end_seen) acts.push_back(kEndLabel);
    return {Vocabulary("activity", std::move(acts)), Vocabulary("resource", std::move(ress))};
}

TimeUnit time_unit_from_string(const std::string& name) {
    if (name == "milliseconds" || name == "ms") return TimeUnit::Milliseconds;
    if (name == "seconds" || name == "s") return TimeUnit::Seconds;
    if (name == "minutes" || name == "m") return TimeUnit::Minutes;
    if (name == "hours" || name == "h") return TimeUnit::Hours;
    if (name == "days" || name == "d") return TimeUnit::Days;
    throw ConfigError("unknown time unit '" + name + "'");
}

std::string to_string(TimeUnit unit) {
    switch (unit) {
        case TimeUnit::Milliseconds: return "milliseconds";
        case TimeUnit::Seconds: return "seconds";
        case TimeUnit::Minutes: return "minutes";
        case TimeUnit::Hours: return "hours";
        case TimeUnit::Days: return "days";
    }
    return "days";
}

double ms_to_unit(std::int64_t delta_ms, TimeUnit unit) {
    const double ms = static_cast<double>(delta_ms);
    switch (unit) {
        case TimeUnit::Milliseconds: return ms;
        case TimeUnit::Seconds: return ms / 1000.0;
        case TimeUnit::Minutes: return ms / 60000.0;
        case TimeUnit::Hours: return ms / 3600000.0;
        case TimeUnit::Days: return ms / 86400000.0;
    }
    return ms;
}

std::vector<double> elapsed_time(const PrefixTrace& prefix, TimeUnit unit) {
    std::vector<double> out;
    out.reserve(prefix.events.size());
    if (prefix.events.empty()) return out;
    const std::int64_t t0 = prefix.events.front().timestamp_ms;
    for (const Event& e : prefix.events) {
        out.push_back(ms_to_unit(e.timestamp_ms - t0, unit));
    }
    return out;
}

TimeScaler TimeScaler::identity() { return TimeScaler{"identity", 1.0}; }

TimeScaler TimeScaler::fit_maxabs(const std::vector<double>& values) {
    double mx = 0.0;
    for (double v : values) mx = std::max(mx, std::fabs(v));
    return TimeScaler{"maxabs", mx > 0.0 ? mx : 1.0};
}

EncodedDataset encode_dataset(const std::vector<PrefixTrace>& prefixes,
                              const Vocabulary& activity_vocab,
                              const Vocabulary& resource_vocab, int pad_length,
                              const TimeScaler& scaler, TimeUnit unit) {
    if (pad_length < 1) throw ConfigError("pad length must be >= 1");
    const std::size_t N = prefixes.size();
    const std::size_t L = static_cast<std::size_t>(pad_length);
    EncodedDataset ds;
    ds.pad_length = pad_length;
    ds.activity.assign(N * L, kPadIndex);
    ds.resource.assign(N * L, kPadIndex);
    ds.elapsed.assign(N * L, 0.0);
    ds.mask.assign(N * L, 0.0);
    ds.targets.reserve(N);
    ds.lengths.reserve(N);
    ds.prefix_ids.reserve(N);
    ds.activity_vocab = activity_vocab;
    ds.resource_vocab = resource_vocab;
    ds.scaler = scaler;
    ds.unit = unit;

    for (std::size_t i = 0; i < N; ++i) {
        const PrefixTrace& p = prefixes[i];
        const std::size_t l = p.events.size();
        if (static_cast<int>(l) != p.length) {
            throw DataError("prefix " + p.trace_case_id + " length field " +
                            std::to_string(p.length) + " does not match its " +
                            std::to_string(l) + " events");
        }
        if (l > L) {
            throw DataError("prefix of length " + std::to_string(l) +
                            " exceeds pad length " + std::to_string(pad_length));
        }
        const std::size_t offset = L - l;  // left padding
        const std::vector<double> dts = elapsed_time(p, unit);
        for (std::size_t j = 0; j < l; ++j) {
            const Event& e = p.events[j];
            const std::size_t at = i * L + offset + j;
            ds.activity[at] = activity_vocab.index_of(e.activity);
            ds.resource[at] = e.resource.has_value() ? resource_vocab.index_of(*e.resource)
                                                     : kUnkIndex;
            ds.elapsed[at] = scaler.apply(dts[j]);
            ds.mask[at] = 1.0;
        }
        ds.targets.push_back(activity_vocab.index_of(p.target));
        ds.lengths.push_back(static_cast<int>(l));
        ds.prefix_ids.push_back(p.trace_case_id + "#" + std::to_string(l));
    }
    return ds;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

namespace {

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train fraction must lie strictly between 0 and 1");
    }
    if (n == 0) throw DataError("cannot split an empty dataset");
    const auto idx = shuffled_indices(n, seed);
    const std::size_t train_n = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * train_fraction));
    return {std::vector<std::size_t>(idx.begin(), idx.begin() + train_n),
            std::vector<std::size_t>(idx.begin() + train_n, idx.end())};
}

}  // namespace

EncodedDataset EncodedDataset::subset(const std::vector<std::size_t>& rows) const {
    const std::size_t L = static_cast<std::size_t>(pad_length);
    EncodedDataset out;
    out.pad_length = pad_length;
    out.activity_vocab = activity_vocab;
    out.resource_vocab = resource_vocab;
    out.scaler = scaler;
    out.unit = unit;
    out.activity.reserve(rows.size() * L);
    out.resource.reserve(rows.size() * L);
    out.elapsed.reserve(rows.size() * L);
    out.mask.reserve(rows.size() * L);
    for (std::size_t r : rows) {
        if (r >= num_prefixes()) throw NumericError("subset row out of range");
        out.activity.insert(out.activity.end(), activity.begin() + r * L,
                            activity.begin() + (r + 1) * L);
        out.resource.insert(out.resource.end(), resource.begin() + r * L,
                            resource.begin() + (r + 1) * L);
        out.elapsed.insert(out.elapsed.end(), elapsed.begin() + r * L,
                           elapsed.begin() + (r + 1) * L);
        out.mask.insert(out.mask.end(), mask.begin() + r * L, mask.begin() + (r + 1) * L);
        out.targets.push_back(targets[r]);
        out.lengths.push_back(lengths[r]);
        out.prefix_ids.push_back(prefix_ids[r]);
    }
    return out;
}

std::pair<EncodedDataset, EncodedDataset> split_dataset(const EncodedDataset& dataset,
                                                        double train_fraction,
                                                        std::uint64_t seed) {
    auto [train_rows, test_rows] = split_indices(dataset.num_prefixes(), train_fraction, seed);
    return {dataset.subset(train_rows), dataset.subset(test_rows)};
}

std::pair<std::vector<PrefixTrace>, std::vector<PrefixTrace>> split_prefixes(
    const std::vector<PrefixTrace>& prefixes, double train_fraction, std::uint64_t seed) {
    auto [train_rows, test_rows] = split_indices(prefixes.size(), train_fraction, seed);
    std::vector<PrefixTrace> train, test;
    train.reserve(train_rows.size());
    test.reserve(test_rows.size());
    for (std::size_t r : train_rows) train.push_back(prefixes[r]);
    for (std::size_t r : test_rows) test.push_back(prefixes[r]);
    return {std::move(train), std::move(test)};
}

Tensor one_hot(const std::vector<int>& indices, int rows, int pad_length, int width,
               const std::vector<double>* mask) {
    const std::size_t N = static_cast<std::size_t>(rows);
    const std::size_t L = static_cast<std::size_t>(pad_length);
    if (indices.size() != N * L) {
        throw NumericError("one_hot: " + std::to_string(indices.size()) +
                           " indices for " + std::to_string(N) + "x" + std::to_string(L));
    }
    if (mask && mask->size() != indices.size()) {
        throw NumericError("one_hot: mask size does not match indices");
    }
    Tensor out = Tensor::zeros({rows, pad_length, width});
    auto& v = out.values();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int ix = indices[i];
        if (ix < 0 || ix >= width) {
            throw NumericError("one_hot: index " + std::to_string(ix) + " outside width " +
                               std::to_string(width));
        }
        if (mask && (*mask)[i] == 0.0) continue;  // pad stays all-zero
        v[i * static_cast<std::size_t>(width) + static_cast<std::size_t>(ix)] = 1.0;
    }
    return out;
}

}  // namespace procattn
