// Whole-system acceptance gate. Each numbered check prints one
// [PASS]/[FAIL]/[SKIP] line (multi-part checks carry letter suffixes) and the
// process exits with the number of failed gating checks, so a zero exit is a
// clean bill of health. The two checks that need the public BPIC 2012 event
// log read its location from the BPIC2012_LOG environment variable and skip
// cleanly when it is unset; check 10 is informational and never gates.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "procattn/encode.hpp"
#include "procattn/evalstats.hpp"
#include "procattn/eventlog.hpp"
#include "procattn/interpret.hpp"
#include "procattn/model.hpp"
#include "procattn/pipeline.hpp"
#include "support/finite_diff.hpp"
#include "support/fragment_log.hpp"
#include "support/reference_model.hpp"
#include "support/synthetic.hpp"
#include "support/util.hpp"

using namespace procattn;

namespace {

std::set<int> g_failed_gating;
int g_passed = 0;
int g_failed = 0;
int g_skipped = 0;

void report(int number, const std::string& id, bool pass, const std::string& what,
            const std::string& detail = std::string()) {
    std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << id << ": " << what;
    if (!detail.empty()) std::cout << " -- " << detail;
    std::cout << std::endl;
    if (pass) {
        ++g_passed;
    } else {
        ++g_failed;
        if (number != 10) g_failed_gating.insert(number);
    }
}

void skip_check(const std::string& id, const std::string& what, const std::string& why) {
    std::cout << "[SKIP] criterion " << id << ": " << what << " -- " << why << std::endl;
    ++g_skipped;
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

std::string fmt_sci(double v) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(2) << v;
    return os.str();
}

// ---- shared fixtures -------------------------------------------------------

Vocabulary make_vocab(const std::string& kind, const std::string& stem, int real) {
    std::vector<std::string> labels{kPadLabel, kUnkLabel};
    for (int i = 0; i < real; ++i) labels.push_back(stem + std::to_string(i));
    return Vocabulary(kind, labels);
}

// Random left-padded batch straight into the encoded layout; the forward
// passes do not care how the rows were produced.
EncodedDataset random_dataset(int rows, int pad_length, int activity_real, int resource_real,
                              std::mt19937_64& rng) {
    EncodedDataset ds;
    ds.pad_length = pad_length;
    ds.activity_vocab = make_vocab("activity", "act", activity_real);
    ds.resource_vocab = make_vocab("resource", "res", resource_real);
    ds.scaler = TimeScaler::identity();
    ds.unit = TimeUnit::Days;
    const int va = ds.activity_vocab.size();
    const int vr = ds.resource_vocab.size();
    for (int r = 0; r < rows; ++r) {
        const int len = 1 + static_cast<int>(uniform01(rng) * pad_length) % pad_length;
        ds.lengths.push_back(len);
        ds.prefix_ids.push_back("case" + std::to_string(r) + "#" + std::to_string(len));
        double t = 0.0;
        for (int l = 0; l < pad_length; ++l) {
            const bool live = l >= pad_length - len;
            if (live) {
                const int a = uniform01(rng) < 0.1
                                  ? kUnkIndex
                                  : kFirstRealIndex +
                                        static_cast<int>(uniform01(rng) * (va - 2));
                const int rr = uniform01(rng) < 0.1
                                   ? kUnkIndex
                                   : kFirstRealIndex +
                                         static_cast<int>(uniform01(rng) * (vr - 2));
                ds.activity.push_back(std::min(a, va - 1));
                ds.resource.push_back(std::min(rr, vr - 1));
                t += uniform01(rng);
                ds.elapsed.push_back(t);
                ds.mask.push_back(1.0);
            } else {
                ds.activity.push_back(kPadIndex);
                ds.resource.push_back(kPadIndex);
                ds.elapsed.push_back(0.0);
                ds.mask.push_back(0.0);
            }
        }
        ds.targets.push_back(kFirstRealIndex + static_cast<int>(uniform01(rng) * (va - 2)));
    }
    return ds;
}

refmodel::ParamMap to_param_map(const Model& model) {
    refmodel::ParamMap out;
    for (const auto& [name, tensor] : model.named_params()) {
        out[name] = refmodel::Param{tensor.shape(), tensor.values()};
    }
    return out;
}

struct RowView {
    std::vector<int> activity, resource;
    std::vector<double> elapsed, mask;
};

RowView row_of(const EncodedDataset& ds, std::size_t r) {
    RowView v;
    const std::size_t L = static_cast<std::size_t>(ds.pad_length);
    for (std::size_t l = 0; l < L; ++l) {
        v.activity.push_back(ds.activity[r * L + l]);
        v.resource.push_back(ds.resource[r * L + l]);
        v.elapsed.push_back(ds.elapsed[r * L + l]);
        v.mask.push_back(ds.mask[r * L + l]);
    }
    return v;
}

std::vector<int> class_targets(const EncodedDataset& ds) {
    std::vector<int> out;
    for (int t : ds.targets) out.push_back(t - kFirstRealIndex);
    return out;
}

double batch_loss(const Model& model, const EncodedDataset& batch,
                  const std::vector<int>& targets) {
    Tape tape(false);
    ForwardCapture cap = model.forward(tape, batch);
    return tape.cross_entropy(cap.logits, targets).values()[0];
}

// Central finite differences against the analytic gradient for one parameter
// tensor of a live model.
testing::GradCheckResult fd_check_model(Model& model, Tensor param,
                                        const EncodedDataset& batch,
                                        const std::vector<int>& targets, double tol) {
    Tape tape(true);
    ForwardCapture cap = model.forward(tape, batch);
    Tensor loss = tape.cross_entropy(cap.logits, targets);
    for (auto& p : model.params()) p.zero_grad();
    tape.backward(loss);
    const std::vector<double> analytic = param.grads();

    testing::GradCheckResult r;
    const double h = 1e-5;
    auto& vals = param.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
        const double keep = vals[i];
        vals[i] = keep + h;
        const double up = batch_loss(model, batch, targets);
        vals[i] = keep - h;
        const double down = batch_loss(model, batch, targets);
        vals[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double scale = std::max({1.0, std::fabs(analytic[i]), std::fabs(fd)});
        const double rel = std::fabs(analytic[i] - fd) / scale;
        if (rel > r.worst_rel) {
            r.worst_rel = rel;
            r.worst_index = i;
            r.analytic_at_worst = analytic[i];
            r.numeric_at_worst = fd;
        }
        if (rel > tol) r.ok = false;
    }
    return r;
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    std::vector<double> v(n);
    for (double& x : v) x = (2.0 * uniform01(rng) - 1.0) * scale;
    return Tensor::from_data(std::move(shape), std::move(v), true);
}

// Split, fit, encode, and train one model over raw prefixes; the held-out
// side doubles as the validation set. Accuracy is measured by prediction on
// the held-out rows of the returned (best-epoch) artifact.
struct TrainedModel {
    ModelArtifact artifact;
    EncodedDataset test;
    double accuracy = 0.0;
    int epochs_run = 0;
};

TrainedModel train_on_prefixes(const std::vector<PrefixTrace>& prefixes, Architecture arch,
                               std::uint64_t seed, int hidden, int epochs, int patience,
                               double lr, int batch, double target) {
    auto [train_p, test_p] = split_prefixes(prefixes, 0.7, seed);
    auto [avocab, rvocab] = fit_vocabularies(train_p, false);
    std::vector<double> train_elapsed;
    for (const PrefixTrace& p : train_p) {
        for (double v : elapsed_time(p, TimeUnit::Days)) train_elapsed.push_back(v);
    }
    const TimeScaler scaler = TimeScaler::fit_maxabs(train_elapsed);
    int pad = 0;
    for (const PrefixTrace& p : prefixes) pad = std::max(pad, p.length);
    EncodedDataset train = encode_dataset(train_p, avocab, rvocab, pad, scaler, TimeUnit::Days);
    EncodedDataset test = encode_dataset(test_p, avocab, rvocab, pad, scaler, TimeUnit::Days);

    ModelConfig mc;
    mc.architecture = arch;
    mc.hidden_size = hidden;
    mc.seed = seed;
    TrainConfig tc;
    tc.epochs = epochs;
    tc.batch_size = batch;
    tc.lr = lr;
    tc.patience = patience;
    tc.target_accuracy = target;
    TrainResult tr = train_model(train, test, mc, tc);

    TrainedModel out{std::move(tr.artifact), std::move(test)};
    out.epochs_run = static_cast<int>(tr.log.size());
    const std::vector<Prediction> preds = predict(out.artifact, out.test);
    std::size_t hits = 0;
    for (const Prediction& p : preds) hits += p.correct ? 1 : 0;
    out.accuracy = preds.empty() ? 0.0 : static_cast<double>(hits) / preds.size();
    return out;
}

// Profile for the public BPIC 2012 log; XES when the file says so, otherwise
// a delimited export with the standard column names. The A_ filter carves the
// application subprocess out of the full log.
LogProfile bpic2012_a_profile(const std::string& path) {
    LogProfile p;
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".xes") == 0) {
        p.format = "xes";
    } else {
        p.resource_column = "resource";
    }
    p.activity_filter = "^A_";
    p.completed_only = true;
    return p;
}

// ---- criterion 1: gradient correctness -------------------------------------

void criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::ostringstream detail;
    std::mt19937_64 rng(2024);

    for (Architecture arch : {Architecture::Shared, Architecture::Specialised}) {
        EncodedDataset ds = random_dataset(2, 5, 4, 3, rng);
        ModelConfig mc;
        mc.architecture = arch;
        mc.hidden_size = 6;
        mc.seed = 7;
        Model model = Model::init(mc, ds.activity_vocab.size(), ds.resource_vocab.size());
        const std::vector<int> targets = class_targets(ds);
        double worst = 0.0;
        for (const auto& [name, param] : model.named_params()) {
            auto r = fd_check_model(model, param, ds, targets, 1e-4);
            worst = std::max(worst, r.worst_rel);
            if (!r.ok) {
                ok = false;
                detail << to_string(arch) << " " << name << " rel " << fmt_sci(r.worst_rel)
                       << "; ";
            }
        }
        detail << to_string(arch) << " worst rel " << fmt_sci(worst) << "; ";
    }

    // representative single-op checks at the tighter tolerance
    std::mt19937_64 oprng(77);
    auto op_check = [&](const char* name, Tensor param,
                        const std::function<Tensor(Tape&, Tensor)>& build) {
        auto r = testing::check_gradient(std::move(param), build, 1e-6);
        if (!r.ok) {
            ok = false;
            detail << "op " << name << " rel " << fmt_sci(r.worst_rel) << "; ";
        }
    };
    {
        Tensor a0 = random_tensor({2, 3, 4}, oprng);
        Tensor b0 = random_tensor({4, 5}, oprng);
        op_check("matmul", b0, [&](Tape& t, Tensor p) {
            Tensor a = Tensor::from_data(a0.shape(), a0.values());
            return t.cross_entropy(t.reshape(t.matmul(a, p), {6, 5}), {4, 3, 2, 1, 0, 2});
        });
        Tensor x0 = random_tensor({3, 5}, oprng, 2.0);
        op_check("tanh", x0, [](Tape& t, Tensor p) {
            return t.cross_entropy(t.tanh(p), {0, 1, 2});
        });
        op_check("sigmoid", x0, [](Tape& t, Tensor p) {
            return t.cross_entropy(t.sigmoid(p), {4, 3, 2});
        });
        const std::vector<double> mask_v = {1, 1, 0, 1, 0, 1, 1, 1, 1, 1, 0, 1, 1, 0, 1};
        op_check("softmax_masked", x0, [&](Tape& t, Tensor p) {
            Tensor m = Tensor::from_data({3, 5}, mask_v);
            return t.cross_entropy(t.softmax_masked(p, m), {0, 2, 4},
                                   Tape::CrossEntropyInput::Probabilities);
        });
        Tensor table0 = random_tensor({5, 3}, oprng);
        const std::vector<int> idx = {0, 4, 2, 2, 1, 3};
        op_check("embedding", table0, [&](Tape& t, Tensor p) {
            return t.cross_entropy(t.sum_over_axis(t.embedding_lookup(p, idx, {2, 3}), 1),
                                   {0, 2});
        });
        Tensor s0 = random_tensor({2, 4, 3}, oprng);
        op_check("structure", s0, [](Tape& t, Tensor p) {
            Tensor rev = t.reverse_time(p);
            Tensor a = t.slice_last_axis(rev, 0, 2);
            Tensor b = t.slice_last_axis(rev, 2, 1);
            Tensor cat = t.concat_last_axis({b, a});
            std::vector<Tensor> steps;
            for (int l = 0; l < 4; ++l) steps.push_back(t.slice_time(cat, l));
            return t.cross_entropy(t.sum_over_axis(t.stack_time(steps), 1), {0, 2});
        });
    }

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= 10.0) {
        ok = false;
        detail << "took " << fmt(secs, 1) << " s (budget 10 s); ";
    } else {
        detail << fmt(secs, 1) << " s";
    }
    report(1, "1", ok,
           "end-to-end analytic gradients match central finite differences for both "
           "architectures (1e-4) and representative ops (1e-6)",
           detail.str());
}

// ---- criterion 2: forward-pass oracle equivalence ---------------------------

void criterion_forward_oracle() {
    bool ok = true;
    double worst = 0.0;
    std::mt19937_64 rng(501);

    auto track = [&](double got, double want) {
        const double d = std::fabs(got - want);
        worst = std::max(worst, d);
        if (d > 1e-10) ok = false;
    };

    for (Architecture arch : {Architecture::Shared, Architecture::Specialised}) {
        for (int inst = 0; inst < 20; ++inst) {
            const int va_real = 2 + static_cast<int>(uniform01(rng) * 4.0);
            const int vr_real = 2 + static_cast<int>(uniform01(rng) * 3.0);
            const int L = 3 + static_cast<int>(uniform01(rng) * 4.0);
            const int rows = 1 + static_cast<int>(uniform01(rng) * 3.0);
            EncodedDataset ds = random_dataset(rows, L, va_real, vr_real, rng);
            ModelConfig mc;
            mc.architecture = arch;
            mc.hidden_size = 4 + inst % 3;
            mc.seed = 100 + static_cast<std::uint64_t>(inst);
            Model model = Model::init(mc, ds.activity_vocab.size(), ds.resource_vocab.size());
            ForwardCapture cap = run_forward(model, ds);
            const auto pm = to_param_map(model);
            const int classes = ds.activity_vocab.size() - kFirstRealIndex;
            const int va = ds.activity_vocab.size();
            const int vr = ds.resource_vocab.size();
            const int f = va + vr + 1;

            for (std::size_t r = 0; r < ds.num_prefixes(); ++r) {
                const RowView v = row_of(ds, r);
                const refmodel::RefOutput ref =
                    arch == Architecture::Shared
                        ? refmodel::shared_forward(pm, v.activity, v.resource, v.elapsed, v.mask)
                        : refmodel::specialised_forward(pm, v.activity, v.resource, v.elapsed,
                                                        v.mask);
                for (int j = 0; j < classes; ++j) {
                    track(cap.prediction.values()[r * classes + j], ref.probs[j]);
                }
                for (int l = 0; l < L; ++l) {
                    const std::size_t rl = r * L + static_cast<std::size_t>(l);
                    track(cap.alpha.values()[rl], ref.alpha[static_cast<std::size_t>(l)]);
                    if (arch == Architecture::Shared) {
                        const int width = model.shared->feature_width();
                        for (int i = 0; i < width; ++i) {
                            track(cap.beta.values()[rl * width + i],
                                  ref.beta[static_cast<std::size_t>(l)]
                                          [static_cast<std::size_t>(i)]);
                        }
                    } else {
                        for (int i = 0; i < va; ++i) {
                            track(cap.beta_a.values()[rl * va + i],
                                  ref.beta_a[static_cast<std::size_t>(l)]
                                            [static_cast<std::size_t>(i)]);
                            track(cap.inf_a.values()[rl * va + i],
                                  ref.influence[static_cast<std::size_t>(l)]
                                               [static_cast<std::size_t>(i)]);
                        }
                        for (int i = 0; i < vr; ++i) {
                            track(cap.beta_r.values()[rl * vr + i],
                                  ref.beta_r[static_cast<std::size_t>(l)]
                                            [static_cast<std::size_t>(i)]);
                            track(cap.inf_r.values()[rl * vr + i],
                                  ref.influence[static_cast<std::size_t>(l)]
                                               [static_cast<std::size_t>(va + i)]);
                        }
                        track(cap.beta_t.values()[rl], ref.beta_t[static_cast<std::size_t>(l)]);
                        track(cap.inf_t.values()[rl],
                              ref.influence[static_cast<std::size_t>(l)]
                                           [static_cast<std::size_t>(f - 1)]);
                    }
                }
                const int width = arch == Architecture::Shared
                                      ? model.shared->feature_width()
                                      : model.specialised->feature_width();
                for (int i = 0; i < width; ++i) {
                    track(cap.context.values()[r * width + i],
                          ref.context[static_cast<std::size_t>(i)]);
                }
            }
        }
    }
    report(2, "2", ok,
           "forward passes match straight-line reference reimplementations on 20 random "
           "instances per architecture (1e-10)",
           "max abs diff " + fmt_sci(worst));
}

// ---- criterion 3: attention invariants --------------------------------------

void criterion_attention_invariants() {
    bool ok = true;
    std::ostringstream detail;
    std::mt19937_64 rng(777);

    for (Architecture arch : {Architecture::Shared, Architecture::Specialised}) {
        double worst_sum_err = 0.0;
        std::size_t pad_violations = 0, beta_violations = 0, rows_done = 0;
        while (rows_done < 1000) {
            const int rows = 20;
            const int L = 2 + static_cast<int>(uniform01(rng) * 6.0);
            const int va_real = 2 + static_cast<int>(uniform01(rng) * 5.0);
            const int vr_real = 2 + static_cast<int>(uniform01(rng) * 4.0);
            EncodedDataset ds = random_dataset(rows, L, va_real, vr_real, rng);
            ModelConfig mc;
            mc.architecture = arch;
            mc.hidden_size = 3 + static_cast<int>(uniform01(rng) * 5.0);
            mc.seed = rng();
            Model model = Model::init(mc, ds.activity_vocab.size(), ds.resource_vocab.size());
            ForwardCapture cap = run_forward(model, ds);

            for (int r = 0; r < rows; ++r) {
                double sum = 0.0;
                for (int l = 0; l < L; ++l) {
                    const std::size_t rl = static_cast<std::size_t>(r) * L + l;
                    if (ds.mask[rl] != 0.0) {
                        sum += cap.alpha.values()[rl];
                    } else if (cap.alpha.values()[rl] != 0.0) {
                        ++pad_violations;
                    }
                }
                worst_sum_err = std::max(worst_sum_err, std::fabs(sum - 1.0));
            }
            auto scan_beta = [&](const Tensor& t) {
                for (double b : t.values()) {
                    if (!(b > -1.0 && b < 1.0)) ++beta_violations;
                }
            };
            if (arch == Architecture::Shared) {
                scan_beta(cap.beta);
            } else {
                scan_beta(cap.beta_a);
                scan_beta(cap.beta_r);
                scan_beta(cap.beta_t);
            }
            rows_done += rows;
        }
        if (worst_sum_err > 1e-6 || pad_violations > 0 || beta_violations > 0) ok = false;
        detail << to_string(arch) << ": worst alpha-sum err " << fmt_sci(worst_sum_err) << ", "
               << pad_violations << " pad / " << beta_violations << " beta violations; ";
    }
    report(3, "3", ok,
           "over 1000 random forwards per architecture alpha sums to 1 on real steps, is 0 "
           "on pads, and beta stays inside (-1,1)",
           detail.str());
}

// ---- criterion 4: specialised extraction vs brute force ---------------------

void criterion_extraction_bruteforce() {
    bool ok = true;
    std::size_t captures = 0, mismatches = 0, multi_nonzero = 0;
    std::mt19937_64 rng(909);

    while (captures < 1000) {
        const int rows = 25;
        const int L = 2 + static_cast<int>(uniform01(rng) * 6.0);
        const int va_real = 2 + static_cast<int>(uniform01(rng) * 5.0);
        const int vr_real = 2 + static_cast<int>(uniform01(rng) * 4.0);
        EncodedDataset ds = random_dataset(rows, L, va_real, vr_real, rng);
        ModelConfig mc;
        mc.architecture = Architecture::Specialised;
        mc.hidden_size = 4;
        mc.seed = rng();
        Model model = Model::init(mc, ds.activity_vocab.size(), ds.resource_vocab.size());
        ForwardCapture cap = run_forward(model, ds);
        const int va = ds.activity_vocab.size();
        const int vr = ds.resource_vocab.size();

        for (int r = 0; r < rows && captures < 1000; ++r, ++captures) {
            const auto weight_rows =
                specialised_feature_weights(cap, ds, static_cast<std::size_t>(r));
            for (const FeatureWeightRow& row : weight_rows) {
                const int l = L - ds.lengths[static_cast<std::size_t>(r)] + row.event_position;
                const std::size_t rl = static_cast<std::size_t>(r) * L + l;
                const double a = cap.alpha.values()[rl];

                auto brute = [&](const Tensor& influence, int width) {
                    int nonzero = 0;
                    double w = 0.0;
                    for (int i = 0; i < width; ++i) {
                        const double v = influence.values()[rl * width + i];
                        if (v != 0.0) {
                            ++nonzero;
                            w = a * v;
                        }
                    }
                    if (nonzero > 1) ++multi_nonzero;
                    return w;
                };
                if (brute(cap.inf_a, va) != row.weights.activity) ++mismatches;
                if (brute(cap.inf_r, vr) != row.weights.resource) ++mismatches;
                // the time stream is a scalar: its weight is alpha times the
                // time attention itself
                if (a * cap.beta_t.values()[rl] != row.weights.time) ++mismatches;
            }
        }
    }
    if (mismatches > 0 || multi_nonzero > 0) ok = false;
    std::ostringstream detail;
    detail << captures << " captures, " << mismatches << " mismatches, " << multi_nonzero
           << " multi-nonzero scans";
    report(4, "4", ok,
           "specialised per-event weights equal a brute-force nonzero scan of alpha times "
           "the influence vectors, exactly",
           detail.str());
}

// ---- criterion 5: synthetic learnability and explanation quality ------------

void criterion_synthetic() {
    const std::vector<Trace> traces = testing::synthetic_rule_log(5000, 11);
    const std::vector<PrefixTrace> prefixes = generate_all_prefixes(traces, 1, 1 << 20, false);

    const auto t0 = std::chrono::steady_clock::now();
    const TrainedModel shared_run = train_on_prefixes(prefixes, Architecture::Shared, 1, 10,
                                                      30, 30, 0.02, 64, 0.97);
    const TrainedModel spec_run = train_on_prefixes(prefixes, Architecture::Specialised, 1, 10,
                                                    30, 30, 0.02, 64, 0.97);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const bool ok_a = shared_run.accuracy >= 0.95 && spec_run.accuracy >= 0.95 &&
                      shared_run.epochs_run <= 30 && spec_run.epochs_run <= 30 && secs < 300.0;
    std::ostringstream da;
    da << "shared " << fmt(shared_run.accuracy) << " in " << shared_run.epochs_run
       << " epochs, specialised " << fmt(spec_run.accuracy) << " in " << spec_run.epochs_run
       << " epochs, " << fmt(secs, 1) << " s";
    report(5, "5a", ok_a,
           "both architectures learn the synthetic rule log to >=0.95 held-out accuracy "
           "within 30 epochs and 5 minutes",
           da.str());

    // After activity "A" the rule picks the next step from the resource on
    // that last event, so the decisive attribute is the resource at offset -1:
    // its cohort profile must peak there.
    int wins = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const TrainedModel run = train_on_prefixes(prefixes, Architecture::Specialised, seed,
                                                   8, 30, 30, 0.02, 64, 0.97);
        const GlobalExplanation g = global_explanation(run.artifact, run.test, "A", "M",
                                                       CohortSelector::Actual, 10);
        int best_offset = 0;
        double best = -1.0;
        for (const GlobalCell& cell : g.cells) {
            if (cell.category == "resource" && cell.mean_abs > best) {
                best = cell.mean_abs;
                best_offset = cell.offset;
            }
        }
        if (best_offset == -1) ++wins;
    }
    std::ostringstream db;
    db << wins << "/10 seeds put the peak mean-abs resource weight at offset -1";
    report(5, "5b", wins >= 9,
           "specialised global explanations rank the decisive attribute cell at offset -1 "
           "highest in >=9 of 10 seeds",
           db.str());
}

// ---- criterion 6: metrics oracle --------------------------------------------

void criterion_metrics_oracle() {
    bool ok = true;
    std::size_t mismatches = 0;
    std::mt19937_64 rng(4242);

    auto close = [](double a, double b) {
        return std::fabs(a - b) <= 1e-12 * std::max({1.0, std::fabs(a), std::fabs(b)});
    };

    for (int trial = 0; trial < 500; ++trial) {
        const int k = 2 + static_cast<int>(uniform01(rng) * 7.0);  // 2..8 classes
        ConfusionMatrix cm;
        for (int i = 0; i < k; ++i) cm.classes.push_back("c" + std::to_string(i));
        cm.counts.assign(static_cast<std::size_t>(k) * k, 0);
        std::int64_t total = 0;
        for (auto& c : cm.counts) {
            // sprinkle zeros so ghost classes and zero denominators show up
            c = uniform01(rng) < 0.25 ? 0 : static_cast<std::int64_t>(uniform01(rng) * 20.0);
            total += c;
        }
        if (total == 0) {
            cm.counts[0] = 1;
            total = 1;
        }
        const MetricReport r = metrics(cm);

        std::int64_t diag = 0;
        double macro_p = 0.0, macro_r = 0.0, macro_f = 0.0;
        double wp = 0.0, wr = 0.0, wf = 0.0;
        for (int c = 0; c < k; ++c) {
            const std::int64_t tp = cm.at(c, c);
            diag += tp;
            std::int64_t row = 0, col = 0;
            for (int j = 0; j < k; ++j) {
                row += cm.at(c, j);
                col += cm.at(j, c);
            }
            const std::int64_t fp = col - tp, fn = row - tp;
            const double p = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
            const double rec = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
            const double f1 =
                tp + fp + fn > 0 ? double(tp) / (double(tp) + 0.5 * double(fp + fn)) : 0.0;
            const ClassMetrics& m = r.per_class[static_cast<std::size_t>(c)];
            if (m.precision != p || m.recall != rec || m.f1 != f1 || m.support != row ||
                m.tn != total - tp - fp - fn ||
                m.precision_zero_division != (tp + fp == 0) ||
                m.recall_zero_division != (tp + fn == 0)) {
                ++mismatches;
            }
            macro_p += p;
            macro_r += rec;
            macro_f += f1;
            wp += double(row) * p;
            wr += double(row) * rec;
            wf += double(row) * f1;
        }
        if (r.accuracy != double(diag) / double(total) || !close(r.macro_precision, macro_p / k) ||
            !close(r.macro_recall, macro_r / k) || !close(r.macro_f1, macro_f / k) ||
            !close(r.weighted_precision, wp / double(total)) ||
            !close(r.weighted_recall, wr / double(total)) ||
            !close(r.weighted_f1, wf / double(total)) ||
            !close(r.weighted_recall, r.accuracy)) {
            ++mismatches;
        }
    }
    if (mismatches > 0) ok = false;
    report(6, "6", ok,
           "metrics on 500 random confusion matrices match an independent one-vs-rest "
           "recomputation; weighted recall equals accuracy",
           std::to_string(mismatches) + " mismatches");
}

// ---- criterion 7: published ANOVA tables ------------------------------------

void criterion_anova_tables() {
    struct PublishedAnova {
        const char* name;
        AnovaGroup a, b;
        double f, p;
    };
    const std::vector<PublishedAnova> tables = {
        {"complete", {"shared", 17277, 257684.0, 14.91486, 31.97845},
         {"specialised", 17277, 256137.0, 14.82532, 33.50063}, 2.11548, 0.14582},
        {"subset-a", {"shared", 5430, 25773.0, 4.74641, 6.58092},
         {"specialised", 5430, 25735.0, 4.73941, 6.34855}, 0.02057, 0.88597},
        {"subset-o", {"shared", 7842, 24220.0, 3.08850, 3.05045},
         {"specialised", 7842, 24579.0, 3.13428, 3.03859}, 2.69906, 0.10043},
        {"subset-w", {"shared", 12706, 28118.0, 2.21297, 2.38077},
         {"specialised", 12706, 28111.0, 2.21242, 2.45665}, 0.00080, 0.97748},
    };
    bool ok = true;
    double worst_f = 0.0, worst_p = 0.0;
    for (const PublishedAnova& t : tables) {
        const AnovaResult r = anova_from_summary({t.a, t.b});
        worst_f = std::max(worst_f, std::fabs(r.f - t.f));
        worst_p = std::max(worst_p, std::fabs(r.p_value - t.p));
        if (std::fabs(r.f - t.f) >= 1e-3 || std::fabs(r.p_value - t.p) >= 1e-3) ok = false;
    }
    report(7, "7", ok,
           "summary-mode ANOVA reproduces all four published comparison tables within 0.001",
           "worst |dF| " + fmt_sci(worst_f) + ", worst |dp| " + fmt_sci(worst_p));
}

// ---- criterion 8: data-preparation reproduction ------------------------------

void criterion_dataprep() {
    testing::TempDir dir("acceptance-fragment");
    testing::write_file(dir.file("fragment.csv"), testing::fragment_csv());
    LogProfile profile;
    profile.resource_column = "resource";
    const std::vector<Event> events =
        parse_log_file(dir.file("fragment.csv").string(), profile);
    const std::vector<Trace> traces = build_traces(events, profile);
    std::size_t total_events = 0;
    for (const Trace& t : traces) total_events += t.events.size();

    const bool ok_a = traces.size() == 2 && total_events == 17;
    report(8, "8a", ok_a, "bundled sample log fragment parses to 2 traces with 17 events",
           "got " + std::to_string(traces.size()) + " traces / " +
               std::to_string(total_events) + " events");

    std::vector<std::size_t> sizes;
    for (const Trace& t : traces) sizes.push_back(t.events.size());
    std::sort(sizes.begin(), sizes.end());
    const bool ok_b = sizes == std::vector<std::size_t>{6, 11};
    std::ostringstream db;
    db << "reference tabulation says 6 and 11; faithful grouping of the fragment's case ids "
          "yields ";
    for (std::size_t i = 0; i < sizes.size(); ++i) db << (i ? " and " : "") << sizes[i];
    report(8, "8b", ok_b, "fragment trace sizes match the tabulated reference split",
           db.str());

    const char* env = std::getenv("BPIC2012_LOG");
    const char* what_c =
        "preparing the public BPIC 2012 log reproduces the published corpus row "
        "(13087 cases, 10 activities, avg length 4.65)";
    if (env == nullptr || *env == '\0') {
        skip_check("8c", what_c, "set BPIC2012_LOG to the log file to enable");
        return;
    }
    const LogProfile bpic = bpic2012_a_profile(env);
    const std::vector<Event> bev = parse_log_file(env, bpic);
    const std::vector<Trace> btr = build_traces(bev, bpic);
    const LogSummary s = summarize(btr);
    const bool ok_c = s.cases == 13087 && s.distinct_activities == 10 &&
                      std::fabs(s.avg_case_length - 4.65) <= 0.005;
    std::ostringstream dc;
    dc << "got " << s.cases << " cases, " << s.distinct_activities << " activities, avg "
       << fmt(s.avg_case_length, 3);
    report(8, "8c", ok_c, what_c, dc.str());
}

// ---- criterion 9: byte determinism ------------------------------------------

void criterion_determinism() {
    testing::TempDir dir("acceptance-determinism");
    testing::write_file(dir.file("log.csv"), testing::synthetic_rule_csv(120, 5));

    RunConfig cfg;
    cfg.log_path = dir.file("log.csv").string();
    cfg.profile.resource_column = "resource";
    cfg.profile.timestamp_pattern = "%Y-%m-%dT%H:%M:%S.%fZ";
    cfg.out_dir = dir.file("out").string();
    cfg.architecture = Architecture::Specialised;
    cfg.hidden_size = 6;
    cfg.seed = 4;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.lr = 0.02;
    cfg.patience = 3;
    cfg.quiet = true;

    auto run_all = [&cfg]() {
        std::map<std::string, std::string> bytes;
        const PrepareResult prep = cmd_prepare(cfg);
        const TrainCommandResult tr = cmd_train(cfg);
        const EvaluateResult ev =
            cmd_evaluate(cfg, tr.runs[0].artifact_path, tr.test_prefixes_path);
        const ExplainResult ex = cmd_explain(cfg, tr.runs[0].artifact_path, ev.predictions_path,
                                             "S", "A", CohortSelector::Actual, 3, 10);
        for (const std::string& p :
             {prep.prefixes_path, prep.summary_path, tr.runs[0].artifact_path,
              tr.runs[0].log_path, tr.test_prefixes_path, ev.predictions_path,
              ev.metrics_path, ev.confusion_path, ex.local_path, ex.global_path,
              ex.plot_path}) {
            bytes[p] = testing::read_file(p);
        }
        return bytes;
    };
    const auto first = run_all();
    const auto second = run_all();

    std::size_t differing = 0;
    for (const auto& [path, content] : first) {
        auto it = second.find(path);
        if (it == second.end() || it->second != content) ++differing;
    }
    const bool ok = !first.empty() && first.size() == second.size() && differing == 0;
    report(9, "9", ok,
           "re-running prepare/train/evaluate/explain under the same seed reproduces every "
           "output byte for byte",
           std::to_string(first.size()) + " files compared, " + std::to_string(differing) +
               " differed");
}

// ---- criterion 10: full-scale accuracy (informational) ----------------------

void criterion_fullscale() {
    const char* what =
        "full training on BPIC 2012 A with default settings lands within 0.05 of the "
        "published 0.75 accuracy (informational)";
    const char* env = std::getenv("BPIC2012_LOG");
    if (env == nullptr || *env == '\0') {
        skip_check("10", what, "set BPIC2012_LOG to the log file to enable");
        return;
    }
    const LogProfile bpic = bpic2012_a_profile(env);
    const std::vector<Event> events = parse_log_file(env, bpic);
    const std::vector<Trace> traces = build_traces(events, bpic);
    const std::vector<PrefixTrace> prefixes = generate_all_prefixes(traces, 1, 1 << 20, false);

    bool ok = true;
    std::ostringstream detail;
    for (Architecture arch : {Architecture::Shared, Architecture::Specialised}) {
        const TrainedModel run =
            train_on_prefixes(prefixes, arch, 1, 50, 50, 5, 0.001, 64, -1.0);
        detail << to_string(arch) << " " << fmt(run.accuracy) << " in " << run.epochs_run
               << " epochs; ";
        if (std::fabs(run.accuracy - 0.75) > 0.05) ok = false;
    }
    report(10, "10", ok, what, detail.str());
}

}  // namespace

int main() {
    std::cout << kToolName << " " << kToolVersion << " acceptance run" << std::endl;

    struct Entry {
        int number;
        const char* id;
        const char* what;
        std::function<void()> fn;
    };
    const std::vector<Entry> checks = {
        {1, "1", "gradient correctness", criterion_gradients},
        {2, "2", "forward-pass oracle equivalence", criterion_forward_oracle},
        {3, "3", "attention invariants", criterion_attention_invariants},
        {4, "4", "extraction brute-force equivalence", criterion_extraction_bruteforce},
        {5, "5", "synthetic learnability and explanations", criterion_synthetic},
        {6, "6", "metrics oracle", criterion_metrics_oracle},
        {7, "7", "published ANOVA tables", criterion_anova_tables},
        {8, "8", "data-preparation reproduction", criterion_dataprep},
        {9, "9", "byte determinism", criterion_determinism},
        {10, "10", "full-scale accuracy", criterion_fullscale},
    };
    for (const Entry& c : checks) {
        try {
            c.fn();
        } catch (const std::exception& e) {
            report(c.number, c.id, false, c.what, std::string("unhandled error: ") + e.what());
        }
    }

    std::cout << "\nacceptance summary: " << g_passed << " passed, " << g_failed
              << " failed, " << g_skipped << " skipped; exit "
              << g_failed_gating.size() << std::endl;
    return static_cast<int>(g_failed_gating.size());
}
