#include "procattn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace procattn {

namespace {

std::vector<std::size_t> row_major_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
        st[i] = st[i + 1] * static_cast<std::size_t>(s[i + 1]);
    }
    return st;
}

// Right-aligned broadcast of two shapes; throws when incompatible.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    const int n = std::max(a.size(), b.size());
    Shape out(n, 1);
    for (int i = 0; i < n; ++i) {
        const int da = i < n - static_cast<int>(a.size()) ? 1 : a[i - (n - a.size())];
        const int db = i < n - static_cast<int>(b.size()) ? 1 : b[i - (n - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw NumericError(std::string(op) + ": shapes " + shape_to_string(a) +
                               " and " + shape_to_string(b) + " do not broadcast");
        }
        out[i] = std::max(da, db);
    }
    return out;
}

// Maps flat indices in the broadcast output to flat indices in each input.
struct BroadcastMap {
    Shape out_shape;
    std::vector<std::size_t> out_strides;
    std::vector<std::size_t> a_strides;  // 0 where a is broadcast
    std::vector<std::size_t> b_strides;

    BroadcastMap(const Shape& a, const Shape& b, const char* op) {
        out_shape = broadcast_shape(a, b, op);
        out_strides = row_major_strides(out_shape);
        a_strides.assign(out_shape.size(), 0);
        b_strides.assign(out_shape.size(), 0);
        const auto sa = row_major_strides(a);
        const auto sb = row_major_strides(b);
        const int n = static_cast<int>(out_shape.size());
        for (int i = 0; i < n; ++i) {
            const int ia = i - (n - static_cast<int>(a.size()));
            const int ib = i - (n - static_cast<int>(b.size()));
            if (ia >= 0 && a[ia] != 1) a_strides[i] = sa[ia];
            if (ib >= 0 && b[ib] != 1) b_strides[i] = sb[ib];
        }
    }
};

// Calls fn(out_flat, a_flat, b_flat) for every output element.
template <typename Fn>
void for_each_broadcast(const BroadcastMap& map, Fn&& fn) {
    const std::size_t total = shape_numel(map.out_shape);
    const int n = static_cast<int>(map.out_shape.size());
    std::vector<int> idx(n, 0);
    std::size_t ai = 0, bi = 0;
    for (std::size_t flat = 0; flat < total; ++flat) {
        fn(flat, ai, bi);
        for (int d = n - 1; d >= 0; --d) {
            ++idx[d];
            ai += map.a_strides[d];
            bi += map.b_strides[d];
            if (idx[d] < map.out_shape[d]) break;
            ai -= map.a_strides[d] * static_cast<std::size_t>(map.out_shape[d]);
            bi -= map.b_strides[d] * static_cast<std::size_t>(map.out_shape[d]);
            idx[d] = 0;
        }
    }
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

}  // namespace

std::string shape_to_string(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d < 0) throw NumericError("negative dimension in shape " + shape_to_string(s));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    Tensor t;
    t.d_ = std::make_shared<TensorData>();
    t.d_->shape = std::move(shape);
    t.d_->value.assign(shape_numel(t.d_->shape), 0.0);
    t.d_->requires_grad = requires_grad;
    if (requires_grad) t.d_->grad.assign(t.d_->value.size(), 0.0);
    return t;
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.d_->value.begin(), t.d_->value.end(), v);
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw NumericError("from_data: " + std::to_string(values.size()) +
                           " values for shape " + shape_to_string(shape));
    }
    Tensor t;
    t.d_ = std::make_shared<TensorData>();
    t.d_->shape = std::move(shape);
    t.d_->value = std::move(values);
    t.d_->requires_grad = requires_grad;
    if (requires_grad) t.d_->grad.assign(t.d_->value.size(), 0.0);
    return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data({1}, {v}, requires_grad);
}

Tensor Tensor::glorot(Shape shape, int fan_in, int fan_out, std::mt19937_64& rng) {
    Tensor t = zeros(std::move(shape), true);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : t.d_->value) v = (2.0 * uniform01(rng) - 1.0) * limit;
    return t;
}

void Tensor::set_requires_grad(bool on) {
    d_->requires_grad = on;
    if (on && d_->grad.size() != d_->value.size()) d_->grad.assign(d_->value.size(), 0.0);
    if (!on) d_->grad.clear();
}

void Tensor::zero_grad() {
    if (d_ && d_->requires_grad) std::fill(d_->grad.begin(), d_->grad.end(), 0.0);
}

void Tape::record(std::function<void()> fn) { records_.push_back(std::move(fn)); }

Tensor Tape::make_output(Shape shape, bool needs_grad) {
    return Tensor::zeros(std::move(shape), grad_enabled_ && needs_grad);
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() < 2 || b.ndim() != 2) {
        throw NumericError("matmul: need [...,M,K] x [K,N], got " +
                           shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
    }
    const int K = a.dim(a.ndim() - 1);
    const int M = a.dim(a.ndim() - 2);
    if (b.dim(0) != K) {
        throw NumericError("matmul: inner dims differ: " + shape_to_string(a.shape()) +
                           " x " + shape_to_string(b.shape()));
    }
    const int N = b.dim(1);
    std::size_t batch = 1;
    Shape out_shape;
    for (int i = 0; i + 2 < a.ndim(); ++i) {
        batch *= static_cast<std::size_t>(a.dim(i));
        out_shape.push_back(a.dim(i));
    }
    out_shape.push_back(M);
    out_shape.push_back(N);

    Tensor out = make_output(out_shape, a.requires_grad() || b.requires_grad());
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out.values().data();
    for (std::size_t p = 0; p < batch; ++p) {
        const double* ap = av + p * static_cast<std::size_t>(M) * K;
        double* op = ov + p * static_cast<std::size_t>(M) * N;
        for (int i = 0; i < M; ++i) {
            for (int k = 0; k < K; ++k) {
                const double aik = ap[static_cast<std::size_t>(i) * K + k];
                if (aik == 0.0) continue;
                const double* brow = bv + static_cast<std::size_t>(k) * N;
                double* orow = op + static_cast<std::size_t>(i) * N;
                for (int j = 0; j < N; ++j) orow[j] += aik * brow[j];
            }
        }
    }

    if (out.requires_grad()) {
        Tensor ac = a, bc = b, oc = out;
        record([ac, bc, oc, batch, M, N, K]() mutable {
            const double* og = oc.grads().data();
            const double* av = ac.values().data();
            const double* bv = bc.values().data();
            if (ac.requires_grad()) {
                double* ag = ac.grads().data();
                // dA = dC * B^T
                for (std::size_t p = 0; p < batch; ++p) {
                    const double* ogp = og + p * static_cast<std::size_t>(M) * N;
                    double* agp = ag + p * static_cast<std::size_t>(M) * K;
                    for (int i = 0; i < M; ++i) {
                        for (int j = 0; j < N; ++j) {
                            const double g = ogp[static_cast<std::size_t>(i) * N + j];
                            if (g == 0.0) continue;
                            for (int k = 0; k < K; ++k) {
                                agp[static_cast<std::size_t>(i) * K + k] +=
                                    g * bv[static_cast<std::size_t>(k) * N + j];
                            }
                        }
                    }
                }
            }
            if (bc.requires_grad()) {
                double* bg = bc.grads().data();
                // dB = sum_p A_p^T * dC_p
                for (std::size_t p = 0; p < batch; ++p) {
                    const double* ogp = og + p * static_cast<std::size_t>(M) * N;
                    const double* avp = av + p * static_cast<std::size_t>(M) * K;
                    for (int i = 0; i < M; ++i) {
                        for (int k = 0; k < K; ++k) {
                            const double aik = avp[static_cast<std::size_t>(i) * K + k];
                            if (aik == 0.0) continue;
                            const double* orow = ogp + static_cast<std::size_t>(i) * N;
                            double* brow = bg + static_cast<std::size_t>(k) * N;
                            for (int j = 0; j < N; ++j) brow[j] += aik * orow[j];
                        }
                    }
                }
            }
        });
    }
    return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    const bool needs = a.requires_grad() || b.requires_grad();
    if (same_shape(a.shape(), b.shape())) {
        Tensor out = make_output(a.shape(), needs);
        const auto& av = a.values();
        const auto& bv = b.values();
        auto& ov = out.values();
        for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
        if (out.requires_grad()) {
            Tensor ac = a, bc = b, oc = out;
            record([ac, bc, oc]() mutable {
                const auto& og = oc.grads();
                if (ac.requires_grad()) {
                    auto& ag = ac.grads();
                    for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i];
                }
                if (bc.requires_grad()) {
                    auto& bg = bc.grads();
                    for (std::size_t i = 0; i < og.size(); ++i) bg[i] += og[i];
                }
            });
        }
        return out;
    }
    auto map = std::make_shared<BroadcastMap>(a.shape(), b.shape(), "add");
    Tensor out = make_output(map->out_shape, needs);
    {
        const auto& av = a.values();
        const auto& bv = b.values();
        auto& ov = out.values();
        for_each_broadcast(*map, [&](std::size_t o, std::size_t ai, std::size_t bi) {
            ov[o] = av[ai] + bv[bi];
        });
    }
    if (out.requires_grad()) {
        Tensor ac = a, bc = b, oc = out;
        record([ac, bc, oc, map]() mutable {
            const auto& og = oc.grads();
            const bool ga = ac.requires_grad();
            const bool gb = bc.requires_grad();
            auto* ag = ga ? &ac.grads() : nullptr;
            auto* bg = gb ? &bc.grads() : nullptr;
            for_each_broadcast(*map, [&](std::size_t o, std::size_t ai, std::size_t bi) {
                if (ga) (*ag)[ai] += og[o];
                if (gb) (*bg)[bi] += og[o];
            });
        });
    }
    return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    const bool needs = a.requires_grad() || b.requires_grad();
    if (same_shape(a.shape(), b.shape())) {
        Tensor out = make_output(a.shape(), needs);
        const auto& av = a.values();
        const auto& bv = b.values();
        auto& ov = out.values();
        for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
        if (out.requires_grad()) {
            Tensor ac = a, bc = b, oc = out;
            record([ac, bc, oc]() mutable {
                const auto& og = oc.grads();
                const auto& av = ac.values();
                const auto& bv = bc.values();
                if (ac.requires_grad()) {
                    auto& ag = ac.grads();
                    for (std::size_t i = 0; i < og.size(); ++i) ag[i] += og[i] * bv[i];
                }
                if (bc.requires_grad()) {
                    auto& bg = bc.grads();
                    for (std::size_t i = 0; i < og.size(); ++i) bg[i] += og[i] * av[i];
                }
            });
        }
        return out;
    }
    auto map = std::make_shared<BroadcastMap>(a.shape(), b.shape(), "mul");
    Tensor out = make_output(map->out_shape, needs);
    {
        const auto& av = a.values();
        const auto& bv = b.values();
        auto& ov = out.values();
        for_each_broadcast(*map, [&](std::size_t o, std::size_t ai, std::size_t bi) {
            ov[o] = av[ai] * bv[bi];
        });
    }
    if (out.requires_grad()) {
        Tensor ac = a, bc = b, oc = out;
        record([ac, bc, oc, map]() mutable {
            const auto& og = oc.grads();
            const auto& av = ac.values();
            const auto& bv = bc.values();
            const bool ga = ac.requires_grad();
            const bool gb = bc.requires_grad();
            auto* ag = ga ? &ac.grads() : nullptr;
            auto* bg = gb ? &bc.grads() : nullptr;
            for_each_broadcast(*map, [&](std::size_t o, std::size_t ai, std::size_t bi) {
                if (ga) (*ag)[ai] += og[o] * bv[bi];
                if (gb) (*bg)[bi] += og[o] * av[ai];
            });
        });
    }
    return out;
}

Tensor Tape::concat_last_axis(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw NumericError("concat_last_axis: no inputs");
    Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
    int total_last = 0;
    bool needs = false;
    for (const Tensor& p : parts) {
        Shape pl(p.shape().begin(), p.shape().end() - 1);
        if (pl != lead) {
            throw NumericError("concat_last_axis: leading dims differ: " +
                               shape_to_string(parts[0].shape()) + " vs " +
                               shape_to_string(p.shape()));
        }
        total_last += p.dim(p.ndim() - 1);
        needs = needs || p.requires_grad();
    }
    Shape out_shape = lead;
    out_shape.push_back(total_last);
    Tensor out = make_output(out_shape, needs);

    const std::size_t rows = shape_numel(lead);
    auto& ov = out.values();
    std::size_t col = 0;
    for (const Tensor& p : parts) {
        const std::size_t w = static_cast<std::size_t>(p.dim(p.ndim() - 1));
        const auto& pv = p.values();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy(pv.begin() + r * w, pv.begin() + (r + 1) * w,
                      ov.begin() + r * static_cast<std::size_t>(total_last) + col);
        }
        col += w;
    }

    if (out.requires_grad()) {
        std::vector<Tensor> pc = parts;
        Tensor oc = out;
        const std::size_t tl = static_cast<std::size_t>(total_last);
        record([pc, oc, rows, tl]() mutable {
            const auto& og = oc.grads();
            std::size_t col = 0;
            for (Tensor& p : pc) {
                const std::size_t w = static_cast<std::size_t>(p.dim(p.ndim() - 1));
                if (p.requires_grad()) {
                    auto& pg = p.grads();
                    for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t j = 0; j < w; ++j) {
                            pg[r * w + j] += og[r * tl + col + j];
                        }
                    }
                }
                col += w;
            }
        });
    }
    return out;
}

Tensor Tape::sum_over_axis(const Tensor& t, int axis) {
    if (axis < 0 || axis >= t.ndim()) {
        throw NumericError("sum_over_axis: axis " + std::to_string(axis) +
                           " out of range for " + shape_to_string(t.shape()));
    }
    Shape out_shape;
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < t.ndim(); ++i) {
        if (i < axis) outer *= static_cast<std::size_t>(t.dim(i));
        if (i > axis) inner *= static_cast<std::size_t>(t.dim(i));
        if (i != axis) out_shape.push_back(t.dim(i));
    }
    const std::size_t n = static_cast<std::size_t>(t.dim(axis));
    Tensor out = make_output(out_shape, t.requires_grad());
    const auto& tv = t.values();
    auto& ov = out.values();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t base = (o * n + k) * inner;
            for (std::size_t j = 0; j < inner; ++j) ov[o * inner + j] += tv[base + j];
        }
    }
    if (out.requires_grad()) {
        Tensor tc = t, oc = out;
        record([tc, oc, outer, inner, n]() mutable {
            const auto& og = oc.grads();
            auto& tg = tc.grads();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t k = 0; k < n; ++k) {
                    const std::size_t base = (o * n + k) * inner;
                    for (std::size_t j = 0; j < inner; ++j) tg[base + j] += og[o * inner + j];
                }
            }
        });
    }
    return out;
}

Tensor Tape::tanh(const Tensor& t) {
    Tensor out = make_output(t.shape(), t.requires_grad());
    const auto& tv = t.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(tv[i]);
    if (out.requires_grad()) {
        Tensor tc = t, oc = out;
        record([tc, oc]() mutable {
            const auto& og = oc.grads();
            const auto& oy = oc.values();
            auto& tg = tc.grads();
            for (std::size_t i = 0; i < og.size(); ++i) tg[i] += og[i] * (1.0 - oy[i] * oy[i]);
        });
    }
    return out;
}

Tensor Tape::sigmoid(const Tensor& t) {
    Tensor out = make_output(t.shape(), t.requires_grad());
    const auto& tv = t.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) {
        const double x = tv[i];
        ov[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                         : std::exp(x) / (1.0 + std::exp(x));
    }
    if (out.requires_grad()) {
        Tensor tc = t, oc = out;
        record([tc, oc]() mutable {
            const auto& og = oc.grads();
            const auto& oy = oc.values();
            auto& tg = tc.grads();
            for (std::size_t i = 0; i < og.size(); ++i) tg[i] += og[i] * oy[i] * (1.0 - oy[i]);
        });
    }
    return out;
}

Tensor Tape::softmax_masked(const Tensor& t, const Tensor& mask) {
    if (t.shape() != mask.shape()) {
        throw NumericError("softmax_masked: mask shape " + shape_to_string(mask.shape()) +
                           " does not match " + shape_to_string(t.shape()));
    }
    const std::size_t cols = static_cast<std::size_t>(t.dim(t.ndim() - 1));
    const std::size_t rows = t.size() / cols;
    Tensor out = make_output(t.shape(), t.requires_grad());
    const auto& tv = t.values();
    const auto& mv = mask.values();
    auto& ov = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * cols;
        double mx = -1e308;
        bool any = false;
        for (std::size_t j = 0; j < cols; ++j) {
            if (mv[base + j] != 0.0) {
                mx = any ? std::max(mx, tv[base + j]) : tv[base + j];
                any = true;
            }
        }
        if (!any) continue;  // fully masked row stays all-zero
        double z = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            if (mv[base + j] != 0.0) {
                ov[base + j] = std::exp(tv[base + j] - mx);
                z += ov[base + j];
            }
        }
        for (std::size_t j = 0; j < cols; ++j) ov[base + j] /= z;
    }
    if (out.requires_grad()) {
        Tensor tc = t, oc = out;
        record([tc, oc, rows, cols]() mutable {
            const auto& og = oc.grads();
            const auto& oy = oc.values();
            auto& tg = tc.grads();
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t base = r * cols;
                double dot = 0.0;
                for (std::size_t j = 0; j < cols; ++j) dot += og[base + j] * oy[base + j];
                // masked entries have y = 0, so they contribute and receive nothing
                for (std::size_t j = 0; j < cols; ++j) {
                    tg[base + j] += oy[base + j] * (og[base + j] - dot);
                }
            }
        });
    }
    return out;
}

Tensor Tape::softmax(const Tensor& t) {
    Tensor ones = Tensor::full(t.shape(), 1.0);
    return softmax_masked(t, ones);
}

Tensor Tape::embedding_lookup(const Tensor& table, const std::vector<int>& indices,
                              const Shape& index_shape) {
    if (table.ndim() != 2) {
        throw NumericError("embedding_lookup: table must be [V,D], got " +
                           shape_to_string(table.shape()));
    }
    if (shape_numel(index_shape) != indices.size()) {
        throw NumericError("embedding_lookup: " + std::to_string(indices.size()) +
                           " indices for shape " + shape_to_string(index_shape));
    }
    const int V = table.dim(0);
    const std::size_t D = static_cast<std::size_t>(table.dim(1));
    Shape out_shape = index_shape;
    out_shape.push_back(static_cast<int>(D));
    Tensor out = make_output(out_shape, table.requires_grad());
    const auto& wv = table.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int ix = indices[i];
        if (ix < 0 || ix >= V) {
            throw NumericError("embedding_lookup: index " + std::to_string(ix) +
                               " outside table of " + std::to_string(V) + " rows");
        }
        std::copy(wv.begin() + static_cast<std::size_t>(ix) * D,
                  wv.begin() + (static_cast<std::size_t>(ix) + 1) * D, ov.begin() + i * D);
    }
    if (out.requires_grad()) {
        Tensor wc = table, oc = out;
        auto ic = std::make_shared<std::vector<int>>(indices);
        record([wc, oc, ic, D]() mutable {
            const auto& og = oc.grads();
            auto& wg = wc.grads();
            for (std::size_t i = 0; i < ic->size(); ++i) {
                const std::size_t row = static_cast<std::size_t>((*ic)[i]) * D;
                for (std::size_t j = 0; j < D; ++j) wg[row + j] += og[i * D + j];
            }
        });
    }
    return out;
}

Tensor Tape::cross_entropy(const Tensor& t, const std::vector<int>& targets,
                           CrossEntropyInput kind) {
    if (t.ndim() != 2) {
        throw NumericError("cross_entropy: need [batch, classes], got " +
                           shape_to_string(t.shape()));
    }
    const std::size_t B = static_cast<std::size_t>(t.dim(0));
    const std::size_t C = static_cast<std::size_t>(t.dim(1));
    if (targets.size() != B) {
        throw NumericError("cross_entropy: " + std::to_string(targets.size()) +
                           " targets for batch " + std::to_string(B));
    }
    for (int y : targets) {
        if (y < 0 || static_cast<std::size_t>(y) >= C) {
            throw NumericError("cross_entropy: target " + std::to_string(y) +
                               " outside " + std::to_string(C) + " classes");
        }
    }
    const auto& tv = t.values();
    double total = 0.0;
    std::vector<double> probs;  // filled in logits mode for the backward pass
    if (kind == CrossEntropyInput::Logits) {
        probs.resize(B * C);
        for (std::size_t r = 0; r < B; ++r) {
            const std::size_t base = r * C;
            double mx = tv[base];
            for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, tv[base + j]);
            double z = 0.0;
            for (std::size_t j = 0; j < C; ++j) {
                probs[base + j] = std::exp(tv[base + j] - mx);
                z += probs[base + j];
            }
            for (std::size_t j = 0; j < C; ++j) probs[base + j] /= z;
            const double lse = mx + std::log(z);
            total += lse - tv[base + static_cast<std::size_t>(targets[r])];
        }
    } else {
        for (std::size_t r = 0; r < B; ++r) {
            const double p = tv[r * C + static_cast<std::size_t>(targets[r])];
            total += -std::log(std::max(p, 1e-300));
        }
    }
    Tensor out = make_output({1}, t.requires_grad());
    out.values()[0] = total / static_cast<double>(B);

    if (out.requires_grad()) {
        Tensor tc = t, oc = out;
        auto yc = std::make_shared<std::vector<int>>(targets);
        auto pc = std::make_shared<std::vector<double>>(std::move(probs));
        record([tc, oc, yc, pc, B, C, kind]() mutable {
            const double g = oc.grads()[0] / static_cast<double>(B);
            auto& tg = tc.grads();
            if (kind == CrossEntropyInput::Logits) {
                const auto& p = *pc;
                for (std::size_t r = 0; r < B; ++r) {
                    const std::size_t base = r * C;
                    for (std::size_t j = 0; j < C; ++j) tg[base + j] += g * p[base + j];
                    tg[base + static_cast<std::size_t>((*yc)[r])] -= g;
                }
            } else {
                const auto& tv = tc.values();
                for (std::size_t r = 0; r < B; ++r) {
                    const std::size_t at = r * C + static_cast<std::size_t>((*yc)[r]);
                    tg[at] += -g / std::max(tv[at], 1e-300);
                }
            }
        });
    }
    return out;
}

Tensor Tape::reshape(const Tensor& t, Shape new_shape) {
    if (shape_numel(new_shape) != t.size()) {
        throw NumericError("reshape: " + shape_to_string(t.shape()) + " -> " +
                           shape_to_string(new_shape) + " changes element count");
    }
    Tensor out = make_output(new_shape, t.requires_grad());
    out.values() = t.values();
    if (out.requires_grad()) {
        Tensor tc = t, oc = out;
        record([tc, oc]() mutable {
            const auto& og = oc.grads();
            auto& tg = tc.grads();
            for (std::size_t i = 0; i < og.size(); ++i) tg[i] += og[i];
        });
    }
    return out;
}

Tensor Tape::slice_time(const Tensor& t, int step) {
    if (t.ndim() < 2) throw NumericError("slice_time: need at least 2 dims");
    const int L = t.dim(1);
    if (step < 0 || step >= L) {
        throw NumericError("slice_time: step " + std::to_string(step) + " outside [0," +
                           std::to_string(L) + ")");
    }
    const std::size_t B = static_cast<std::size_t>(t.dim(0));
    std::size_t F = 1;
    Shape out_shape{t.dim(0)};
    for (int i = 2; i < t.ndim(); ++i) {
        F *= static_cast<std::size_t>(t.dim(i));
        out_shape.push_back(t.dim(i));
    }
    Tensor out = make_output(out_shape, t.requires_grad());
    const auto& tv = t.values();
    auto& ov = out.values();
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t src = (b * static_cast<std::size_t>(L) + static_cast<std::size_t>(step)) * F;
        std::copy(tv.begin() + src, tv.begin() + src + F, ov.begin() + b * F);
    }
    if (out.requires_grad()) {
        Tensor tc = t, oc = out;
        const std::size_t Ls = static_cast<std::size_t>(L), st = static_cast<std::size_t>(step);
        record([tc, oc, B, F, Ls, st]() mutable {
            const auto& og = oc.grads();
            auto& tg = tc.grads();
            for (std::size_t b = 0; b < B; ++b) {
                const std::size_t dst = (b * Ls + st) * F;
                for (std::size_t j = 0; j < F; ++j) tg[dst + j] += og[b * F + j];
            }
        });
    }
    return out;
}

Tensor Tape::stack_time(const std::vector<Tensor>& steps) {
    if (steps.empty()) throw NumericError("stack_time: no inputs");
    const Shape& s0 = steps[0].shape();
    bool needs = false;
    for (const Tensor& s : steps) {
        if (s.shape() != s0) {
            throw NumericError("stack_time: step shapes differ: " + shape_to_string(s0) +
                               " vs " + shape_to_string(s.shape()));
        }
        needs = needs || s.requires_grad();
    }
    const std::size_t B = static_cast<std::size_t>(s0[0]);
    const std::size_t L = steps.size();
    std::size_t F = 1;
    Shape out_shape{s0[0], static_cast<int>(L)};
    for (std::size_t i = 1; i < s0.size(); ++i) {
        F *= static_cast<std::size_t>(s0[i]);
        out_shape.push_back(s0[i]);
    }
    Tensor out = make_output(out_shape, needs);
    auto& ov = out.values();
    for (std::size_t l = 0; l < L; ++l) {
        const auto& sv = steps[l].values();
        for (std::size_t b = 0; b < B; ++b) {
            std::copy(sv.begin() + b * F, sv.begin() + (b + 1) * F,
                      ov.begin() + (b * L + l) * F);
        }
    }
    if (out.requires_grad()) {
        std::vector<Tensor> sc = steps;
        Tensor oc = out;
        record([sc, oc, B, L, F]() mutable {
            const auto& og = oc.grads();
            for (std::size_t l = 0; l < L; ++l) {
                if (!sc[l].requires_grad()) continue;
                auto& sg = sc[l].grads();
                for (std::size_t b = 0; b < B; ++b) {
                    for (std::size_t j = 0; j < F; ++j) sg[b * F + j] += og[(b * L + l) * F + j];
                }
            }
        });
    }
    return out;
}

Tensor Tape::reverse_time(const Tensor& t) {
    if (t.ndim() < 2) throw NumericError("reverse_time: need at least 2 dims");
    const std::size_t B = static_cast<std::size_t>(t.dim(0));
    const std::size_t L = static_cast<std::size_t>(t.dim(1));
    std::size_t F = 1;
    for (int i = 2; i < t.ndim(); ++i) F *= static_cast<std::size_t>(t.dim(i));
    Tensor out = make_output(t.shape(), t.requires_grad());
    const auto& tv = t.values();
    auto& ov = out.values();
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t l = 0; l < L; ++l) {
            const std::size_t src = (b * L + l) * F;
            const std::size_t dst = (b * L + (L - 1 - l)) * F;
            std::copy(tv.begin() + src, tv.begin() + src + F, ov.begin() + dst);
        }
    }
    if (out.requires_grad()) {
        Tensor tc = t, oc = out;
        record([tc, oc, B, L, F]() mutable {
            const auto& og = oc.grads();
            auto& tg = tc.grads();
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t l = 0; l < L; ++l) {
                    const std::size_t src = (b * L + (L - 1 - l)) * F;
                    const std::size_t dst = (b * L + l) * F;
                    for (std::size_t j = 0; j < F; ++j) tg[dst + j] += og[src + j];
                }
            }
        });
    }
    return out;
}

Tensor Tape::slice_last_axis(const Tensor& t, int from, int len) {
    const int C = t.dim(t.ndim() - 1);
    if (from < 0 || len <= 0 || from + len > C) {
        throw NumericError("slice_last_axis: [" + std::to_string(from) + "," +
                           std::to_string(from + len) + ") outside width " + std::to_string(C));
    }
    Shape out_shape = t.shape();
    out_shape.back() = len;
    const std::size_t rows = t.size() / static_cast<std::size_t>(C);
    Tensor out = make_output(out_shape, t.requires_grad());
    const auto& tv = t.values();
    auto& ov = out.values();
    const std::size_t Cw = static_cast<std::size_t>(C), w = static_cast<std::size_t>(len),
                      off = static_cast<std::size_t>(from);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy(tv.begin() + r * Cw + off, tv.begin() + r * Cw + off + w, ov.begin() + r * w);
    }
    if (out.requires_grad()) {
        Tensor tc = t, oc = out;
        record([tc, oc, rows, Cw, w, off]() mutable {
            const auto& og = oc.grads();
            auto& tg = tc.grads();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < w; ++j) tg[r * Cw + off + j] += og[r * w + j];
            }
        });
    }
    return out;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.requires_grad()) {
        throw NumericError("backward: loss does not carry a gradient");
    }
    if (loss.size() != 1) {
        throw NumericError("backward: loss must be a scalar, got " +
                           shape_to_string(loss.shape()));
    }
    Tensor lc = loss;
    lc.grads()[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)();
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& value = params_[i].values();
        const auto& grad = params_[i].grads();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < value.size(); ++j) {
            const double g = grad[j];
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            value[j] -= cfg_.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

}  // namespace procattn
