#include "tfh/autodiff.hpp"

#include "tfh/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace tfh {

const Tensor &Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, true});
    return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter &p) {
    nodes_.push_back(Node{p.value, {}, {}, {}, &p, true});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
    bool needs = false;
    for (auto id : inputs) needs = needs || nodes_.at(id).requires_grad;
    Node node{std::move(value), {}, std::move(inputs), {}, nullptr, needs};
    if (needs) node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_of(std::size_t id) {
    auto &n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
}

std::span<const double> Tape::grad(const Var &v) const {
    if (v.tape_ != this) throw std::invalid_argument("variable belongs to a different tape");
    return nodes_[v.id()].grad;
}

void Tape::backward(const Var &loss) {
    if (loss.tape_ != this) throw std::invalid_argument("loss belongs to a different tape");
    if (backward_done_) throw std::logic_error("backward() called twice on the same tape; re-run the forward pass");
    auto &root = nodes_[loss.id()];
    if (root.value.size() != 1) throw DimensionError("backward() needs a scalar loss, got " + to_string(root.value.shape()));
    if (!root.requires_grad) throw std::logic_error("loss is detached: no participating leaf reaches it");
    backward_done_ = true;

    grad_of(loss.id())[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        auto &n = nodes_[i];
        if (n.grad.empty()) continue;
        if (n.backward) n.backward(*this, nodes_[i].grad);
        if (n.param) {
            auto &pg = n.param->grad;
            if (pg.size() != n.grad.size()) pg.assign(n.grad.size(), 0.0);
            for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
        }
    }
}

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "gelu"; }

Activation activation_from_string(const std::string &s) {
    if (s == "relu") return Activation::relu;
    if (s == "gelu") return Activation::gelu;
    throw ValidationError("unknown activation '" + s + "' (expected relu or gelu)");
}

namespace {

void same_tape(const Var &a, const Var &b) {
    if (&a.tape() != &b.tape()) throw std::invalid_argument("operands live on different tapes");
}

void require_matrix(const Var &a, const char *op) {
    if (a.value().rank() != 2)
        throw DimensionError(std::string(op) + " expects a matrix, got " + to_string(a.shape()));
}

} // namespace

Var matmul(const Var &a, const Var &b) {
    same_tape(a, b);
    const auto &A = a.value();
    const auto &B = b.value();
    if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
        throw DimensionError("matmul shape mismatch: " + to_string(A.shape()) + " x " + to_string(B.shape()));
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor C({m, n});
    const double *pa = A.data().data();
    const double *pb = B.data().data();
    double *pc = C.data().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double *brow = pb + p * n;
            double *crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    const auto ia = a.id(), ib = b.id();
    return a.tape().record(std::move(C), {ia, ib}, [ia, ib, m, k, n](Tape &t, std::span<const double> dc) {
        const double *pa = t.value(ia).data().data();
        const double *pb = t.value(ib).data().data();
        if (t.requires_grad(ia)) {
            auto da = t.grad_of(ia);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += dc[i * n + j] * pb[p * n + j];
                    da[i * k + p] += s;
                }
        }
        if (t.requires_grad(ib)) {
            auto db = t.grad_of(ib);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = pa[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) db[p * n + j] += av * dc[i * n + j];
                }
        }
    });
}

Var elementwise(const Var &a, const Var &b, ElementwiseKind kind) {
    same_tape(a, b);
    const auto &A = a.value();
    const auto &B = b.value();
    bool broadcast = false;
    if (A.shape() != B.shape()) {
        if (B.rank() == 1 && A.rank() >= 1 && B.dim(0) == A.shape().back())
            broadcast = true;
        else
            throw DimensionError("elementwise shape mismatch: " + to_string(A.shape()) + " vs " + to_string(B.shape()));
    }
    const std::size_t width = B.size();
    Tensor C(A.shape());
    for (std::size_t i = 0; i < A.size(); ++i) {
        const double bv = B[broadcast ? i % width : i];
        switch (kind) {
        case ElementwiseKind::add: C[i] = A[i] + bv; break;
        case ElementwiseKind::sub: C[i] = A[i] - bv; break;
        case ElementwiseKind::mul: C[i] = A[i] * bv; break;
        }
    }
    const auto ia = a.id(), ib = b.id();
    return a.tape().record(std::move(C), {ia, ib}, [ia, ib, kind, broadcast, width](Tape &t, std::span<const double> dc) {
        const auto &A = t.value(ia);
        const auto &B = t.value(ib);
        const bool ga = t.requires_grad(ia), gb = t.requires_grad(ib);
        std::span<double> da, db;
        if (ga) da = t.grad_of(ia);
        if (gb) db = t.grad_of(ib);
        for (std::size_t i = 0; i < dc.size(); ++i) {
            const std::size_t j = broadcast ? i % width : i;
            switch (kind) {
            case ElementwiseKind::add:
                if (ga) da[i] += dc[i];
                if (gb) db[j] += dc[i];
                break;
            case ElementwiseKind::sub:
                if (ga) da[i] += dc[i];
                if (gb) db[j] -= dc[i];
                break;
            case ElementwiseKind::mul:
                if (ga) da[i] += dc[i] * B[j];
                if (gb) db[j] += dc[i] * A[i];
                break;
            }
        }
    });
}

Var add(const Var &a, const Var &b) { return elementwise(a, b, ElementwiseKind::add); }
Var sub(const Var &a, const Var &b) { return elementwise(a, b, ElementwiseKind::sub); }
Var mul(const Var &a, const Var &b) { return elementwise(a, b, ElementwiseKind::mul); }

Var scale(const Var &a, double factor) {
    Tensor C = a.value();
    for (auto &v : C.data()) v *= factor;
    const auto ia = a.id();
    return a.tape().record(std::move(C), {ia}, [ia, factor](Tape &t, std::span<const double> dc) {
        auto da = t.grad_of(ia);
        for (std::size_t i = 0; i < dc.size(); ++i) da[i] += factor * dc[i];
    });
}

Var abs(const Var &a) {
    Tensor C = a.value();
    for (auto &v : C.data()) v = std::fabs(v);
    const auto ia = a.id();
    return a.tape().record(std::move(C), {ia}, [ia](Tape &t, std::span<const double> dc) {
        const auto &A = t.value(ia);
        auto da = t.grad_of(ia);
        for (std::size_t i = 0; i < dc.size(); ++i) da[i] += (A[i] > 0.0 ? 1.0 : (A[i] < 0.0 ? -1.0 : 0.0)) * dc[i];
    });
}

Var relu(const Var &a) {
    Tensor C = a.value();
    for (auto &v : C.data()) v = v > 0.0 ? v : 0.0;
    const auto ia = a.id();
    return a.tape().record(std::move(C), {ia}, [ia](Tape &t, std::span<const double> dc) {
        const auto &A = t.value(ia);
        auto da = t.grad_of(ia);
        for (std::size_t i = 0; i < dc.size(); ++i)
            if (A[i] > 0.0) da[i] += dc[i];
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
} // namespace

Var gelu(const Var &a) {
    Tensor C = a.value();
    for (auto &x : C.data()) x = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
    const auto ia = a.id();
    return a.tape().record(std::move(C), {ia}, [ia](Tape &t, std::span<const double> dc) {
        const auto &A = t.value(ia);
        auto da = t.grad_of(ia);
        for (std::size_t i = 0; i < dc.size(); ++i) {
            const double x = A[i];
            const double th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
            const double d = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
            da[i] += d * dc[i];
        }
    });
}

Var activation(const Var &a, Activation kind) { return kind == Activation::relu ? relu(a) : gelu(a); }

Var softmax_lastdim(const Var &a) {
    const auto &A = a.value();
    const std::size_t n = A.shape().back();
    const std::size_t rows = A.size() / n;
    Tensor C(A.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double *x = A.data().data() + r * n;
        double *y = C.data().data() + r * n;
        const double mx = *std::max_element(x, x + n);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += (y[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < n; ++j) y[j] /= s;
    }
    const auto ia = a.id();
    const std::size_t out_id = a.tape().size();
    return a.tape().record(std::move(C), {ia}, [ia, out_id, n, rows](Tape &t, std::span<const double> dc) {
        const auto &Y = t.value(out_id);
        auto da = t.grad_of(ia);
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += dc[r * n + j] * Y[r * n + j];
            for (std::size_t j = 0; j < n; ++j) da[r * n + j] += Y[r * n + j] * (dc[r * n + j] - dot);
        }
    });
}

Var layer_norm(const Var &a, const Var &gain, const Var &bias, double eps) {
    same_tape(a, gain);
    same_tape(a, bias);
    if (!(eps > 0.0)) throw std::invalid_argument("layer_norm eps must be positive");
    const auto &A = a.value();
    const std::size_t d = A.shape().back();
    if (gain.value().shape() != Shape{d} || bias.value().shape() != Shape{d})
        throw DimensionError("layer_norm affine shape mismatch: input " + to_string(A.shape()) + ", gain " +
                             to_string(gain.shape()) + ", bias " + to_string(bias.shape()));
    const std::size_t rows = A.size() / d;
    const auto &G = gain.value();
    const auto &B = bias.value();
    Tensor C(A.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double *x = A.data().data() + r * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += x[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) C[r * d + j] = (x[j] - mean) * inv * G[j] + B[j];
    }
    const auto ia = a.id(), ig = gain.id(), ib = bias.id();
    return a.tape().record(std::move(C), {ia, ig, ib}, [ia, ig, ib, d, rows, eps](Tape &t, std::span<const double> dc) {
        const auto &A = t.value(ia);
        const auto &G = t.value(ig);
        const bool ga = t.requires_grad(ia), gg = t.requires_grad(ig), gb = t.requires_grad(ib);
        std::span<double> da, dg, db;
        if (ga) da = t.grad_of(ia);
        if (gg) dg = t.grad_of(ig);
        if (gb) db = t.grad_of(ib);
        std::vector<double> xhat(d), dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
            const double *x = A.data().data() + r * d;
            const double *dy = dc.data() + r * d;
            double mean = 0.0;
            for (std::size_t j = 0; j < d; ++j) mean += x[j];
            mean /= static_cast<double>(d);
            double var = 0.0;
            for (std::size_t j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
            var /= static_cast<double>(d);
            const double inv = 1.0 / std::sqrt(var + eps);
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                xhat[j] = (x[j] - mean) * inv;
                dxhat[j] = dy[j] * G[j];
                m1 += dxhat[j];
                m2 += dxhat[j] * xhat[j];
                if (gg) dg[j] += dy[j] * xhat[j];
                if (gb) db[j] += dy[j];
            }
            if (ga) {
                m1 /= static_cast<double>(d);
                m2 /= static_cast<double>(d);
                for (std::size_t j = 0; j < d; ++j) da[r * d + j] += inv * (dxhat[j] - m1 - xhat[j] * m2);
            }
        }
    });
}

Var mean_axis(const Var &a, std::size_t axis) {
    const auto &A = a.value();
    if (axis >= A.rank())
        throw DimensionError("mean_axis: axis " + std::to_string(axis) + " out of range for " + to_string(A.shape()));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= A.dim(i);
    for (std::size_t i = axis + 1; i < A.rank(); ++i) inner *= A.dim(i);
    const std::size_t len = A.dim(axis);
    Shape out_shape;
    for (std::size_t i = 0; i < A.rank(); ++i)
        if (i != axis) out_shape.push_back(A.dim(i));
    if (out_shape.empty()) out_shape.push_back(1);
    Tensor C(out_shape);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < len; ++k)
            for (std::size_t i = 0; i < inner; ++i) C[o * inner + i] += A[(o * len + k) * inner + i];
    for (auto &v : C.data()) v /= static_cast<double>(len);
    const auto ia = a.id();
    return a.tape().record(std::move(C), {ia}, [ia, outer, inner, len](Tape &t, std::span<const double> dc) {
        auto da = t.grad_of(ia);
        const double w = 1.0 / static_cast<double>(len);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t k = 0; k < len; ++k)
                for (std::size_t i = 0; i < inner; ++i) da[(o * len + k) * inner + i] += w * dc[o * inner + i];
    });
}

Var sum_all(const Var &a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    const auto ia = a.id();
    return a.tape().record(Tensor::scalar(s), {ia}, [ia](Tape &t, std::span<const double> dc) {
        auto da = t.grad_of(ia);
        for (auto &g : da) g += dc[0];
    });
}

Var mean_all(const Var &a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size())); }

Var transpose(const Var &a) {
    require_matrix(a, "transpose");
    const auto &A = a.value();
    const std::size_t m = A.dim(0), n = A.dim(1);
    Tensor C({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) C(j, i) = A(i, j);
    const auto ia = a.id();
    return a.tape().record(std::move(C), {ia}, [ia, m, n](Tape &t, std::span<const double> dc) {
        auto da = t.grad_of(ia);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) da[i * n + j] += dc[j * m + i];
    });
}

Var reshape(const Var &a, Shape shape) {
    if (shape_size(shape) != a.value().size())
        throw DimensionError("reshape " + to_string(a.shape()) + " -> " + to_string(shape) + " changes element count");
    Tensor C(std::move(shape), a.value().values());
    const auto ia = a.id();
    return a.tape().record(std::move(C), {ia}, [ia](Tape &t, std::span<const double> dc) {
        auto da = t.grad_of(ia);
        for (std::size_t i = 0; i < dc.size(); ++i) da[i] += dc[i];
    });
}

Var slice_cols(const Var &a, std::size_t begin, std::size_t end) {
    require_matrix(a, "slice_cols");
    const auto &A = a.value();
    const std::size_t m = A.dim(0), n = A.dim(1);
    if (begin >= end || end > n)
        throw DimensionError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                             to_string(A.shape()));
    const std::size_t w = end - begin;
    Tensor C({m, w});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) C(i, j) = A(i, begin + j);
    const auto ia = a.id();
    return a.tape().record(std::move(C), {ia}, [ia, m, n, w, begin](Tape &t, std::span<const double> dc) {
        auto da = t.grad_of(ia);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) da[i * n + begin + j] += dc[i * w + j];
    });
}

Var concat_cols(const std::vector<Var> &parts) {
    if (parts.empty()) throw DimensionError("concat_cols of nothing");
    for (const auto &p : parts) {
        same_tape(parts[0], p);
        require_matrix(p, "concat_cols");
        if (p.value().dim(0) != parts[0].value().dim(0))
            throw DimensionError("concat_cols row mismatch: " + to_string(parts[0].shape()) + " vs " + to_string(p.shape()));
    }
    const std::size_t m = parts[0].value().dim(0);
    std::vector<std::size_t> ids, widths;
    std::size_t n = 0;
    for (const auto &p : parts) {
        ids.push_back(p.id());
        widths.push_back(p.value().dim(1));
        n += p.value().dim(1);
    }
    Tensor C({m, n});
    std::size_t off = 0;
    for (const auto &p : parts) {
        const auto &P = p.value();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < P.dim(1); ++j) C(i, off + j) = P(i, j);
        off += P.dim(1);
    }
    return parts[0].tape().record(std::move(C), ids, [ids, widths, m, n](Tape &t, std::span<const double> dc) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            const std::size_t w = widths[k];
            if (t.requires_grad(ids[k])) {
                auto dp = t.grad_of(ids[k]);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < w; ++j) dp[i * w + j] += dc[i * n + off + j];
            }
            off += w;
        }
    });
}

Var concat_rows(const std::vector<Var> &parts) {
    if (parts.empty()) throw DimensionError("concat_rows of nothing");
    const std::size_t n = parts[0].value().shape().back();
    std::vector<std::size_t> ids, sizes;
    std::size_t rows = 0;
    for (const auto &p : parts) {
        same_tape(parts[0], p);
        const auto &P = p.value();
        if (P.rank() > 2 || P.shape().back() != n)
            throw DimensionError("concat_rows shape mismatch: " + to_string(parts[0].shape()) + " vs " + to_string(P.shape()));
        ids.push_back(p.id());
        sizes.push_back(P.size());
        rows += P.size() / n;
    }
    std::vector<double> data;
    data.reserve(rows * n);
    for (const auto &p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    Tensor C({rows, n}, std::move(data));
    return parts[0].tape().record(std::move(C), ids, [ids, sizes](Tape &t, std::span<const double> dc) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (t.requires_grad(ids[k])) {
                auto dp = t.grad_of(ids[k]);
                for (std::size_t i = 0; i < sizes[k]; ++i) dp[i] += dc[off + i];
            }
            off += sizes[k];
        }
    });
}

} // namespace tfh
