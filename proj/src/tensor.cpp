#include "cgsta/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace cgsta {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

int normalize_axis(int axis, std::size_t ndim, const char* op) {
    int nd = static_cast<int>(ndim);
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) fail(std::string(op) + ": axis out of range");
    return axis;
}

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Splits a shape around `axis` into (outer, d, inner) extents.
struct AxisSplit {
    std::size_t outer, d, inner;
};
AxisSplit split_axis(const Shape& s, int axis) {
    AxisSplit r{1, s[static_cast<std::size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<std::size_t>(i)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

enum class Bcast { Same, ScalarA, ScalarB, SuffixA, SuffixB };

struct BinaryPlan {
    Bcast kind;
    Shape out_shape;
    std::size_t n_out, n_small;
};

BinaryPlan plan_binary(const Tensor& a, const Tensor& b, const char* op) {
    BinaryPlan p;
    if (a.shape == b.shape) {
        p = {Bcast::Same, a.shape, a.numel(), a.numel()};
    } else if (b.numel() == 1) {
        p = {Bcast::ScalarB, a.shape, a.numel(), 1};
    } else if (a.numel() == 1) {
        p = {Bcast::ScalarA, b.shape, b.numel(), 1};
    } else if (is_suffix(b.shape, a.shape)) {
        p = {Bcast::SuffixB, a.shape, a.numel(), b.numel()};
    } else if (is_suffix(a.shape, b.shape)) {
        p = {Bcast::SuffixA, b.shape, b.numel(), a.numel()};
    } else {
        fail(std::string(op) + ": shapes " + shape_str(a.shape) + " and " + shape_str(b.shape) +
             " do not conform");
    }
    return p;
}

// Adds g (shape `out`) into a buffer for an operand broadcast per `kind`,
// where the operand was the smaller side.
void reduce_into_small(const double* __restrict g, std::size_t n_out, std::size_t n_small,
                       double* __restrict dst) {
    if (n_small == 1) {
        double s = 0.0;
        for (std::size_t i = 0; i < n_out; ++i) s += g[i];
        dst[0] += s;
    } else {
        for (std::size_t base = 0; base < n_out; base += n_small)
            for (std::size_t j = 0; j < n_small; ++j) dst[j] += g[base + j];
    }
}

void check_finite(const std::vector<double>& v, const char* op) {
    for (double x : v)
        if (!std::isfinite(x)) fail(std::string(op) + ": non-finite result");
}

}  // namespace

// ---- factories --------------------------------------------------------------

Tensor constant(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size()) fail("constant: shape does not match value count");
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::make_shared<const std::vector<double>>(std::move(values));
    return t;
}

Tensor scalar_tensor(double v) { return constant({1}, {v}); }

Tensor zeros(Shape shape) {
    std::size_t n = shape_numel(shape);
    return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor full(Shape shape, double v) {
    std::size_t n = shape_numel(shape);
    return constant(std::move(shape), std::vector<double>(n, v));
}

Tensor detach(const Tensor& t) {
    Tensor out = t;
    out.tape = nullptr;
    out.node = -1;
    out.requires_grad = false;
    return out;
}

// ---- Gradients --------------------------------------------------------------

double* Gradients::accum(int id, std::size_t numel) {
    auto& buf = bufs_[static_cast<std::size_t>(id)];
    if (buf.empty()) buf.assign(numel, 0.0);
    return buf.data();
}

const std::vector<double>* Gradients::at(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= bufs_.size()) return nullptr;
    const auto& buf = bufs_[static_cast<std::size_t>(id)];
    return buf.empty() ? nullptr : &buf;
}

bool Gradients::zero_or_absent(int id) const {
    const auto* buf = at(id);
    if (!buf) return true;
    return std::all_of(buf->begin(), buf->end(), [](double x) { return x == 0.0; });
}

void Gradients::release(int id) {
    std::vector<double>().swap(bufs_[static_cast<std::size_t>(id)]);
}

// ---- Tape -------------------------------------------------------------------

Tensor Tape::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    Tensor t = constant(std::move(shape), std::move(values));
    if (!requires_grad) return t;
    t.tape = this;
    t.requires_grad = true;
    t.node = emit({}, t.numel(), BackwardFn{});
    param_ids_.push_back(t.node);
    return t;
}

Tensor Tape::leaf(const Tensor& values, bool requires_grad) {
    Tensor t = detach(values);
    if (!requires_grad) return t;
    t.tape = this;
    t.requires_grad = true;
    t.node = emit({}, t.numel(), BackwardFn{});
    param_ids_.push_back(t.node);
    return t;
}

int Tape::emit(std::vector<int> inputs, std::size_t out_numel, BackwardFn backward) {
    nodes_.push_back(Node{std::move(inputs), out_numel, std::move(backward)});
    return static_cast<int>(nodes_.size()) - 1;
}

Gradients Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) fail("backward: loss must be a scalar");
    if (loss.tape != this || loss.node < 0) fail("backward: loss is not on this tape");
    Gradients g(nodes_.size());
    g.accum(loss.node, 1)[0] = 1.0;
    for (int id = loss.node; id >= 0; --id) {
        const auto* gbuf = g.at(id);
        if (!gbuf) continue;
        const Node& node = nodes_[static_cast<std::size_t>(id)];
        if (node.backward) node.backward(gbuf->data(), g);
    }
    return g;
}

Tensor Tape::grad_of(const Gradients& g, const Tensor& leaf_tensor) const {
    if (leaf_tensor.tape != this || leaf_tensor.node < 0)
        fail("grad_of: tensor is not a leaf on this tape");
    const auto* buf = g.at(leaf_tensor.node);
    if (!buf) return zeros(leaf_tensor.shape);
    return constant(leaf_tensor.shape, *buf);
}

// ---- op plumbing ------------------------------------------------------------

namespace {

Tape* common_tape(std::initializer_list<const Tensor*> ins, const char* op) {
    Tape* tape = nullptr;
    for (const Tensor* t : ins) {
        if (!t->tracked()) continue;
        if (tape && tape != t->tape) fail(std::string(op) + ": inputs live on different tapes");
        tape = t->tape;
    }
    return tape;
}

Tensor finish(Shape shape, std::vector<double> vals, std::initializer_list<const Tensor*> ins,
              const char* op, BackwardFn bw) {
    Tensor out = constant(std::move(shape), std::move(vals));
    Tape* tape = common_tape(ins, op);
    if (!tape) return out;
    std::vector<int> ids;
    bool rg = false;
    for (const Tensor* t : ins) {
        ids.push_back(t->tracked() ? t->node : -1);
        rg = rg || t->requires_grad;
    }
    out.tape = tape;
    out.requires_grad = rg;
    out.node = tape->emit(std::move(ids), out.numel(), std::move(bw));
    return out;
}

}  // namespace

// ---- elementwise binaries ----------------------------------------------------

namespace {

template <class F>
std::vector<double> binary_forward(const Tensor& a, const Tensor& b, const BinaryPlan& p, F f) {
    std::vector<double> out(p.n_out);
    const double* __restrict pa = a.ptr();
    const double* __restrict pb = b.ptr();
    double* __restrict po = out.data();
    switch (p.kind) {
        case Bcast::Same:
            for (std::size_t i = 0; i < p.n_out; ++i) po[i] = f(pa[i], pb[i]);
            break;
        case Bcast::ScalarB:
            for (std::size_t i = 0; i < p.n_out; ++i) po[i] = f(pa[i], pb[0]);
            break;
        case Bcast::ScalarA:
            for (std::size_t i = 0; i < p.n_out; ++i) po[i] = f(pa[0], pb[i]);
            break;
        case Bcast::SuffixB:
            for (std::size_t base = 0; base < p.n_out; base += p.n_small)
                for (std::size_t j = 0; j < p.n_small; ++j) po[base + j] = f(pa[base + j], pb[j]);
            break;
        case Bcast::SuffixA:
            for (std::size_t base = 0; base < p.n_out; base += p.n_small)
                for (std::size_t j = 0; j < p.n_small; ++j) po[base + j] = f(pa[j], pb[base + j]);
            break;
    }
    return out;
}

bool a_is_small(const BinaryPlan& p) {
    return p.kind == Bcast::ScalarA || p.kind == Bcast::SuffixA;
}
bool b_is_small(const BinaryPlan& p) {
    return p.kind == Bcast::ScalarB || p.kind == Bcast::SuffixB;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    BinaryPlan p = plan_binary(a, b, "add");
    auto vals = binary_forward(a, b, p, [](double x, double y) { return x + y; });
    const int ida = a.node, idb = b.node;
    const std::size_t na = a.numel(), nb = b.numel();
    auto bw = [=](const double* g, Gradients& sink) {
        if (ida >= 0 && a.tracked()) {
            double* da = sink.accum(ida, na);
            if (a_is_small(p))
                reduce_into_small(g, p.n_out, p.n_small, da);
            else
                for (std::size_t i = 0; i < na; ++i) da[i] += g[i];
        }
        if (idb >= 0 && b.tracked()) {
            double* db = sink.accum(idb, nb);
            if (b_is_small(p))
                reduce_into_small(g, p.n_out, p.n_small, db);
            else
                for (std::size_t i = 0; i < nb; ++i) db[i] += g[i];
        }
    };
    return finish(p.out_shape, std::move(vals), {&a, &b}, "add", std::move(bw));
}

Tensor sub(const Tensor& a, const Tensor& b) {
    BinaryPlan p = plan_binary(a, b, "sub");
    auto vals = binary_forward(a, b, p, [](double x, double y) { return x - y; });
    const int ida = a.node, idb = b.node;
    const std::size_t na = a.numel(), nb = b.numel();
    auto bw = [=](const double* g, Gradients& sink) {
        if (ida >= 0) {
            double* da = sink.accum(ida, na);
            if (a_is_small(p))
                reduce_into_small(g, p.n_out, p.n_small, da);
            else
                for (std::size_t i = 0; i < na; ++i) da[i] += g[i];
        }
        if (idb >= 0) {
            double* db = sink.accum(idb, nb);
            if (b_is_small(p)) {
                if (p.n_small == 1) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < p.n_out; ++i) s += g[i];
                    db[0] -= s;
                } else {
                    for (std::size_t i = 0; i < p.n_out; ++i) db[i % p.n_small] -= g[i];
                }
            } else {
                for (std::size_t i = 0; i < nb; ++i) db[i] -= g[i];
            }
        }
    };
    return finish(p.out_shape, std::move(vals), {&a, &b}, "sub", std::move(bw));
}

Tensor mul(const Tensor& a, const Tensor& b) {
    BinaryPlan p = plan_binary(a, b, "mul");
    auto vals = binary_forward(a, b, p, [](double x, double y) { return x * y; });
    const int ida = a.node, idb = b.node;
    const std::size_t na = a.numel(), nb = b.numel();
    // accumulates g * other into the gradient of one operand, reducing over
    // the broadcast dimensions when that operand was the small side
    auto accum_side = [p](double* __restrict dst, const double* __restrict g,
                          const double* __restrict other, bool self_small, bool other_small) {
        const std::size_t n_out = p.n_out, n_small = p.n_small;
        if (!self_small && !other_small) {
            for (std::size_t i = 0; i < n_out; ++i) dst[i] += g[i] * other[i];
        } else if (!self_small && n_small == 1) {
            for (std::size_t i = 0; i < n_out; ++i) dst[i] += g[i] * other[0];
        } else if (!self_small) {
            for (std::size_t base = 0; base < n_out; base += n_small)
                for (std::size_t j = 0; j < n_small; ++j)
                    dst[base + j] += g[base + j] * other[j];
        } else if (n_small == 1) {
            double s = 0.0;
            for (std::size_t i = 0; i < n_out; ++i) s += g[i] * other[i];
            dst[0] += s;
        } else {
            for (std::size_t base = 0; base < n_out; base += n_small)
                for (std::size_t j = 0; j < n_small; ++j)
                    dst[j] += g[base + j] * other[base + j];
        }
    };
    auto bw = [=](const double* g, Gradients& sink) {
        if (ida >= 0) accum_side(sink.accum(ida, na), g, b.ptr(), a_is_small(p), b_is_small(p));
        if (idb >= 0) accum_side(sink.accum(idb, nb), g, a.ptr(), b_is_small(p), a_is_small(p));
    };
    return finish(p.out_shape, std::move(vals), {&a, &b}, "mul", std::move(bw));
}

Tensor div(const Tensor& a, const Tensor& b) {
    BinaryPlan p = plan_binary(a, b, "div");
    for (double y : *b.data)
        if (y == 0.0) fail("div: division by zero");
    auto vals = binary_forward(a, b, p, [](double x, double y) { return x / y; });
    check_finite(vals, "div");
    const int ida = a.node, idb = b.node;
    const std::size_t na = a.numel(), nb = b.numel();
    auto bw = [=](const double* g, Gradients& sink) {
        const double* pa = a.ptr();
        const double* pb = b.ptr();
        if (ida >= 0) {
            double* da = sink.accum(ida, na);
            for (std::size_t i = 0; i < p.n_out; ++i) {
                const double bv = b_is_small(p) ? pb[i % p.n_small] : pb[i];
                const std::size_t ai = a_is_small(p) ? i % p.n_small : i;
                da[ai] += g[i] / bv;
            }
        }
        if (idb >= 0) {
            double* db = sink.accum(idb, nb);
            for (std::size_t i = 0; i < p.n_out; ++i) {
                const double av = a_is_small(p) ? pa[i % p.n_small] : pa[i];
                const double bv = b_is_small(p) ? pb[i % p.n_small] : pb[i];
                const std::size_t bi = b_is_small(p) ? i % p.n_small : i;
                db[bi] -= g[i] * av / (bv * bv);
            }
        }
    };
    return finish(p.out_shape, std::move(vals), {&a, &b}, "div", std::move(bw));
}

// ---- elementwise unaries -----------------------------------------------------

namespace {

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& a, const char* op, Fwd fwd, Bwd dydx_from_xy) {
    const std::size_t n = a.numel();
    std::vector<double> vals(n);
    const double* pa = a.ptr();
    for (std::size_t i = 0; i < n; ++i) vals[i] = fwd(pa[i]);
    auto out_data = std::make_shared<const std::vector<double>>(std::move(vals));
    const int ida = a.node;
    auto bw = [=](const double* g, Gradients& sink) {
        if (ida < 0) return;
        double* da = sink.accum(ida, n);
        const double* px = a.ptr();
        const double* py = out_data->data();
        for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * dydx_from_xy(px[i], py[i]);
    };
    Tensor out;
    out.shape = a.shape;
    out.data = out_data;
    Tape* tape = common_tape({&a}, op);
    if (tape) {
        out.tape = tape;
        out.requires_grad = a.requires_grad;
        out.node = tape->emit({ida}, n, std::move(bw));
    }
    return out;
}

}  // namespace

Tensor neg(const Tensor& a) {
    return unary_op(a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
    Tensor out = unary_op(a, "exp", [](double x) { return std::exp(x); },
                          [](double, double y) { return y; });
    check_finite(*out.data, "exp");
    return out;
}

Tensor log(const Tensor& a) {
    for (double x : *a.data)
        if (x <= 0.0) fail("log: input must be positive");
    return unary_op(a, "log", [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
    return unary_op(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
    return unary_op(a, "tanh", [](double x) { return std::tanh(x); },
                    [](double, double y) { return 1.0 - y * y; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    if (!(lo <= hi)) fail("clamp: lo must be <= hi");
    return unary_op(a, "clamp",
                    [=](double x) { return x < lo ? lo : (x > hi ? hi : x); },
                    [=](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor smul(const Tensor& a, double c) {
    return unary_op(a, "smul", [=](double x) { return x * c; },
                    [=](double, double) { return c; });
}

Tensor sadd(const Tensor& a, double c) {
    return unary_op(a, "sadd", [=](double x) { return x + c; },
                    [](double, double) { return 1.0; });
}

// ---- matmul -----------------------------------------------------------------

namespace {

// C += A (m,k) x B (k,n)
void mm(const double* __restrict A, const double* __restrict B, double* __restrict C,
        std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* __restrict crow = C + i * n;
        const double* __restrict arow = A + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = arow[p];
            const double* __restrict brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

// dA += G (m,n) x B^T with B (k,n), dot-product form. Efficient only when n
// is large enough to amortize the horizontal reduction; callers with short
// rows transpose B and reuse mm instead.
void mm_gbt(const double* __restrict G, const double* __restrict B, double* __restrict dA,
            std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* __restrict grow = G + i * n;
        double* __restrict darow = dA + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* __restrict brow = B + p * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            darow[p] += s;
        }
    }
}

void transpose_mat(const double* __restrict src, double* __restrict dst, std::size_t rows,
                   std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

// dB += A^T x G, with A (m,k), G (m,n), dB (k,n)
void mm_atg(const double* __restrict A, const double* __restrict G, double* __restrict dB,
            std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* __restrict arow = A + i * k;
        const double* __restrict grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = arow[p];
            double* __restrict dbrow = dB + p * n;
            for (std::size_t j = 0; j < n; ++j) dbrow[j] += aip * grow[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() < 2 || b.ndim() < 2) fail("matmul: operands must have >= 2 dims");
    const std::size_t m = a.shape[a.ndim() - 2];
    const std::size_t k = a.shape[a.ndim() - 1];
    const std::size_t kb = b.shape[b.ndim() - 2];
    const std::size_t n = b.shape[b.ndim() - 1];
    if (k != kb)
        fail("matmul: inner dimensions disagree: " + shape_str(a.shape) + " x " +
             shape_str(b.shape));

    const bool b_batched = b.ndim() > 2;
    std::size_t batch = 1;
    Shape lead(a.shape.begin(), a.shape.end() - 2);
    for (std::size_t d : lead) batch *= d;
    if (b_batched) {
        Shape lead_b(b.shape.begin(), b.shape.end() - 2);
        if (lead_b != lead) fail("matmul: batched operands must share leading dimensions");
    }

    Shape out_shape = lead;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> vals(batch * m * n, 0.0);
    const double* pa = a.ptr();
    const double* pb = b.ptr();
    for (std::size_t s = 0; s < batch; ++s)
        mm(pa + s * m * k, pb + (b_batched ? s * k * n : 0), vals.data() + s * m * n, m, k, n);

    const int ida = a.node, idb = b.node;
    const std::size_t na = a.numel(), nb = b.numel();
    auto bw = [=](const double* g, Gradients& sink) {
        const double* A = a.ptr();
        const double* B = b.ptr();
        if (ida >= 0) {
            double* da = sink.accum(ida, na);
            if (n >= 128) {
                for (std::size_t s = 0; s < batch; ++s)
                    mm_gbt(g + s * m * n, B + (b_batched ? s * k * n : 0), da + s * m * k, m, k,
                           n);
            } else {
                std::vector<double> bt(n * k);
                if (!b_batched) transpose_mat(B, bt.data(), k, n);
                for (std::size_t s = 0; s < batch; ++s) {
                    if (b_batched) transpose_mat(B + s * k * n, bt.data(), k, n);
                    mm(g + s * m * n, bt.data(), da + s * m * k, m, n, k);
                }
            }
        }
        if (idb >= 0) {
            double* db = sink.accum(idb, nb);
            for (std::size_t s = 0; s < batch; ++s)
                mm_atg(A + s * m * k, g + s * m * n, db + (b_batched ? s * k * n : 0), m, k, n);
        }
    };
    return finish(std::move(out_shape), std::move(vals), {&a, &b}, "matmul", std::move(bw));
}

// ---- reductions ---------------------------------------------------------------

Tensor sum(const Tensor& a) {
    const std::size_t n = a.numel();
    double s = 0.0;
    const double* pa = a.ptr();
    for (std::size_t i = 0; i < n; ++i) s += pa[i];
    const int ida = a.node;
    auto bw = [=](const double* g, Gradients& sink) {
        if (ida < 0) return;
        double* da = sink.accum(ida, n);
        for (std::size_t i = 0; i < n; ++i) da[i] += g[0];
    };
    return finish({1}, {s}, {&a}, "sum", std::move(bw));
}

Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.numel());
    return smul(sum(a), inv);
}

Tensor sum(const Tensor& a, int axis) {
    const int ax = normalize_axis(axis, a.ndim(), "sum");
    const AxisSplit sp = split_axis(a.shape, ax);
    Shape out_shape;
    for (std::size_t i = 0; i < a.ndim(); ++i)
        if (static_cast<int>(i) != ax) out_shape.push_back(a.shape[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    std::vector<double> vals(sp.outer * sp.inner, 0.0);
    const double* pa = a.ptr();
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t x = 0; x < sp.d; ++x) {
            const double* src = pa + (o * sp.d + x) * sp.inner;
            double* dst = vals.data() + o * sp.inner;
            for (std::size_t in = 0; in < sp.inner; ++in) dst[in] += src[in];
        }
    const int ida = a.node;
    const std::size_t na = a.numel();
    auto bw = [=](const double* g, Gradients& sink) {
        if (ida < 0) return;
        double* da = sink.accum(ida, na);
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t x = 0; x < sp.d; ++x) {
                double* dst = da + (o * sp.d + x) * sp.inner;
                const double* src = g + o * sp.inner;
                for (std::size_t in = 0; in < sp.inner; ++in) dst[in] += src[in];
            }
    };
    return finish(std::move(out_shape), std::move(vals), {&a}, "sum", std::move(bw));
}

Tensor mean(const Tensor& a, int axis) {
    const int ax = normalize_axis(axis, a.ndim(), "mean");
    const double inv = 1.0 / static_cast<double>(a.shape[static_cast<std::size_t>(ax)]);
    return smul(sum(a, ax), inv);
}

Tensor max(const Tensor& a, int axis) {
    const int ax = normalize_axis(axis, a.ndim(), "max");
    const AxisSplit sp = split_axis(a.shape, ax);
    Shape out_shape;
    for (std::size_t i = 0; i < a.ndim(); ++i)
        if (static_cast<int>(i) != ax) out_shape.push_back(a.shape[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    std::vector<double> vals(sp.outer * sp.inner);
    auto arg = std::make_shared<std::vector<std::size_t>>(sp.outer * sp.inner);
    const double* pa = a.ptr();
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t in = 0; in < sp.inner; ++in) {
            double best = pa[(o * sp.d) * sp.inner + in];
            std::size_t best_x = 0;
            for (std::size_t x = 1; x < sp.d; ++x) {
                const double v = pa[(o * sp.d + x) * sp.inner + in];
                if (v > best) {
                    best = v;
                    best_x = x;
                }
            }
            vals[o * sp.inner + in] = best;
            (*arg)[o * sp.inner + in] = best_x;
        }
    const int ida = a.node;
    const std::size_t na = a.numel();
    auto bw = [=](const double* g, Gradients& sink) {
        if (ida < 0) return;
        double* da = sink.accum(ida, na);
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t in = 0; in < sp.inner; ++in) {
                const std::size_t x = (*arg)[o * sp.inner + in];
                da[(o * sp.d + x) * sp.inner + in] += g[o * sp.inner + in];
            }
    };
    return finish(std::move(out_shape), std::move(vals), {&a}, "max", std::move(bw));
}

// ---- shape ops ----------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) fail("concat: no inputs");
    const int ax = normalize_axis(axis, parts[0].ndim(), "concat");
    Shape out_shape = parts[0].shape;
    std::size_t total_d = 0;
    for (const Tensor& t : parts) {
        if (t.ndim() != parts[0].ndim()) fail("concat: rank mismatch");
        for (std::size_t i = 0; i < t.ndim(); ++i)
            if (static_cast<int>(i) != ax && t.shape[i] != parts[0].shape[i])
                fail("concat: shapes disagree off the concat axis");
        total_d += t.shape[static_cast<std::size_t>(ax)];
    }
    out_shape[static_cast<std::size_t>(ax)] = total_d;

    const AxisSplit sp0 = split_axis(parts[0].shape, ax);
    const std::size_t outer = sp0.outer, inner = sp0.inner;
    std::vector<double> vals(outer * total_d * inner);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const Tensor& t : parts) {
        offsets.push_back(off);
        const std::size_t d = t.shape[static_cast<std::size_t>(ax)];
        const double* src = t.ptr();
        for (std::size_t o = 0; o < outer; ++o)
            std::memcpy(vals.data() + (o * total_d + off) * inner, src + o * d * inner,
                        d * inner * sizeof(double));
        off += d;
    }

    std::vector<const Tensor*> ins;
    for (const Tensor& t : parts) ins.push_back(&t);
    Tape* tape = nullptr;
    for (const Tensor& t : parts)
        if (t.tracked()) {
            if (tape && tape != t.tape) fail("concat: inputs live on different tapes");
            tape = t.tape;
        }

    Tensor out = constant(out_shape, std::move(vals));
    if (!tape) return out;

    std::vector<int> ids;
    std::vector<std::size_t> dims, numels;
    bool rg = false;
    for (const Tensor& t : parts) {
        ids.push_back(t.tracked() ? t.node : -1);
        dims.push_back(t.shape[static_cast<std::size_t>(ax)]);
        numels.push_back(t.numel());
        rg = rg || t.requires_grad;
    }
    auto bw = [=](const double* g, Gradients& sink) {
        for (std::size_t pi = 0; pi < ids.size(); ++pi) {
            if (ids[pi] < 0) continue;
            double* dp = sink.accum(ids[pi], numels[pi]);
            const std::size_t d = dims[pi];
            for (std::size_t o = 0; o < outer; ++o) {
                const double* src = g + (o * total_d + offsets[pi]) * inner;
                double* dst = dp + o * d * inner;
                for (std::size_t i = 0; i < d * inner; ++i) dst[i] += src[i];
            }
        }
    };
    out.tape = tape;
    out.requires_grad = rg;
    out.node = tape->emit(std::move(ids), out.numel(), std::move(bw));
    return out;
}

Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t len) {
    const int ax = normalize_axis(axis, a.ndim(), "slice");
    const std::size_t d = a.shape[static_cast<std::size_t>(ax)];
    if (len == 0 || start + len > d) fail("slice: range out of bounds");
    const AxisSplit sp = split_axis(a.shape, ax);
    Shape out_shape = a.shape;
    out_shape[static_cast<std::size_t>(ax)] = len;
    std::vector<double> vals(sp.outer * len * sp.inner);
    const double* pa = a.ptr();
    for (std::size_t o = 0; o < sp.outer; ++o)
        std::memcpy(vals.data() + o * len * sp.inner, pa + (o * d + start) * sp.inner,
                    len * sp.inner * sizeof(double));
    const int ida = a.node;
    const std::size_t na = a.numel();
    auto bw = [=](const double* g, Gradients& sink) {
        if (ida < 0) return;
        double* da = sink.accum(ida, na);
        for (std::size_t o = 0; o < sp.outer; ++o) {
            double* dst = da + (o * d + start) * sp.inner;
            const double* src = g + o * len * sp.inner;
            for (std::size_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
        }
    };
    return finish(std::move(out_shape), std::move(vals), {&a}, "slice", std::move(bw));
}

Tensor reshape(const Tensor& a, Shape new_shape) {
    if (shape_numel(new_shape) != a.numel())
        fail("reshape: element count mismatch: " + shape_str(a.shape) + " -> " +
             shape_str(new_shape));
    // Row-major reinterpretation: shares both the data and the tape node
    // (gradients are flat, so no node is needed).
    Tensor out = a;
    out.shape = std::move(new_shape);
    return out;
}

namespace {

std::vector<std::size_t> row_major_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

// Copies src into dst so that dst is src with axes permuted: dst axis i is
// src axis perm[i].
void permute_copy(const double* src, double* dst, const Shape& src_shape,
                  const std::vector<int>& perm) {
    const std::size_t nd = src_shape.size();
    const std::size_t n = shape_numel(src_shape);
    const auto src_strides = row_major_strides(src_shape);
    Shape out_shape(nd);
    std::vector<std::size_t> stride_for_out(nd);
    for (std::size_t i = 0; i < nd; ++i) {
        out_shape[i] = src_shape[static_cast<std::size_t>(perm[i])];
        stride_for_out[i] = src_strides[static_cast<std::size_t>(perm[i])];
    }
    std::vector<std::size_t> idx(nd, 0);
    std::size_t src_off = 0;
    for (std::size_t i = 0; i < n; ++i) {
        dst[i] = src[src_off];
        for (std::size_t ax = nd; ax-- > 0;) {
            if (++idx[ax] < out_shape[ax]) {
                src_off += stride_for_out[ax];
                break;
            }
            idx[ax] = 0;
            src_off -= stride_for_out[ax] * (out_shape[ax] - 1);
        }
    }
}

}  // namespace

Tensor transpose(const Tensor& a, const std::vector<int>& perm) {
    const std::size_t nd = a.ndim();
    if (perm.size() != nd) fail("transpose: permutation rank mismatch");
    std::vector<bool> seen(nd, false);
    for (int p : perm) {
        if (p < 0 || static_cast<std::size_t>(p) >= nd || seen[static_cast<std::size_t>(p)])
            fail("transpose: invalid permutation");
        seen[static_cast<std::size_t>(p)] = true;
    }
    Shape out_shape(nd);
    for (std::size_t i = 0; i < nd; ++i) out_shape[i] = a.shape[static_cast<std::size_t>(perm[i])];
    std::vector<double> vals(a.numel());
    permute_copy(a.ptr(), vals.data(), a.shape, perm);

    std::vector<int> inv(nd);
    for (std::size_t i = 0; i < nd; ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
    const int ida = a.node;
    const Shape grad_shape = out_shape;
    const std::size_t na = a.numel();
    auto bw = [=](const double* g, Gradients& sink) {
        if (ida < 0) return;
        double* da = sink.accum(ida, na);
        std::vector<double> tmp(na);
        permute_copy(g, tmp.data(), grad_shape, inv);
        for (std::size_t i = 0; i < na; ++i) da[i] += tmp[i];
    };
    return finish(std::move(out_shape), std::move(vals), {&a}, "transpose", std::move(bw));
}

Tensor transpose(const Tensor& a) {
    if (a.ndim() < 2) fail("transpose: needs >= 2 dims");
    std::vector<int> perm(a.ndim());
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[a.ndim() - 1], perm[a.ndim() - 2]);
    return transpose(a, perm);
}

Tensor expand_leading(const Tensor& a, std::size_t n) {
    if (n == 0) fail("expand_leading: n must be positive");
    const std::size_t na = a.numel();
    Shape out_shape;
    out_shape.push_back(n);
    for (std::size_t d : a.shape) out_shape.push_back(d);
    std::vector<double> vals(n * na);
    for (std::size_t s = 0; s < n; ++s)
        std::memcpy(vals.data() + s * na, a.ptr(), na * sizeof(double));
    const int ida = a.node;
    auto bw = [=](const double* g, Gradients& sink) {
        if (ida < 0) return;
        double* da = sink.accum(ida, na);
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t i = 0; i < na; ++i) da[i] += g[s * na + i];
    };
    return finish(std::move(out_shape), std::move(vals), {&a}, "expand_leading", std::move(bw));
}

// ---- normalizing ops -----------------------------------------------------------

Tensor softmax(const Tensor& a, int axis) {
    const int ax = normalize_axis(axis, a.ndim(), "softmax");
    const AxisSplit sp = split_axis(a.shape, ax);
    std::vector<double> vals(a.numel());
    const double* pa = a.ptr();
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t in = 0; in < sp.inner; ++in) {
            double mx = -1e308;
            for (std::size_t x = 0; x < sp.d; ++x)
                mx = std::max(mx, pa[(o * sp.d + x) * sp.inner + in]);
            double s = 0.0;
            for (std::size_t x = 0; x < sp.d; ++x) {
                const double e = std::exp(pa[(o * sp.d + x) * sp.inner + in] - mx);
                vals[(o * sp.d + x) * sp.inner + in] = e;
                s += e;
            }
            for (std::size_t x = 0; x < sp.d; ++x) vals[(o * sp.d + x) * sp.inner + in] /= s;
        }
    auto out_data = std::make_shared<const std::vector<double>>(std::move(vals));
    const int ida = a.node;
    const std::size_t na = a.numel();
    auto bw = [=](const double* g, Gradients& sink) {
        if (ida < 0) return;
        double* da = sink.accum(ida, na);
        const double* y = out_data->data();
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t in = 0; in < sp.inner; ++in) {
                double dot = 0.0;
                for (std::size_t x = 0; x < sp.d; ++x) {
                    const std::size_t ix = (o * sp.d + x) * sp.inner + in;
                    dot += g[ix] * y[ix];
                }
                for (std::size_t x = 0; x < sp.d; ++x) {
                    const std::size_t ix = (o * sp.d + x) * sp.inner + in;
                    da[ix] += y[ix] * (g[ix] - dot);
                }
            }
    };
    Tensor out;
    out.shape = a.shape;
    out.data = out_data;
    Tape* tape = common_tape({&a}, "softmax");
    if (tape) {
        out.tape = tape;
        out.requires_grad = a.requires_grad;
        out.node = tape->emit({ida}, na, std::move(bw));
    }
    return out;
}

Tensor l2_normalize(const Tensor& a, int axis) {
    const int ax = normalize_axis(axis, a.ndim(), "l2_normalize");
    const AxisSplit sp = split_axis(a.shape, ax);
    std::vector<double> vals(a.numel());
    auto norms = std::make_shared<std::vector<double>>(sp.outer * sp.inner);
    const double* pa = a.ptr();
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t in = 0; in < sp.inner; ++in) {
            double n2 = 0.0;
            for (std::size_t x = 0; x < sp.d; ++x) {
                const double v = pa[(o * sp.d + x) * sp.inner + in];
                n2 += v * v;
            }
            const double nrm = std::sqrt(n2);
            (*norms)[o * sp.inner + in] = nrm;
            const double denom = std::max(nrm, kEps);
            for (std::size_t x = 0; x < sp.d; ++x) {
                const std::size_t ix = (o * sp.d + x) * sp.inner + in;
                vals[ix] = pa[ix] / denom;
            }
        }
    const int ida = a.node;
    const std::size_t na = a.numel();
    auto bw = [=](const double* g, Gradients& sink) {
        if (ida < 0) return;
        double* da = sink.accum(ida, na);
        const double* px = a.ptr();
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t in = 0; in < sp.inner; ++in) {
                const double nrm = (*norms)[o * sp.inner + in];
                if (nrm > kEps) {
                    double dot = 0.0;
                    for (std::size_t x = 0; x < sp.d; ++x) {
                        const std::size_t ix = (o * sp.d + x) * sp.inner + in;
                        dot += g[ix] * px[ix];
                    }
                    const double inv = 1.0 / nrm;
                    const double inv3 = inv * inv * inv;
                    for (std::size_t x = 0; x < sp.d; ++x) {
                        const std::size_t ix = (o * sp.d + x) * sp.inner + in;
                        da[ix] += g[ix] * inv - px[ix] * dot * inv3;
                    }
                } else {
                    for (std::size_t x = 0; x < sp.d; ++x) {
                        const std::size_t ix = (o * sp.d + x) * sp.inner + in;
                        da[ix] += g[ix] / kEps;
                    }
                }
            }
    };
    return finish(a.shape, std::move(vals), {&a}, "l2_normalize", std::move(bw));
}

Tensor cosine_sim(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) fail("cosine_sim: shapes must match");
    if (a.ndim() < 1 || a.shape.back() == 0) fail("cosine_sim: empty final dimension");
    Tensor an = l2_normalize(a, -1);
    Tensor bn = l2_normalize(b, -1);
    return sum(mul(an, bn), -1);
}

// ---- gradient checking -----------------------------------------------------------

GradCheckResult grad_check(const GradCheckFn& f,
                           const std::vector<std::pair<Shape, std::vector<double>>>& params,
                           double step) {
    if (step <= 0.0) fail("grad_check: step must be positive");
    GradCheckResult res;

    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(params.size());
    for (const auto& [shape, data] : params) leaves.push_back(tape.leaf(shape, data, true));
    Tensor loss = f(tape, leaves);
    if (!std::isfinite(loss.scalar())) {
        res.nan_failure = true;
        res.nan_param = 0;
        return res;
    }
    Gradients grads = tape.backward(loss);
    std::vector<std::vector<double>> analytic;
    for (const Tensor& l : leaves) analytic.push_back(*tape.grad_of(grads, l).data);

    auto eval_at = [&](const std::vector<std::vector<double>>& vals) -> double {
        Tape t;
        std::vector<Tensor> ls;
        for (std::size_t i = 0; i < params.size(); ++i)
            ls.push_back(t.leaf(params[i].first, vals[i], false));
        return f(t, ls).scalar();
    };

    std::vector<std::vector<double>> work;
    for (const auto& [shape, data] : params) work.push_back(data);

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        for (std::size_t j = 0; j < work[pi].size(); ++j) {
            const double orig = work[pi][j];
            work[pi][j] = orig + step;
            const double fp = eval_at(work);
            work[pi][j] = orig - step;
            const double fm = eval_at(work);
            work[pi][j] = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                res.nan_failure = true;
                res.nan_param = static_cast<int>(pi);
                res.nan_index = j;
                return res;
            }
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[pi][j];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_param = static_cast<int>(pi);
                res.worst_index = j;
            }
        }
    }
    return res;
}

}  // namespace cgsta
