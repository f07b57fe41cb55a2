#include "couda/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace couda {

std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ')';
    return os.str();
}

namespace {

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(op + ": incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
}

void require_2d(const std::string& op, const Tensor& x) {
    if (x.shape().size() != 2)
        throw std::invalid_argument(op + ": expected a 2-D tensor, got " + shape_str(x.shape()));
}

}  // namespace

// ---- Tensor ----

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
    for (int d : shape_) {
        if (d <= 0)
            throw std::invalid_argument("Tensor: non-positive dimension in " + shape_str(shape_));
    }
    if (numel(shape_) != static_cast<std::int64_t>(data.size()))
        throw std::invalid_argument("Tensor: shape " + shape_str(shape_) + " does not match data size " +
                                    std::to_string(data.size()));
    data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::scalar(double v) { return Tensor({1, 1}, {v}); }

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double v) {
    std::vector<double> data(static_cast<std::size_t>(numel(shape)), v);
    return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::eye(int n) {
    std::vector<double> data(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) data[static_cast<std::size_t>(i) * n + i] = 1.0;
    return Tensor({n, n}, std::move(data));
}

Tensor Tensor::row(std::vector<double> v) {
    int n = static_cast<int>(v.size());
    return Tensor({1, n}, std::move(v));
}

int Tensor::rows() const {
    require_2d("rows", *this);
    return shape_[0];
}

int Tensor::cols() const {
    require_2d("cols", *this);
    return shape_[1];
}

double Tensor::value() const {
    if (size() != 1) throw std::invalid_argument("value: tensor " + shape_str(shape_) + " is not a scalar");
    return (*data_)[0];
}

double Tensor::at(int r, int c) const {
    require_2d("at", *this);
    if (r < 0 || r >= shape_[0] || c < 0 || c >= shape_[1])
        throw std::out_of_range("at: index out of range for " + shape_str(shape_));
    return (*data_)[static_cast<std::size_t>(r) * shape_[1] + c];
}

// ---- Parameter ----

Parameter::Parameter(std::string name, Shape shape)
    : name_(std::move(name)), shape_(std::move(shape)) {
    value_ = std::make_shared<std::vector<double>>(static_cast<std::size_t>(numel(shape_)), 0.0);
}

Parameter::Parameter(std::string name, Shape shape, std::vector<double> data)
    : name_(std::move(name)), shape_(std::move(shape)) {
    if (numel(shape_) != static_cast<std::int64_t>(data.size()))
        throw std::invalid_argument("Parameter " + name_ + ": shape " + shape_str(shape_) +
                                    " does not match data size " + std::to_string(data.size()));
    value_ = std::make_shared<std::vector<double>>(std::move(data));
}

// ---- GradMap ----

const std::vector<double>& GradMap::at(const Parameter& p) const {
    auto it = grads_.find(&p);
    if (it == grads_.end())
        throw std::invalid_argument("GradMap: parameter " + p.name() + " was not registered on the tape");
    return it->second;
}

bool GradMap::contains(const Parameter& p) const { return grads_.count(&p) > 0; }

// ---- Tape ----

int Tape::add_node(std::int64_t n, std::function<void(Tape&, const std::vector<double>&)> pull) {
    Node node;
    node.n = n;
    node.adj.assign(static_cast<std::size_t>(n), 0.0);
    node.pull = std::move(pull);
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::leaf(Parameter& p) {
    int node;
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) {
        node = it->second;
    } else {
        node = add_node(p.size(), nullptr);
        param_nodes_.emplace(&p, node);
        params_.push_back(&p);
    }
    Tensor t;
    t.shape_ = p.shape();
    t.data_ = p.value_;
    t.tape_ = this;
    t.node_ = node;
    return t;
}

GradMap Tape::backward(const Tensor& loss) {
    if (loss.tape() != this || !loss.on_tape())
        throw std::invalid_argument("backward: loss was not produced on this tape");
    if (loss.size() != 1)
        throw std::invalid_argument("backward: loss must be a scalar, got " + shape_str(loss.shape()));

    for (Node& n : nodes_) std::fill(n.adj.begin(), n.adj.end(), 0.0);
    nodes_[loss.node()].adj[0] = 1.0;

    for (int i = loss.node(); i >= 0; --i) {
        if (nodes_[i].pull) nodes_[i].pull(*this, nodes_[i].adj);
    }

    GradMap out;
    for (Parameter* p : params_) {
        out.grads_.emplace(p, nodes_[param_nodes_.at(p)].adj);
    }
    return out;
}

// ---- op plumbing ----

Tensor make_op(Tape* tape, Shape shape, std::vector<double> data,
               std::function<void(Tape&, const std::vector<double>&)> pull) {
    Tensor out(std::move(shape), std::move(data));
    if (tape) {
        out.tape_ = tape;
        out.node_ = tape->add_node(out.size(), std::move(pull));
    }
    return out;
}

Tape* merge_tapes(const Tensor& a, const Tensor& b) {
    Tape* ta = a.on_tape() ? a.tape() : nullptr;
    Tape* tb = b.on_tape() ? b.tape() : nullptr;
    if (ta && tb && ta != tb)
        throw std::invalid_argument("operation mixes tensors from two different tapes");
    return ta ? ta : tb;
}

namespace {

using Pull = std::function<void(Tape&, const std::vector<double>&)>;
using DataPtr = std::shared_ptr<const std::vector<double>>;

// Unary elementwise op: forward f(x), backward u * dfdx(x_i, y_i).
Tensor unary_ew(const std::string&, const Tensor& x, const std::function<double(double)>& f,
                const std::function<double(double, double)>& dfdx) {
    const auto& xs = x.data();
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);

    Tape* tape = x.on_tape() ? x.tape() : nullptr;
    Pull pull;
    if (tape) {
        int xn = x.node();
        DataPtr xd = x.data_ptr();
        DataPtr yd = std::make_shared<const std::vector<double>>(out);
        pull = [xn, xd, yd, dfdx](Tape& t, const std::vector<double>& u) {
            auto& g = t.adj(xn);
            for (std::size_t i = 0; i < u.size(); ++i) g[i] += u[i] * dfdx((*xd)[i], (*yd)[i]);
        };
    }
    return make_op(tape, x.shape(), std::move(out), std::move(pull));
}

enum class Bin { add, sub, mul };

double apply_bin(Bin op, double a, double b) {
    switch (op) {
        case Bin::add: return a + b;
        case Bin::sub: return a - b;
        case Bin::mul: return a * b;
    }
    return 0.0;
}

Tensor binary_ew(const std::string& name, Bin op, const Tensor& a, const Tensor& b) {
    const bool a_scalar = a.size() == 1;
    const bool b_scalar = b.size() == 1;
    if (!(a.shape() == b.shape() || a_scalar || b_scalar)) shape_error(name, a.shape(), b.shape());

    const auto& as = a.data();
    const auto& bs = b.data();
    const Shape& out_shape = a_scalar && !b_scalar ? b.shape() : a.shape();
    const std::size_t n = static_cast<std::size_t>(numel(out_shape));

    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = apply_bin(op, as[a_scalar ? 0 : i], bs[b_scalar ? 0 : i]);

    Tape* tape = merge_tapes(a, b);
    Pull pull;
    if (tape) {
        int an = a.on_tape() ? a.node() : -1;
        int bn = b.on_tape() ? b.node() : -1;
        DataPtr ad = a.data_ptr();
        DataPtr bd = b.data_ptr();
        pull = [op, an, bn, ad, bd, a_scalar, b_scalar](Tape& t, const std::vector<double>& u) {
            if (an >= 0) {
                auto& g = t.adj(an);
                for (std::size_t i = 0; i < u.size(); ++i) {
                    double d = op == Bin::mul ? u[i] * (*bd)[b_scalar ? 0 : i] : u[i];
                    g[a_scalar ? 0 : i] += d;
                }
            }
            if (bn >= 0) {
                auto& g = t.adj(bn);
                for (std::size_t i = 0; i < u.size(); ++i) {
                    double d = 0.0;
                    switch (op) {
                        case Bin::add: d = u[i]; break;
                        case Bin::sub: d = -u[i]; break;
                        case Bin::mul: d = u[i] * (*ad)[a_scalar ? 0 : i]; break;
                    }
                    g[b_scalar ? 0 : i] += d;
                }
            }
        };
    }
    return make_op(tape, out_shape, std::move(out), std::move(pull));
}

}  // namespace

// ---- primitive operations ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d("matmul", a);
    require_2d("matmul", b);
    if (a.cols() != b.rows()) shape_error("matmul", a.shape(), b.shape());

    const int m = a.rows(), k = a.cols(), n = b.cols();
    const auto& as = a.data();
    const auto& bs = b.data();
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = as[static_cast<std::size_t>(i) * k + p];
            const double* brow = &bs[static_cast<std::size_t>(p) * n];
            double* orow = &out[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }

    Tape* tape = merge_tapes(a, b);
    Pull pull;
    if (tape) {
        int an = a.on_tape() ? a.node() : -1;
        int bn = b.on_tape() ? b.node() : -1;
        DataPtr ad = a.data_ptr();
        DataPtr bd = b.data_ptr();
        pull = [an, bn, ad, bd, m, k, n](Tape& t, const std::vector<double>& u) {
            if (an >= 0) {
                // dA = U @ B^T
                auto& g = t.adj(an);
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        double s = 0.0;
                        for (int j = 0; j < n; ++j)
                            s += u[static_cast<std::size_t>(i) * n + j] * (*bd)[static_cast<std::size_t>(p) * n + j];
                        g[static_cast<std::size_t>(i) * k + p] += s;
                    }
            }
            if (bn >= 0) {
                // dB = A^T @ U
                auto& g = t.adj(bn);
                for (int p = 0; p < k; ++p)
                    for (int j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (int i = 0; i < m; ++i)
                            s += (*ad)[static_cast<std::size_t>(i) * k + p] * u[static_cast<std::size_t>(i) * n + j];
                        g[static_cast<std::size_t>(p) * n + j] += s;
                    }
            }
        };
    }
    return make_op(tape, {m, n}, std::move(out), std::move(pull));
}

Tensor add(const Tensor& a, const Tensor& b) { return binary_ew("add", Bin::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_ew("sub", Bin::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_ew("mul", Bin::mul, a, b); }

Tensor scale(const Tensor& x, double c) {
    return unary_ew("scale", x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tensor relu(const Tensor& x) {
    return unary_ew("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
                    [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
    return unary_ew("leaky_relu", x, [slope](double v) { return v > 0.0 ? v : slope * v; },
                    [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(const Tensor& x) {
    auto f = [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        double e = std::exp(v);
        return e / (1.0 + e);
    };
    return unary_ew("sigmoid", x, f, [](double, double y) { return y * (1.0 - y); });
}

Tensor softmax_rows(const Tensor& x) {
    require_2d("softmax_rows", x);
    const int m = x.rows(), n = x.cols();
    const auto& xs = x.data();
    std::vector<double> out(xs.size());
    for (int i = 0; i < m; ++i) {
        const double* xr = &xs[static_cast<std::size_t>(i) * n];
        double* yr = &out[static_cast<std::size_t>(i) * n];
        double mx = xr[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            z += yr[j];
        }
        for (int j = 0; j < n; ++j) yr[j] /= z;
    }

    Tape* tape = x.on_tape() ? x.tape() : nullptr;
    Pull pull;
    if (tape) {
        int xn = x.node();
        DataPtr yd = std::make_shared<const std::vector<double>>(out);
        pull = [xn, yd, m, n](Tape& t, const std::vector<double>& u) {
            auto& g = t.adj(xn);
            for (int i = 0; i < m; ++i) {
                const double* yr = &(*yd)[static_cast<std::size_t>(i) * n];
                const double* ur = &u[static_cast<std::size_t>(i) * n];
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += ur[j] * yr[j];
                double* gr = &g[static_cast<std::size_t>(i) * n];
                for (int j = 0; j < n; ++j) gr[j] += yr[j] * (ur[j] - dot);
            }
        };
    }
    return make_op(tape, x.shape(), std::move(out), std::move(pull));
}

Tensor log(const Tensor& x) {
    return unary_ew("log", x, [](double v) { return std::log(v); },
                    [](double v, double) { return 1.0 / v; });
}

Tensor pow(const Tensor& x, double e) {
    auto dfdx = [e](double v, double) {
        if (e == 0.0) return 0.0;
        if (v == 0.0 && e < 1.0) return 0.0;
        return e * std::pow(v, e - 1.0);
    };
    return unary_ew("pow", x, [e](double v) { return std::pow(v, e); }, dfdx);
}

Tensor clamp_min(const Tensor& x, double c) {
    return unary_ew("clamp_min", x, [c](double v) { return v > c ? v : c; },
                    [c](double v, double) { return v > c ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& x) {
    return unary_ew("abs", x, [](double v) { return std::fabs(v); },
                    [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor sum(const Tensor& x) {
    const auto& xs = x.data();
    double s = 0.0;
    for (double v : xs) s += v;

    Tape* tape = x.on_tape() ? x.tape() : nullptr;
    Pull pull;
    if (tape) {
        int xn = x.node();
        pull = [xn](Tape& t, const std::vector<double>& u) {
            auto& g = t.adj(xn);
            for (double& v : g) v += u[0];
        };
    }
    return make_op(tape, {1, 1}, {s}, std::move(pull));
}

Tensor mean(const Tensor& x) {
    const auto& xs = x.data();
    const double n = static_cast<double>(xs.size());
    double s = 0.0;
    for (double v : xs) s += v;

    Tape* tape = x.on_tape() ? x.tape() : nullptr;
    Pull pull;
    if (tape) {
        int xn = x.node();
        pull = [xn, n](Tape& t, const std::vector<double>& u) {
            auto& g = t.adj(xn);
            for (double& v : g) v += u[0] / n;
        };
    }
    return make_op(tape, {1, 1}, {s / n}, std::move(pull));
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
    require_2d("concat", a);
    require_2d("concat", b);
    if (axis != 0 && axis != 1)
        throw std::invalid_argument("concat: axis must be 0 or 1, got " + std::to_string(axis));
    if (axis == 0 && a.cols() != b.cols()) shape_error("concat", a.shape(), b.shape());
    if (axis == 1 && a.rows() != b.rows()) shape_error("concat", a.shape(), b.shape());

    const int ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
    const auto& as = a.data();
    const auto& bs = b.data();
    Shape out_shape = axis == 0 ? Shape{ar + br, ac} : Shape{ar, ac + bc};
    std::vector<double> out(static_cast<std::size_t>(numel(out_shape)));
    if (axis == 0) {
        std::copy(as.begin(), as.end(), out.begin());
        std::copy(bs.begin(), bs.end(), out.begin() + as.size());
    } else {
        for (int i = 0; i < ar; ++i) {
            std::copy(as.begin() + static_cast<std::size_t>(i) * ac,
                      as.begin() + static_cast<std::size_t>(i + 1) * ac,
                      out.begin() + static_cast<std::size_t>(i) * (ac + bc));
            std::copy(bs.begin() + static_cast<std::size_t>(i) * bc,
                      bs.begin() + static_cast<std::size_t>(i + 1) * bc,
                      out.begin() + static_cast<std::size_t>(i) * (ac + bc) + ac);
        }
    }

    Tape* tape = merge_tapes(a, b);
    Pull pull;
    if (tape) {
        int an = a.on_tape() ? a.node() : -1;
        int bn = b.on_tape() ? b.node() : -1;
        pull = [an, bn, axis, ar, ac, bc](Tape& t, const std::vector<double>& u) {
            if (axis == 0) {
                const std::size_t na = static_cast<std::size_t>(ar) * ac;
                if (an >= 0) {
                    auto& g = t.adj(an);
                    for (std::size_t i = 0; i < na; ++i) g[i] += u[i];
                }
                if (bn >= 0) {
                    auto& g = t.adj(bn);
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += u[na + i];
                }
            } else {
                const int oc = ac + bc;
                if (an >= 0) {
                    auto& g = t.adj(an);
                    for (int i = 0; i < ar; ++i)
                        for (int j = 0; j < ac; ++j)
                            g[static_cast<std::size_t>(i) * ac + j] += u[static_cast<std::size_t>(i) * oc + j];
                }
                if (bn >= 0) {
                    auto& g = t.adj(bn);
                    for (int i = 0; i < ar; ++i)
                        for (int j = 0; j < bc; ++j)
                            g[static_cast<std::size_t>(i) * bc + j] += u[static_cast<std::size_t>(i) * oc + ac + j];
                }
            }
        };
    }
    return make_op(tape, std::move(out_shape), std::move(out), std::move(pull));
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (numel(shape) != x.size())
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));

    Tape* tape = x.on_tape() ? x.tape() : nullptr;
    Pull pull;
    if (tape) {
        int xn = x.node();
        pull = [xn](Tape& t, const std::vector<double>& u) {
            auto& g = t.adj(xn);
            for (std::size_t i = 0; i < u.size(); ++i) g[i] += u[i];
        };
    }
    return make_op(tape, std::move(shape), x.data(), std::move(pull));
}

Tensor transpose(const Tensor& x) {
    require_2d("transpose", x);
    const int m = x.rows(), n = x.cols();
    const auto& xs = x.data();
    std::vector<double> out(xs.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out[static_cast<std::size_t>(j) * m + i] = xs[static_cast<std::size_t>(i) * n + j];

    Tape* tape = x.on_tape() ? x.tape() : nullptr;
    Pull pull;
    if (tape) {
        int xn = x.node();
        pull = [xn, m, n](Tape& t, const std::vector<double>& u) {
            auto& g = t.adj(xn);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    g[static_cast<std::size_t>(i) * n + j] += u[static_cast<std::size_t>(j) * m + i];
        };
    }
    return make_op(tape, {n, m}, std::move(out), std::move(pull));
}

Tensor grad_reverse(const Tensor& x, double coeff) {
    if (!(coeff > 0.0))
        throw std::invalid_argument("grad_reverse: coeff must be positive, got " + std::to_string(coeff));

    Tape* tape = x.on_tape() ? x.tape() : nullptr;
    Pull pull;
    if (tape) {
        int xn = x.node();
        pull = [xn, coeff](Tape& t, const std::vector<double>& u) {
            auto& g = t.adj(xn);
            for (std::size_t i = 0; i < u.size(); ++i) g[i] += -coeff * u[i];
        };
    }
    // Forward value is the input, bit for bit.
    return make_op(tape, x.shape(), x.data(), std::move(pull));
}

}  // namespace couda
