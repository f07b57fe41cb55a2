#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace couda {

// Shapes are lists of dimension sizes. Almost everything here is a matrix
// {rows, cols}; scalars are {1, 1}. Reshape views are the only place a
// non-2-D shape appears (the noise layer's stacked weight block).
using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

// Immutable value handle. When produced while a tape is recording (i.e. some
// input carries a node), the tensor also points at its tape node so gradients
// can flow through it; otherwise it is a plain constant.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);
    static Tensor ones(Shape shape);
    static Tensor eye(int n);
    // 1 x n row vector.
    static Tensor row(std::vector<double> v);

    const Shape& shape() const { return shape_; }
    std::int64_t size() const { return numel(shape_); }
    int rows() const;
    int cols() const;

    const std::vector<double>& data() const { return *data_; }
    std::shared_ptr<const std::vector<double>> data_ptr() const { return data_; }
    double value() const;           // scalar tensors only
    double at(int r, int c) const;  // 2-D tensors only

    bool on_tape() const { return node_ >= 0; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }

private:
    friend class Tape;
    friend Tensor make_op(Tape* tape, Shape shape, std::vector<double> data,
                          std::function<void(Tape&, const std::vector<double>&)> pull);

    std::shared_ptr<const std::vector<double>> data_;
    Shape shape_;
    Tape* tape_ = nullptr;
    int node_ = -1;
};

// Trainable value. Persists across tapes; the optimizer mutates value()
// in place between steps. Identity (the object address) is what gradient
// maps and optimizer state key on, so parameters are not copyable.
class Parameter {
public:
    Parameter(std::string name, Shape shape);
    Parameter(std::string name, Shape shape, std::vector<double> data);

    Parameter(const Parameter&) = delete;
    Parameter& operator=(const Parameter&) = delete;

    const std::string& name() const { return name_; }
    const Shape& shape() const { return shape_; }
    std::int64_t size() const { return numel(shape_); }

    std::vector<double>& value() { return *value_; }
    const std::vector<double>& value() const { return *value_; }

private:
    friend class Tape;

    std::string name_;
    Shape shape_;
    std::shared_ptr<std::vector<double>> value_;
};

// Gradients of one backward pass, keyed by parameter identity. Every
// parameter registered on the tape has an entry; parameters the loss does
// not reach get zeros.
class GradMap {
public:
    const std::vector<double>& at(const Parameter& p) const;
    bool contains(const Parameter& p) const;
    std::size_t size() const { return grads_.size(); }

    auto begin() const { return grads_.begin(); }
    auto end() const { return grads_.end(); }

private:
    friend class Tape;
    std::unordered_map<const Parameter*, std::vector<double>> grads_;
};

// Record of one training step's computation. All losses of a step are built
// on one tape; backward() replays it once in reverse record order. The tape
// owns adjoint buffers, so backward can run repeatedly with identical
// results (adjoints are reset each call).
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Registers a parameter as a leaf node. Repeated calls for the same
    // parameter return the same node so all uses share one adjoint.
    Tensor leaf(Parameter& p);

    // Reverse pass from a scalar loss recorded on this tape. Returns
    // gradients for every registered parameter.
    GradMap backward(const Tensor& loss);

    int num_nodes() const { return static_cast<int>(nodes_.size()); }

private:
    friend Tensor make_op(Tape* tape, Shape shape, std::vector<double> data,
                          std::function<void(Tape&, const std::vector<double>&)> pull);
    friend Tape* merge_tapes(const Tensor& a, const Tensor& b);

    struct Node {
        std::int64_t n = 0;
        std::vector<double> adj;
        std::function<void(Tape&, const std::vector<double>&)> pull;
    };

    int add_node(std::int64_t n, std::function<void(Tape&, const std::vector<double>&)> pull);

public:
    // Adjoint accumulation buffer of a node; used by op pull functions.
    std::vector<double>& adj(int node) { return nodes_[node].adj; }

private:
    std::vector<Node> nodes_;
    std::unordered_map<Parameter*, int> param_nodes_;
    std::vector<Parameter*> params_;
};

// ---- primitive operations ----
//
// Each op validates shapes (hard error naming the op and the offending
// shapes), computes the forward value, and, if any input is on a tape,
// records a node whose pull function accumulates adjoints into the inputs.
// Elementwise binary ops broadcast only scalar-vs-tensor.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
// Natural log. Inputs must be positive; probabilities should be passed
// through clamp_min(x, 1e-12) first.
Tensor log(const Tensor& x);
Tensor pow(const Tensor& x, double e);
Tensor clamp_min(const Tensor& x, double c);
Tensor abs(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);

// Identity in the forward pass (bit-identical data), multiplies the
// upstream gradient by -coeff in the backward pass. coeff must be positive.
Tensor grad_reverse(const Tensor& x, double coeff);

}  // namespace couda
