#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lambo/error.hpp"
#include "lambo/rng.hpp"

namespace lambo {

/// Dense row-major f64 tensor. All compute is 64-bit by design decision:
/// gradient checks stay tight and runs are bit-deterministic.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int rows, int cols, double fill = 0.0)
        : shape{rows, cols}, data(static_cast<std::size_t>(rows) * cols, fill) {}

    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }
    static Tensor row(std::vector<double> values) {
        Tensor t;
        t.shape = {1, static_cast<int>(values.size())};
        t.data = std::move(values);
        return t;
    }
    static Tensor from_rows(int rows, int cols, std::vector<double> values) {
        Tensor t;
        t.shape = {rows, cols};
        t.data = std::move(values);
        if (t.data.size() != static_cast<std::size_t>(rows) * cols) {
            raise(Errc::ShapeMismatch, "from_rows: data length != rows*cols");
        }
        return t;
    }

    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 0 : shape[1]; }
    std::size_t size() const { return data.size(); }

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

using Var = std::int32_t;

/// Reverse-mode tape. Ops append nodes, so creation order is a topological
/// order and backward() walks it in exact reverse. Gradients accumulate
/// additively at fan-out.
///
/// Every op checks its output for NaN/Inf and raises NonFinite: non-finite
/// values anywhere are a contract violation, not a representable state.
/// A tape is single-owner; it must not be shared during a forward/backward pass.
class Tape {
public:
    Var leaf(Tensor value, bool requires_grad = false);

    // -- primitives ---------------------------------------------------------
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);
    Var add_rowvec(Var a, Var v);  // v is (1, cols), broadcast across rows
    Var mul_rowvec(Var a, Var v);
    Var relu(Var a);
    Var sigmoid(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var softmax(Var a);      // per row, max-subtracted
    Var log_softmax(Var a);  // per row, stable
    Var layer_norm(Var a, double eps);  // per row, population variance
    Var embedding_lookup(Var table, int row_index);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_cols(Var a, int col_begin, int col_end);
    Var row(Var a, int row_index);
    Var mean_all(Var a);
    Var sum_all(Var a);
    Var mean_rows(Var a);  // column means -> (1, cols)
    Var pick(Var a, int r, int c);  // scalar element

    // -- access --------------------------------------------------------------
    const Tensor& value(Var v) const { return nodes_[v].value; }
    const Tensor& grad(Var v) const { return nodes_[v].grad; }
    std::size_t node_count() const { return nodes_.size(); }

    /// Reverse accumulation from a scalar output. Raises NotScalar otherwise.
    /// Parameters not on the path keep zero gradients.
    void backward(Var output);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<Var> parents;
        std::function<void(Tape&, Node&)> backprop;  // reads node.grad, accumulates into parents
        bool requires_grad = false;
    };

    Var push(Tensor value, std::vector<Var> parents, std::function<void(Tape&, Node&)> backprop);
    Tensor& grad_ref(Var v);
    void check_finite(const Tensor& t) const;

    std::vector<Node> nodes_;
    friend struct TapeTestAccess;
};

/// Named parameter collection with stable iteration order.
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    int add(const std::string& name, Tensor t);
    int find(const std::string& name) const;  // -1 when absent
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);
    std::size_t total_elements() const;

    /// Raw little-endian bytes of every tensor whose name starts with one of
    /// the given prefixes (all tensors when empty), in set order. Used for
    /// freeze (byte-identity) assertions.
    std::vector<std::uint8_t> bytes(const std::vector<std::string>& prefixes = {}) const;

    /// Indices of parameters whose name starts with one of the prefixes.
    std::vector<int> indices_with_prefix(const std::vector<std::string>& prefixes) const;

    /// Attach every tensor as a gradient-tracked leaf; result aligns with tensors.
    std::vector<Var> attach(Tape& tape) const;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adaptive-moment optimizer state for one ParamSet.
struct OptimState {
    AdamConfig cfg;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t step = 0;

    explicit OptimState(const ParamSet& params, AdamConfig cfg = {});
};

/// One bias-corrected update over the selected parameter indices (all when
/// empty). grads aligns with params.tensors; deterministic given inputs.
void optim_step(ParamSet& params, const std::vector<Tensor>& grads, OptimState& state,
                const std::vector<int>& trainable = {});

/// Builds a scalar loss from parameter leaves. The Var list aligns with
/// params.tensors.
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Central-difference gradient verification on randomly probed coordinates.
/// Returns max over probes of |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
/// probe_ok (param index, flat coordinate) can exclude non-differentiable
/// points; all coordinates are eligible when it is empty.
double grad_check(const LossBuilder& f, ParamSet& params, int probe_count, double h,
                  std::uint64_t seed,
                  const std::function<bool(int, int)>& probe_ok = {});

}  // namespace lambo
