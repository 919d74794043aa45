#include "lambo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace lambo {

namespace {

void require_2d(const Tensor& t, const char* op) {
    if (t.shape.size() != 2 || t.shape[0] < 1 || t.shape[1] < 1) {
        raise(Errc::ShapeMismatch, std::string(op) + ": operand must be a non-empty 2-D tensor");
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        raise(Errc::ShapeMismatch, std::string(op) + ": operand shapes differ");
    }
}

}  // namespace

void Tape::check_finite(const Tensor& t) const {
    for (double v : t.data) {
        if (!std::isfinite(v)) raise(Errc::NonFinite, "non-finite value produced by tensor op");
    }
}

Var Tape::push(Tensor value, std::vector<Var> parents,
               std::function<void(Tape&, Node&)> backprop) {
    check_finite(value);
    Node node;
    node.value = std::move(value);
    node.parents = std::move(parents);
    for (Var p : node.parents) {
        if (nodes_[p].requires_grad) {
            node.requires_grad = true;
            break;
        }
    }
    node.backprop = node.requires_grad ? std::move(backprop) : nullptr;
    nodes_.push_back(std::move(node));
    return static_cast<Var>(nodes_.size() - 1);
}

Tensor& Tape::grad_ref(Var v) {
    Node& node = nodes_[v];
    if (node.grad.data.empty()) {
        node.grad = Tensor(node.value.rows(), node.value.cols());
    }
    return node.grad;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    require_2d(value, "leaf");
    check_finite(value);
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return static_cast<Var>(nodes_.size() - 1);
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    require_2d(A, "matmul");
    require_2d(B, "matmul");
    if (A.cols() != B.rows()) raise(Errc::ShapeMismatch, "matmul: inner dimensions differ");

    const int n = A.rows(), k = A.cols(), m = B.cols();
    Tensor out(n, m);
    for (int i = 0; i < n; ++i) {
        const double* arow = &A.data[static_cast<std::size_t>(i) * k];
        double* orow = &out.data[static_cast<std::size_t>(i) * m];
        for (int t = 0; t < k; ++t) {
            const double av = arow[t];
            const double* brow = &B.data[static_cast<std::size_t>(t) * m];
            for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
    return push(std::move(out), {a, b}, [a, b](Tape& tape, Node& node) {
        const Tensor& G = node.grad;
        const Tensor& A = tape.nodes_[a].value;
        const Tensor& B = tape.nodes_[b].value;
        const int n = A.rows(), k = A.cols(), m = B.cols();
        if (tape.nodes_[a].requires_grad) {
            Tensor& dA = tape.grad_ref(a);  // dA += G * B^T
            for (int i = 0; i < n; ++i)
                for (int t = 0; t < k; ++t) {
                    double acc = 0.0;
                    for (int j = 0; j < m; ++j) acc += G.at(i, j) * B.at(t, j);
                    dA.at(i, t) += acc;
                }
        }
        if (tape.nodes_[b].requires_grad) {
            Tensor& dB = tape.grad_ref(b);  // dB += A^T * G
            for (int t = 0; t < k; ++t)
                for (int j = 0; j < m; ++j) {
                    double acc = 0.0;
                    for (int i = 0; i < n; ++i) acc += A.at(i, t) * G.at(i, j);
                    dB.at(t, j) += acc;
                }
        }
    });
}

Var Tape::transpose(Var a) {
    const Tensor& A = nodes_[a].value;
    require_2d(A, "transpose");
    Tensor out(A.cols(), A.rows());
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j) out.at(j, i) = A.at(i, j);
    return push(std::move(out), {a}, [a](Tape& tape, Node& node) {
        Tensor& dA = tape.grad_ref(a);
        for (int i = 0; i < node.grad.rows(); ++i)
            for (int j = 0; j < node.grad.cols(); ++j) dA.at(j, i) += node.grad.at(i, j);
    });
}

Var Tape::add(Var a, Var b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    require_same_shape(A, B, "add");
    Tensor out = A;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
    return push(std::move(out), {a, b}, [a, b](Tape& tape, Node& node) {
        for (Var p : {a, b}) {
            if (!tape.nodes_[p].requires_grad) continue;
            Tensor& d = tape.grad_ref(p);
            for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] += node.grad.data[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    require_same_shape(A, B, "sub");
    Tensor out = A;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= B.data[i];
    return push(std::move(out), {a, b}, [a, b](Tape& tape, Node& node) {
        if (tape.nodes_[a].requires_grad) {
            Tensor& dA = tape.grad_ref(a);
            for (std::size_t i = 0; i < dA.data.size(); ++i) dA.data[i] += node.grad.data[i];
        }
        if (tape.nodes_[b].requires_grad) {
            Tensor& dB = tape.grad_ref(b);
            for (std::size_t i = 0; i < dB.data.size(); ++i) dB.data[i] -= node.grad.data[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    require_same_shape(A, B, "mul");
    Tensor out = A;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
    return push(std::move(out), {a, b}, [a, b](Tape& tape, Node& node) {
        const Tensor& A = tape.nodes_[a].value;
        const Tensor& B = tape.nodes_[b].value;
        if (tape.nodes_[a].requires_grad) {
            Tensor& dA = tape.grad_ref(a);
            for (std::size_t i = 0; i < dA.data.size(); ++i)
                dA.data[i] += node.grad.data[i] * B.data[i];
        }
        if (tape.nodes_[b].requires_grad) {
            Tensor& dB = tape.grad_ref(b);
            for (std::size_t i = 0; i < dB.data.size(); ++i)
                dB.data[i] += node.grad.data[i] * A.data[i];
        }
    });
}

Var Tape::scale(Var a, double c) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v *= c;
    return push(std::move(out), {a}, [a, c](Tape& tape, Node& node) {
        Tensor& dA = tape.grad_ref(a);
        for (std::size_t i = 0; i < dA.data.size(); ++i) dA.data[i] += c * node.grad.data[i];
    });
}

Var Tape::add_scalar(Var a, double c) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v += c;
    return push(std::move(out), {a}, [a](Tape& tape, Node& node) {
        Tensor& dA = tape.grad_ref(a);
        for (std::size_t i = 0; i < dA.data.size(); ++i) dA.data[i] += node.grad.data[i];
    });
}

Var Tape::add_rowvec(Var a, Var v) {
    const Tensor& A = nodes_[a].value;
    const Tensor& V = nodes_[v].value;
    require_2d(A, "add_rowvec");
    if (V.rows() != 1 || V.cols() != A.cols()) {
        raise(Errc::ShapeMismatch, "add_rowvec: vector must be (1, cols)");
    }
    Tensor out = A;
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) out.at(i, j) += V.at(0, j);
    return push(std::move(out), {a, v}, [a, v](Tape& tape, Node& node) {
        if (tape.nodes_[a].requires_grad) {
            Tensor& dA = tape.grad_ref(a);
            for (std::size_t i = 0; i < dA.data.size(); ++i) dA.data[i] += node.grad.data[i];
        }
        if (tape.nodes_[v].requires_grad) {
            Tensor& dV = tape.grad_ref(v);
            for (int i = 0; i < node.grad.rows(); ++i)
                for (int j = 0; j < node.grad.cols(); ++j) dV.at(0, j) += node.grad.at(i, j);
        }
    });
}

Var Tape::mul_rowvec(Var a, Var v) {
    const Tensor& A = nodes_[a].value;
    const Tensor& V = nodes_[v].value;
    require_2d(A, "mul_rowvec");
    if (V.rows() != 1 || V.cols() != A.cols()) {
        raise(Errc::ShapeMismatch, "mul_rowvec: vector must be (1, cols)");
    }
    Tensor out = A;
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) out.at(i, j) *= V.at(0, j);
    return push(std::move(out), {a, v}, [a, v](Tape& tape, Node& node) {
        const Tensor& A = tape.nodes_[a].value;
        const Tensor& V = tape.nodes_[v].value;
        if (tape.nodes_[a].requires_grad) {
            Tensor& dA = tape.grad_ref(a);
            for (int i = 0; i < node.grad.rows(); ++i)
                for (int j = 0; j < node.grad.cols(); ++j)
                    dA.at(i, j) += node.grad.at(i, j) * V.at(0, j);
        }
        if (tape.nodes_[v].requires_grad) {
            Tensor& dV = tape.grad_ref(v);
            for (int i = 0; i < node.grad.rows(); ++i)
                for (int j = 0; j < node.grad.cols(); ++j)
                    dV.at(0, j) += node.grad.at(i, j) * A.at(i, j);
        }
    });
}

Var Tape::relu(Var a) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), {a}, [a](Tape& tape, Node& node) {
        const Tensor& A = tape.nodes_[a].value;
        Tensor& dA = tape.grad_ref(a);
        for (std::size_t i = 0; i < dA.data.size(); ++i)
            if (A.data[i] > 0.0) dA.data[i] += node.grad.data[i];
    });
}

Var Tape::sigmoid(Var a) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) {
        // Stable in both tails.
        v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    return push(std::move(out), {a}, [a](Tape& tape, Node& node) {
        Tensor& dA = tape.grad_ref(a);
        for (std::size_t i = 0; i < dA.data.size(); ++i) {
            const double s = node.value.data[i];
            dA.data[i] += node.grad.data[i] * s * (1.0 - s);
        }
    });
}

Var Tape::exp(Var a) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v = std::exp(v);
    return push(std::move(out), {a}, [a](Tape& tape, Node& node) {
        Tensor& dA = tape.grad_ref(a);
        for (std::size_t i = 0; i < dA.data.size(); ++i)
            dA.data[i] += node.grad.data[i] * node.value.data[i];
    });
}

Var Tape::log(Var a) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v = std::log(v);
    return push(std::move(out), {a}, [a](Tape& tape, Node& node) {
        const Tensor& A = tape.nodes_[a].value;
        Tensor& dA = tape.grad_ref(a);
        for (std::size_t i = 0; i < dA.data.size(); ++i)
            dA.data[i] += node.grad.data[i] / A.data[i];
    });
}

Var Tape::softmax(Var a) {
    const Tensor& A = nodes_[a].value;
    require_2d(A, "softmax");
    Tensor out = A;
    for (int i = 0; i < out.rows(); ++i) {
        double mx = out.at(i, 0);
        for (int j = 1; j < out.cols(); ++j) mx = std::max(mx, out.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < out.cols(); ++j) {
            out.at(i, j) = std::exp(out.at(i, j) - mx);
            sum += out.at(i, j);
        }
        for (int j = 0; j < out.cols(); ++j) out.at(i, j) /= sum;
    }
    return push(std::move(out), {a}, [a](Tape& tape, Node& node) {
        Tensor& dA = tape.grad_ref(a);
        for (int i = 0; i < node.value.rows(); ++i) {
            double dot = 0.0;
            for (int j = 0; j < node.value.cols(); ++j)
                dot += node.grad.at(i, j) * node.value.at(i, j);
            for (int j = 0; j < node.value.cols(); ++j)
                dA.at(i, j) += node.value.at(i, j) * (node.grad.at(i, j) - dot);
        }
    });
}

Var Tape::log_softmax(Var a) {
    const Tensor& A = nodes_[a].value;
    require_2d(A, "log_softmax");
    Tensor out = A;
    for (int i = 0; i < out.rows(); ++i) {
        double mx = out.at(i, 0);
        for (int j = 1; j < out.cols(); ++j) mx = std::max(mx, out.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < out.cols(); ++j) sum += std::exp(out.at(i, j) - mx);
        const double logz = mx + std::log(sum);
        for (int j = 0; j < out.cols(); ++j) out.at(i, j) -= logz;
    }
    return push(std::move(out), {a}, [a](Tape& tape, Node& node) {
        Tensor& dA = tape.grad_ref(a);
        for (int i = 0; i < node.value.rows(); ++i) {
            double gsum = 0.0;
            for (int j = 0; j < node.value.cols(); ++j) gsum += node.grad.at(i, j);
            for (int j = 0; j < node.value.cols(); ++j)
                dA.at(i, j) += node.grad.at(i, j) - std::exp(node.value.at(i, j)) * gsum;
        }
    });
}

Var Tape::layer_norm(Var a, double eps) {
    const Tensor& A = nodes_[a].value;
    require_2d(A, "layer_norm");
    const int cols = A.cols();
    Tensor out(A.rows(), cols);
    Tensor inv_std(A.rows(), 1);
    for (int i = 0; i < A.rows(); ++i) {
        double mean = 0.0;
        for (int j = 0; j < cols; ++j) mean += A.at(i, j);
        mean /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double d = A.at(i, j) - mean;
            var += d * d;
        }
        var /= cols;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std.at(i, 0) = is;
        for (int j = 0; j < cols; ++j) out.at(i, j) = (A.at(i, j) - mean) * is;
    }
    Tensor normalized = out;
    return push(std::move(out), {a},
                [a, inv_std = std::move(inv_std), normalized = std::move(normalized)](
                    Tape& tape, Node& node) {
                    Tensor& dA = tape.grad_ref(a);
                    const int cols = node.value.cols();
                    for (int i = 0; i < node.value.rows(); ++i) {
                        double gmean = 0.0, gydot = 0.0;
                        for (int j = 0; j < cols; ++j) {
                            gmean += node.grad.at(i, j);
                            gydot += node.grad.at(i, j) * normalized.at(i, j);
                        }
                        gmean /= cols;
                        gydot /= cols;
                        const double is = inv_std.at(i, 0);
                        for (int j = 0; j < cols; ++j) {
                            dA.at(i, j) += is * (node.grad.at(i, j) - gmean -
                                                 normalized.at(i, j) * gydot);
                        }
                    }
                });
}

Var Tape::embedding_lookup(Var table, int row_index) {
    const Tensor& T = nodes_[table].value;
    require_2d(T, "embedding_lookup");
    if (row_index < 0 || row_index >= T.rows()) {
        raise(Errc::ShapeMismatch, "embedding_lookup: row index out of range");
    }
    Tensor out(1, T.cols());
    for (int j = 0; j < T.cols(); ++j) out.at(0, j) = T.at(row_index, j);
    return push(std::move(out), {table}, [table, row_index](Tape& tape, Node& node) {
        Tensor& dT = tape.grad_ref(table);
        for (int j = 0; j < node.grad.cols(); ++j) dT.at(row_index, j) += node.grad.at(0, j);
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) raise(Errc::ShapeMismatch, "concat_rows: no operands");
    const int cols = nodes_[parts[0]].value.cols();
    int rows = 0;
    for (Var p : parts) {
        require_2d(nodes_[p].value, "concat_rows");
        if (nodes_[p].value.cols() != cols) {
            raise(Errc::ShapeMismatch, "concat_rows: column counts differ");
        }
        rows += nodes_[p].value.rows();
    }
    Tensor out(rows, cols);
    int r = 0;
    for (Var p : parts) {
        const Tensor& P = nodes_[p].value;
        std::copy(P.data.begin(), P.data.end(), out.data.begin() + static_cast<std::size_t>(r) * cols);
        r += P.rows();
    }
    return push(std::move(out), parts, [parts](Tape& tape, Node& node) {
        int r = 0;
        for (Var p : parts) {
            const int prows = tape.nodes_[p].value.rows();
            if (tape.nodes_[p].requires_grad) {
                Tensor& dP = tape.grad_ref(p);
                for (int i = 0; i < prows; ++i)
                    for (int j = 0; j < node.grad.cols(); ++j)
                        dP.at(i, j) += node.grad.at(r + i, j);
            }
            r += prows;
        }
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) raise(Errc::ShapeMismatch, "concat_cols: no operands");
    const int rows = nodes_[parts[0]].value.rows();
    int cols = 0;
    for (Var p : parts) {
        require_2d(nodes_[p].value, "concat_cols");
        if (nodes_[p].value.rows() != rows) {
            raise(Errc::ShapeMismatch, "concat_cols: row counts differ");
        }
        cols += nodes_[p].value.cols();
    }
    Tensor out(rows, cols);
    int c = 0;
    for (Var p : parts) {
        const Tensor& P = nodes_[p].value;
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < P.cols(); ++j) out.at(i, c + j) = P.at(i, j);
        c += P.cols();
    }
    return push(std::move(out), parts, [parts](Tape& tape, Node& node) {
        int c = 0;
        for (Var p : parts) {
            const int pcols = tape.nodes_[p].value.cols();
            if (tape.nodes_[p].requires_grad) {
                Tensor& dP = tape.grad_ref(p);
                for (int i = 0; i < node.grad.rows(); ++i)
                    for (int j = 0; j < pcols; ++j) dP.at(i, j) += node.grad.at(i, c + j);
            }
            c += pcols;
        }
    });
}

Var Tape::slice_cols(Var a, int col_begin, int col_end) {
    const Tensor& A = nodes_[a].value;
    require_2d(A, "slice_cols");
    if (col_begin < 0 || col_end > A.cols() || col_begin >= col_end) {
        raise(Errc::ShapeMismatch, "slice_cols: bad column range");
    }
    Tensor out(A.rows(), col_end - col_begin);
    for (int i = 0; i < A.rows(); ++i)
        for (int j = col_begin; j < col_end; ++j) out.at(i, j - col_begin) = A.at(i, j);
    return push(std::move(out), {a}, [a, col_begin](Tape& tape, Node& node) {
        Tensor& dA = tape.grad_ref(a);
        for (int i = 0; i < node.grad.rows(); ++i)
            for (int j = 0; j < node.grad.cols(); ++j)
                dA.at(i, col_begin + j) += node.grad.at(i, j);
    });
}

Var Tape::row(Var a, int row_index) {
    const Tensor& A = nodes_[a].value;
    require_2d(A, "row");
    if (row_index < 0 || row_index >= A.rows()) {
        raise(Errc::ShapeMismatch, "row: index out of range");
    }
    Tensor out(1, A.cols());
    for (int j = 0; j < A.cols(); ++j) out.at(0, j) = A.at(row_index, j);
    return push(std::move(out), {a}, [a, row_index](Tape& tape, Node& node) {
        Tensor& dA = tape.grad_ref(a);
        for (int j = 0; j < node.grad.cols(); ++j)
            dA.at(row_index, j) += node.grad.at(0, j);
    });
}

Var Tape::mean_all(Var a) {
    const Tensor& A = nodes_[a].value;
    double sum = 0.0;
    for (double v : A.data) sum += v;
    const double inv = 1.0 / static_cast<double>(A.size());
    return push(Tensor::scalar(sum * inv), {a}, [a, inv](Tape& tape, Node& node) {
        Tensor& dA = tape.grad_ref(a);
        const double g = node.grad.data[0] * inv;
        for (double& v : dA.data) v += g;
    });
}

Var Tape::sum_all(Var a) {
    const Tensor& A = nodes_[a].value;
    double sum = 0.0;
    for (double v : A.data) sum += v;
    return push(Tensor::scalar(sum), {a}, [a](Tape& tape, Node& node) {
        Tensor& dA = tape.grad_ref(a);
        const double g = node.grad.data[0];
        for (double& v : dA.data) v += g;
    });
}

Var Tape::mean_rows(Var a) {
    const Tensor& A = nodes_[a].value;
    require_2d(A, "mean_rows");
    Tensor out(1, A.cols());
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j) out.at(0, j) += A.at(i, j);
    const double inv = 1.0 / A.rows();
    for (double& v : out.data) v *= inv;
    return push(std::move(out), {a}, [a, inv](Tape& tape, Node& node) {
        Tensor& dA = tape.grad_ref(a);
        for (int i = 0; i < dA.rows(); ++i)
            for (int j = 0; j < dA.cols(); ++j) dA.at(i, j) += node.grad.at(0, j) * inv;
    });
}

Var Tape::pick(Var a, int r, int c) {
    const Tensor& A = nodes_[a].value;
    require_2d(A, "pick");
    if (r < 0 || r >= A.rows() || c < 0 || c >= A.cols()) {
        raise(Errc::ShapeMismatch, "pick: index out of range");
    }
    return push(Tensor::scalar(A.at(r, c)), {a}, [a, r, c](Tape& tape, Node& node) {
        tape.grad_ref(a).at(r, c) += node.grad.data[0];
    });
}

void Tape::backward(Var output) {
    Node& out = nodes_[output];
    if (out.value.size() != 1) raise(Errc::NotScalar, "backward: output must be a scalar");

    for (Node& node : nodes_) {
        if (!node.grad.data.empty()) {
            std::fill(node.grad.data.begin(), node.grad.data.end(), 0.0);
        }
    }
    grad_ref(output).data[0] = 1.0;

    for (Var v = output; v >= 0; --v) {
        Node& node = nodes_[v];
        if (!node.requires_grad || !node.backprop || node.grad.data.empty()) continue;
        node.backprop(*this, node);
    }
    // Leaves never touched by the walk keep empty grads; expose them as zeros.
    for (Node& node : nodes_) {
        if (node.requires_grad && node.grad.data.empty()) {
            node.grad = Tensor(node.value.rows(), node.value.cols());
        }
    }
}

// ---------------------------------------------------------------------------

int ParamSet::add(const std::string& name, Tensor t) {
    names.push_back(name);
    tensors.push_back(std::move(t));
    return static_cast<int>(tensors.size() - 1);
}

int ParamSet::find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
}

const Tensor& ParamSet::get(const std::string& name) const {
    const int i = find(name);
    if (i < 0) raise(Errc::ConfigError, "unknown parameter: " + name);
    return tensors[i];
}

Tensor& ParamSet::get(const std::string& name) {
    const int i = find(name);
    if (i < 0) raise(Errc::ConfigError, "unknown parameter: " + name);
    return tensors[i];
}

std::size_t ParamSet::total_elements() const {
    std::size_t n = 0;
    for (const Tensor& t : tensors) n += t.size();
    return n;
}

std::vector<std::uint8_t> ParamSet::bytes(const std::vector<std::string>& prefixes) const {
    std::vector<std::uint8_t> out;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        bool keep = prefixes.empty();
        for (const auto& p : prefixes) {
            if (names[i].rfind(p, 0) == 0) {
                keep = true;
                break;
            }
        }
        if (!keep) continue;
        const std::size_t nbytes = tensors[i].data.size() * sizeof(double);
        const std::size_t off = out.size();
        out.resize(off + nbytes);
        std::memcpy(out.data() + off, tensors[i].data.data(), nbytes);
    }
    return out;
}

std::vector<int> ParamSet::indices_with_prefix(const std::vector<std::string>& prefixes) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < names.size(); ++i) {
        for (const auto& p : prefixes) {
            if (names[i].rfind(p, 0) == 0) {
                out.push_back(static_cast<int>(i));
                break;
            }
        }
    }
    return out;
}

std::vector<Var> ParamSet::attach(Tape& tape) const {
    std::vector<Var> vars;
    vars.reserve(tensors.size());
    for (const Tensor& t : tensors) vars.push_back(tape.leaf(t, true));
    return vars;
}

// ---------------------------------------------------------------------------

OptimState::OptimState(const ParamSet& params, AdamConfig cfg_in) : cfg(cfg_in) {
    m.reserve(params.tensors.size());
    v.reserve(params.tensors.size());
    for (const Tensor& t : params.tensors) {
        m.emplace_back(t.rows(), t.cols());
        v.emplace_back(t.rows(), t.cols());
    }
}

void optim_step(ParamSet& params, const std::vector<Tensor>& grads, OptimState& state,
                const std::vector<int>& trainable) {
    if (grads.size() != params.tensors.size()) {
        raise(Errc::ShapeMismatch, "optim_step: gradient count != parameter count");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.cfg.beta2, static_cast<double>(state.step));

    auto update_one = [&](int i) {
        Tensor& p = params.tensors[i];
        const Tensor& g = grads[i];
        if (!p.same_shape(g)) raise(Errc::ShapeMismatch, "optim_step: gradient shape mismatch");
        Tensor& mi = state.m[i];
        Tensor& vi = state.v[i];
        for (std::size_t k = 0; k < p.data.size(); ++k) {
            mi.data[k] = state.cfg.beta1 * mi.data[k] + (1.0 - state.cfg.beta1) * g.data[k];
            vi.data[k] = state.cfg.beta2 * vi.data[k] + (1.0 - state.cfg.beta2) * g.data[k] * g.data[k];
            const double mhat = mi.data[k] / bc1;
            const double vhat = vi.data[k] / bc2;
            p.data[k] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
        }
    };

    if (trainable.empty()) {
        for (std::size_t i = 0; i < params.tensors.size(); ++i) update_one(static_cast<int>(i));
    } else {
        for (int i : trainable) update_one(i);
    }
}

// ---------------------------------------------------------------------------

double grad_check(const LossBuilder& f, ParamSet& params, int probe_count, double h,
                  std::uint64_t seed, const std::function<bool(int, int)>& probe_ok) {
    if (!(h > 0.0)) raise(Errc::ConfigError, "grad_check: h must be > 0");

    Tape tape;
    std::vector<Var> vars = params.attach(tape);
    const Var loss = f(tape, vars);
    tape.backward(loss);

    auto eval_at = [&](void) -> double {
        Tape t;
        std::vector<Var> vs = params.attach(t);
        return t.value(f(t, vs)).data[0];
    };

    Rng rng(derive_seed(seed, 0x66DCEC));
    double max_rel = 0.0;
    int done = 0;
    int attempts = 0;
    const int max_attempts = probe_count * 64 + 64;
    while (done < probe_count && attempts < max_attempts) {
        ++attempts;
        const int pi = static_cast<int>(rng.below(params.tensors.size()));
        if (params.tensors[pi].size() == 0) continue;
        const int ci = static_cast<int>(rng.below(params.tensors[pi].size()));
        if (probe_ok && !probe_ok(pi, ci)) continue;

        double& coord = params.tensors[pi].data[ci];
        const double saved = coord;
        coord = saved + h;
        const double fp = eval_at();
        coord = saved - h;
        const double fm = eval_at();
        coord = saved;

        const double g_fd = (fp - fm) / (2.0 * h);
        const double g_ad = tape.grad(vars[pi]).data[ci];
        if (!std::isfinite(g_fd) || !std::isfinite(g_ad)) {
            raise(Errc::NonFinite, "grad_check: non-finite gradient probe");
        }
        const double denom = std::max({std::abs(g_ad), std::abs(g_fd), 1e-8});
        max_rel = std::max(max_rel, std::abs(g_ad - g_fd) / denom);
        ++done;
    }
    return max_rel;
}

}  // namespace lambo
