#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fsrir/errors.hpp"
#include "fsrir/nn/tensor.hpp"
#include "fsrir/rng.hpp"

namespace fsrir::nn {

// --- accumulating GEMM kernels ------------------------------------------

// C (MxN) += A (MxK) . B (KxN)
template <class T>
void gemm_nn_acc(int m, int n, int k, const T* a, const T* b, T* c) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<size_t>(i) * k;
        T* crow = c + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C (MxN) += A (MxK) . B^T, with B stored (NxK)
template <class T>
void gemm_nt_acc(int m, int n, int k, const T* a, const T* b, T* c) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<size_t>(i) * k;
        T* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<size_t>(j) * k;
            T acc(0);
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C (MxN) += A^T . B, with A stored (KxM), B stored (KxN)
template <class T>
void gemm_tn_acc(int m, int n, int k, const T* a, const T* b, T* c) {
    for (int p = 0; p < k; ++p) {
        const T* arow = a + static_cast<size_t>(p) * m;
        const T* brow = b + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const T av = arow[i];
            if (av == T(0)) continue;
            T* crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// --- reverse-mode tape ---------------------------------------------------

// Define-by-run tape over dense tensors. Values are computed eagerly as
// nodes are added; backward() walks the tape in reverse, accumulating
// gradients over fan-out. Node order is the topological order.
template <class T>
class Graph {
public:
    using Id = int;
    using Vjp = std::function<void(Graph&, Id)>;

    struct Node {
        Tensor<T> value;               // owned value (unused for ref leaves)
        const Tensor<T>* ref = nullptr;  // external leaf storage
        Tensor<T> grad;
        bool needs_grad = false;
        Vjp vjp;  // empty for leaves
        const char* op = "leaf";
    };

    Id constant(Tensor<T> v) { return push(std::move(v), nullptr, false, "const"); }

    // Leaf that reads its value from external storage (parameters); the
    // storage must outlive the graph.
    Id leaf_ref(const Tensor<T>* external) {
        Node node;
        node.ref = external;
        node.needs_grad = true;
        nodes_.push_back(std::move(node));
        return static_cast<Id>(nodes_.size() - 1);
    }

    Id leaf(Tensor<T> v) { return push(std::move(v), nullptr, true, "leaf"); }

    const Tensor<T>& val(Id id) const {
        const Node& n = node(id);
        return n.ref ? *n.ref : n.value;
    }

    const Tensor<T>& grad(Id id) const {
        const Node& n = node(id);
        if (n.grad.data.empty()) {
            throw StateError("gradient not computed; run backward first");
        }
        return n.grad;
    }

    bool has_grad(Id id) const { return !node(id).grad.data.empty(); }

    size_t size() const { return nodes_.size(); }

    // --- primitives ------------------------------------------------------

    Id matmul(Id a, Id b, bool trans_a = false, bool trans_b = false) {
        if (trans_a && trans_b) throw ShapeError("matmul: double transpose unsupported");
        const Tensor<T>& av = val(a);
        const Tensor<T>& bv = val(b);
        if (av.rank() != 2 || bv.rank() != 2) throw ShapeError("matmul: operands must be rank 2");
        const int m = trans_a ? av.dim(1) : av.dim(0);
        const int k = trans_a ? av.dim(0) : av.dim(1);
        const int kb = trans_b ? bv.dim(1) : bv.dim(0);
        const int n = trans_b ? bv.dim(0) : bv.dim(1);
        if (k != kb) {
            throw ShapeError("matmul: inner dimensions differ: " + av.shape_str() +
                             " x " + bv.shape_str());
        }
        Tensor<T> out({m, n});
        if (!trans_a && !trans_b) gemm_nn_acc(m, n, k, av.data.data(), bv.data.data(), out.data.data());
        else if (!trans_a && trans_b) gemm_nt_acc(m, n, k, av.data.data(), bv.data.data(), out.data.data());
        else gemm_tn_acc(m, n, k, av.data.data(), bv.data.data(), out.data.data());

        Vjp vjp = [a, b, m, n, k, trans_a, trans_b](Graph& g, Id self) {
            const Tensor<T>& gc = g.node(self).grad;
            const Tensor<T>& avv = g.val(a);
            const Tensor<T>& bvv = g.val(b);
            if (g.wants_grad(a)) {
                Tensor<T>& ga = g.ensure_grad(a);
                if (!trans_a && !trans_b) gemm_nt_acc(m, k, n, gc.data.data(), bvv.data.data(), ga.data.data());
                else if (!trans_a && trans_b) gemm_nn_acc(m, k, n, gc.data.data(), bvv.data.data(), ga.data.data());
                else gemm_nt_acc(k, m, n, bvv.data.data(), gc.data.data(), ga.data.data());
            }
            if (g.wants_grad(b)) {
                Tensor<T>& gb = g.ensure_grad(b);
                if (!trans_a && !trans_b) gemm_tn_acc(k, n, m, avv.data.data(), gc.data.data(), gb.data.data());
                else if (!trans_a && trans_b) gemm_tn_acc(n, k, m, gc.data.data(), avv.data.data(), gb.data.data());
                else gemm_nn_acc(k, n, m, avv.data.data(), gc.data.data(), gb.data.data());
            }
        };
        return push(std::move(out), std::move(vjp), wants_grad(a) || wants_grad(b), "matmul");
    }

    // Elementwise add, or row-broadcast when b is rank 1 matching a's
    // last dimension (bias add).
    Id add(Id a, Id b) {
        const Tensor<T>& av = val(a);
        const Tensor<T>& bv = val(b);
        Tensor<T> out = av;
        bool broadcast = false;
        if (av.same_shape(bv)) {
            for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
        } else if (av.rank() == 2 && bv.rank() == 1 && av.dim(1) == bv.dim(0)) {
            broadcast = true;
            const int rows = av.dim(0), cols = av.dim(1);
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < cols; ++c) out.at(r, c) += bv.data[static_cast<size_t>(c)];
            }
        } else {
            throw ShapeError("add: incompatible shapes " + av.shape_str() + " + " + bv.shape_str());
        }
        Vjp vjp = [a, b, broadcast](Graph& g, Id self) {
            const Tensor<T>& gc = g.node(self).grad;
            if (g.wants_grad(a)) {
                Tensor<T>& ga = g.ensure_grad(a);
                for (size_t i = 0; i < gc.data.size(); ++i) ga.data[i] += gc.data[i];
            }
            if (g.wants_grad(b)) {
                Tensor<T>& gb = g.ensure_grad(b);
                if (!broadcast) {
                    for (size_t i = 0; i < gc.data.size(); ++i) gb.data[i] += gc.data[i];
                } else {
                    const int rows = gc.dim(0), cols = gc.dim(1);
                    for (int r = 0; r < rows; ++r) {
                        for (int c = 0; c < cols; ++c) gb.data[static_cast<size_t>(c)] += gc.at(r, c);
                    }
                }
            }
        };
        return push(std::move(out), std::move(vjp), wants_grad(a) || wants_grad(b), "add");
    }

    Id mul(Id a, Id b) {
        const Tensor<T>& av = val(a);
        const Tensor<T>& bv = val(b);
        if (!av.same_shape(bv)) {
            throw ShapeError("mul: shapes differ: " + av.shape_str() + " vs " + bv.shape_str());
        }
        Tensor<T> out = av;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
        Vjp vjp = [a, b](Graph& g, Id self) {
            const Tensor<T>& gc = g.node(self).grad;
            if (g.wants_grad(a)) {
                Tensor<T>& ga = g.ensure_grad(a);
                const Tensor<T>& bvv = g.val(b);
                for (size_t i = 0; i < gc.data.size(); ++i) ga.data[i] += gc.data[i] * bvv.data[i];
            }
            if (g.wants_grad(b)) {
                Tensor<T>& gb = g.ensure_grad(b);
                const Tensor<T>& avv = g.val(a);
                for (size_t i = 0; i < gc.data.size(); ++i) gb.data[i] += gc.data[i] * avv.data[i];
            }
        };
        return push(std::move(out), std::move(vjp), wants_grad(a) || wants_grad(b), "mul");
    }

    Id scale(Id a, T s) {
        Tensor<T> out = val(a);
        for (T& v : out.data) v *= s;
        Vjp vjp = [a, s](Graph& g, Id self) {
            if (!g.wants_grad(a)) return;
            const Tensor<T>& gc = g.node(self).grad;
            Tensor<T>& ga = g.ensure_grad(a);
            for (size_t i = 0; i < gc.data.size(); ++i) ga.data[i] += gc.data[i] * s;
        };
        return push(std::move(out), std::move(vjp), wants_grad(a), "scale");
    }

    Id relu(Id a) {
        Tensor<T> out = val(a);
        for (T& v : out.data) v = std::max(v, T(0));
        Vjp vjp = [a](Graph& g, Id self) {
            if (!g.wants_grad(a)) return;
            const Tensor<T>& gc = g.node(self).grad;
            const Tensor<T>& avv = g.val(a);
            Tensor<T>& ga = g.ensure_grad(a);
            for (size_t i = 0; i < gc.data.size(); ++i) {
                if (avv.data[i] > T(0)) ga.data[i] += gc.data[i];
            }
        };
        return push(std::move(out), std::move(vjp), wants_grad(a), "relu");
    }

    Id softmax_lastdim(Id a) {
        const Tensor<T>& av = val(a);
        const int cols = av.cols();
        const int rows = static_cast<int>(av.numel()) / cols;
        Tensor<T> out = av;
        for (int r = 0; r < rows; ++r) {
            T* row = out.data.data() + static_cast<size_t>(r) * cols;
            T mx = row[0];
            for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
            T sum(0);
            for (int c = 0; c < cols; ++c) {
                row[c] = std::exp(row[c] - mx);
                sum += row[c];
            }
            for (int c = 0; c < cols; ++c) row[c] /= sum;
        }
        Vjp vjp = [a, rows, cols](Graph& g, Id self) {
            if (!g.wants_grad(a)) return;
            const Tensor<T>& gc = g.node(self).grad;
            const Tensor<T>& p = g.node(self).value;
            Tensor<T>& ga = g.ensure_grad(a);
            for (int r = 0; r < rows; ++r) {
                const size_t off = static_cast<size_t>(r) * cols;
                T dot(0);
                for (int c = 0; c < cols; ++c) dot += gc.data[off + c] * p.data[off + c];
                for (int c = 0; c < cols; ++c) {
                    ga.data[off + c] += p.data[off + c] * (gc.data[off + c] - dot);
                }
            }
        };
        return push(std::move(out), std::move(vjp), wants_grad(a), "softmax");
    }

    Id layer_norm(Id x, Id gain, Id bias, T eps = T(1e-5)) {
        const Tensor<T>& xv = val(x);
        const Tensor<T>& gv = val(gain);
        const Tensor<T>& bv = val(bias);
        const int cols = xv.cols();
        const int rows = static_cast<int>(xv.numel()) / cols;
        if (gv.rank() != 1 || bv.rank() != 1 || gv.dim(0) != cols || bv.dim(0) != cols) {
            throw ShapeError("layer_norm: gain/bias must be rank 1 of width " + std::to_string(cols));
        }
        Tensor<T> out = xv;
        std::vector<T> xhat(xv.numel());
        std::vector<T> inv_std(static_cast<size_t>(rows));
        for (int r = 0; r < rows; ++r) {
            const size_t off = static_cast<size_t>(r) * cols;
            T mean(0);
            for (int c = 0; c < cols; ++c) mean += xv.data[off + c];
            mean /= T(cols);
            T var(0);
            for (int c = 0; c < cols; ++c) {
                const T d = xv.data[off + c] - mean;
                var += d * d;
            }
            var /= T(cols);
            const T istd = T(1) / std::sqrt(var + eps);
            inv_std[static_cast<size_t>(r)] = istd;
            for (int c = 0; c < cols; ++c) {
                const T h = (xv.data[off + c] - mean) * istd;
                xhat[off + c] = h;
                out.data[off + c] = h * gv.data[static_cast<size_t>(c)] + bv.data[static_cast<size_t>(c)];
            }
        }
        Vjp vjp = [x, gain, bias, rows, cols, xhat = std::move(xhat),
                   inv_std = std::move(inv_std)](Graph& g, Id self) {
            const Tensor<T>& gc = g.node(self).grad;
            const Tensor<T>& gv2 = g.val(gain);
            if (g.wants_grad(gain)) {
                Tensor<T>& gg = g.ensure_grad(gain);
                for (int r = 0; r < rows; ++r) {
                    const size_t off = static_cast<size_t>(r) * cols;
                    for (int c = 0; c < cols; ++c) {
                        gg.data[static_cast<size_t>(c)] += gc.data[off + c] * xhat[off + c];
                    }
                }
            }
            if (g.wants_grad(bias)) {
                Tensor<T>& gb = g.ensure_grad(bias);
                for (int r = 0; r < rows; ++r) {
                    const size_t off = static_cast<size_t>(r) * cols;
                    for (int c = 0; c < cols; ++c) gb.data[static_cast<size_t>(c)] += gc.data[off + c];
                }
            }
            if (g.wants_grad(x)) {
                Tensor<T>& gx = g.ensure_grad(x);
                for (int r = 0; r < rows; ++r) {
                    const size_t off = static_cast<size_t>(r) * cols;
                    T mean_gh(0), mean_ghh(0);
                    for (int c = 0; c < cols; ++c) {
                        const T gh = gc.data[off + c] * gv2.data[static_cast<size_t>(c)];
                        mean_gh += gh;
                        mean_ghh += gh * xhat[off + c];
                    }
                    mean_gh /= T(cols);
                    mean_ghh /= T(cols);
                    const T istd = inv_std[static_cast<size_t>(r)];
                    for (int c = 0; c < cols; ++c) {
                        const T gh = gc.data[off + c] * gv2.data[static_cast<size_t>(c)];
                        gx.data[off + c] += istd * (gh - mean_gh - xhat[off + c] * mean_ghh);
                    }
                }
            }
        };
        return push(std::move(out), std::move(vjp),
                    wants_grad(x) || wants_grad(gain) || wants_grad(bias), "layer_norm");
    }

    // Inverted dropout: scales kept activations by 1/(1-p) at train time;
    // an eval-time call is the identity and adds no node.
    Id dropout(Id x, double p, Rng& rng, bool train) {
        if (!train || p <= 0.0) return x;
        if (p >= 1.0) throw ConfigError("dropout: rate must be < 1");
        const Tensor<T>& xv = val(x);
        std::vector<T> mask(xv.numel());
        const T keep_scale = T(1.0 / (1.0 - p));
        for (size_t i = 0; i < mask.size(); ++i) {
            mask[i] = rng.uniform() < p ? T(0) : keep_scale;
        }
        Tensor<T> out = xv;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask[i];
        Vjp vjp = [x, mask = std::move(mask)](Graph& g, Id self) {
            if (!g.wants_grad(x)) return;
            const Tensor<T>& gc = g.node(self).grad;
            Tensor<T>& gx = g.ensure_grad(x);
            for (size_t i = 0; i < gc.data.size(); ++i) gx.data[i] += gc.data[i] * mask[i];
        };
        return push(std::move(out), std::move(vjp), wants_grad(x), "dropout");
    }

    // Row lookup into an embedding table.
    Id embedding(Id table, std::vector<int> indices) {
        const Tensor<T>& tv = val(table);
        if (tv.rank() != 2) throw ShapeError("embedding: table must be rank 2");
        const int width = tv.dim(1);
        Tensor<T> out({static_cast<int>(indices.size()), width});
        for (size_t i = 0; i < indices.size(); ++i) {
            const int row = indices[i];
            if (row < 0 || row >= tv.dim(0)) throw ShapeError("embedding: index out of range");
            for (int c = 0; c < width; ++c) out.at(static_cast<int>(i), c) = tv.at(row, c);
        }
        Vjp vjp = [table, indices = std::move(indices), width](Graph& g, Id self) {
            if (!g.wants_grad(table)) return;
            const Tensor<T>& gc = g.node(self).grad;
            Tensor<T>& gt = g.ensure_grad(table);
            for (size_t i = 0; i < indices.size(); ++i) {
                for (int c = 0; c < width; ++c) {
                    gt.at(indices[i], c) += gc.at(static_cast<int>(i), c);
                }
            }
        };
        return push(std::move(out), std::move(vjp), wants_grad(table), "embedding");
    }

    // Concatenation along the last dimension of rank-2 tensors.
    Id concat_cols(const std::vector<Id>& parts) {
        if (parts.empty()) throw ShapeError("concat_cols: no inputs");
        const int rows = val(parts[0]).dim(0);
        int total = 0;
        for (Id p : parts) {
            const Tensor<T>& pv = val(p);
            if (pv.rank() != 2 || pv.dim(0) != rows) {
                throw ShapeError("concat_cols: row counts differ");
            }
            total += pv.dim(1);
        }
        Tensor<T> out({rows, total});
        int col0 = 0;
        for (Id p : parts) {
            const Tensor<T>& pv = val(p);
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < pv.dim(1); ++c) out.at(r, col0 + c) = pv.at(r, c);
            }
            col0 += pv.dim(1);
        }
        bool needs = false;
        for (Id p : parts) needs = needs || wants_grad(p);
        Vjp vjp = [parts, rows](Graph& g, Id self) {
            const Tensor<T>& gc = g.node(self).grad;
            int col0 = 0;
            for (Id p : parts) {
                const int w = g.val(p).dim(1);
                if (g.wants_grad(p)) {
                    Tensor<T>& gp = g.ensure_grad(p);
                    for (int r = 0; r < rows; ++r) {
                        for (int c = 0; c < w; ++c) gp.at(r, c) += gc.at(r, col0 + c);
                    }
                }
                col0 += w;
            }
        };
        return push(std::move(out), std::move(vjp), needs, "concat_cols");
    }

    Id slice_cols(Id x, int start, int len) {
        const Tensor<T>& xv = val(x);
        if (xv.rank() != 2 || start < 0 || start + len > xv.dim(1)) {
            throw ShapeError("slice_cols: range out of bounds");
        }
        const int rows = xv.dim(0);
        Tensor<T> out({rows, len});
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < len; ++c) out.at(r, c) = xv.at(r, start + c);
        }
        Vjp vjp = [x, start, len, rows](Graph& g, Id self) {
            if (!g.wants_grad(x)) return;
            const Tensor<T>& gc = g.node(self).grad;
            Tensor<T>& gx = g.ensure_grad(x);
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < len; ++c) gx.at(r, start + c) += gc.at(r, c);
            }
        };
        return push(std::move(out), std::move(vjp), wants_grad(x), "slice_cols");
    }

    Id concat_rows(const std::vector<Id>& parts) {
        if (parts.empty()) throw ShapeError("concat_rows: no inputs");
        const int cols = val(parts[0]).dim(1);
        int total = 0;
        for (Id p : parts) {
            const Tensor<T>& pv = val(p);
            if (pv.rank() != 2 || pv.dim(1) != cols) {
                throw ShapeError("concat_rows: column counts differ");
            }
            total += pv.dim(0);
        }
        Tensor<T> out({total, cols});
        int row0 = 0;
        for (Id p : parts) {
            const Tensor<T>& pv = val(p);
            std::copy(pv.data.begin(), pv.data.end(),
                      out.data.begin() + static_cast<size_t>(row0) * cols);
            row0 += pv.dim(0);
        }
        bool needs = false;
        for (Id p : parts) needs = needs || wants_grad(p);
        Vjp vjp = [parts, cols](Graph& g, Id self) {
            const Tensor<T>& gc = g.node(self).grad;
            int row0 = 0;
            for (Id p : parts) {
                const int r = g.val(p).dim(0);
                if (g.wants_grad(p)) {
                    Tensor<T>& gp = g.ensure_grad(p);
                    const size_t off = static_cast<size_t>(row0) * cols;
                    for (size_t i = 0; i < gp.data.size(); ++i) gp.data[i] += gc.data[off + i];
                }
                row0 += r;
            }
        };
        return push(std::move(out), std::move(vjp), needs, "concat_rows");
    }

    Id repeat_rows(Id x, int times) {
        const Tensor<T>& xv = val(x);
        if (xv.rank() != 2 || xv.dim(0) != 1) throw ShapeError("repeat_rows: expects a 1-row matrix");
        const int cols = xv.dim(1);
        Tensor<T> out({times, cols});
        for (int r = 0; r < times; ++r) {
            std::copy(xv.data.begin(), xv.data.end(),
                      out.data.begin() + static_cast<size_t>(r) * cols);
        }
        Vjp vjp = [x, times, cols](Graph& g, Id self) {
            if (!g.wants_grad(x)) return;
            const Tensor<T>& gc = g.node(self).grad;
            Tensor<T>& gx = g.ensure_grad(x);
            for (int r = 0; r < times; ++r) {
                for (int c = 0; c < cols; ++c) gx.data[static_cast<size_t>(c)] += gc.at(r, c);
            }
        };
        return push(std::move(out), std::move(vjp), wants_grad(x), "repeat_rows");
    }

    Id reshape(Id x, std::vector<int> shape) {
        const Tensor<T>& xv = val(x);
        if (Tensor<T>::numel_of(shape) != xv.numel()) {
            throw ShapeError("reshape: element count mismatch");
        }
        Tensor<T> out(shape, xv.data);
        Vjp vjp = [x](Graph& g, Id self) {
            if (!g.wants_grad(x)) return;
            const Tensor<T>& gc = g.node(self).grad;
            Tensor<T>& gx = g.ensure_grad(x);
            for (size_t i = 0; i < gc.data.size(); ++i) gx.data[i] += gc.data[i];
        };
        return push(std::move(out), std::move(vjp), wants_grad(x), "reshape");
    }

    // Multi-head scaled dot-product attention composed from primitives.
    // q_tokens (M x d) attend over kv_tokens (N x d).
    struct AttentionWeights {
        Id wq, bq, wk, bk, wv, bv, wo, bo;
    };
    Id attention(Id q_tokens, Id kv_tokens, const AttentionWeights& w, int n_heads) {
        const int d_model = val(q_tokens).dim(1);
        if (d_model % n_heads != 0) throw ShapeError("attention: d_model not divisible by heads");
        const int dh = d_model / n_heads;
        const Id q = add(matmul(q_tokens, w.wq), w.bq);
        const Id k = add(matmul(kv_tokens, w.wk), w.bk);
        const Id v = add(matmul(kv_tokens, w.wv), w.bv);
        const T inv_sqrt = T(1) / std::sqrt(T(dh));
        std::vector<Id> head_outputs;
        head_outputs.reserve(static_cast<size_t>(n_heads));
        for (int h = 0; h < n_heads; ++h) {
            const Id qh = slice_cols(q, h * dh, dh);
            const Id kh = slice_cols(k, h * dh, dh);
            const Id vh = slice_cols(v, h * dh, dh);
            const Id scores = scale(matmul(qh, kh, false, true), inv_sqrt);
            const Id probs = softmax_lastdim(scores);
            head_outputs.push_back(matmul(probs, vh));
        }
        const Id merged = concat_cols(head_outputs);
        return add(matmul(merged, w.wo), w.bo);
    }

    // --- backward ---------------------------------------------------------

    void backward(Id out, const Tensor<T>& seed) {
        if (nodes_.empty()) throw StateError("backward called on an empty graph");
        const Tensor<T>& out_val = val(out);
        if (!out_val.same_shape(seed)) {
            throw ShapeError("backward: seed shape " + seed.shape_str() +
                             " does not match output " + out_val.shape_str());
        }
        Tensor<T>& g = ensure_grad(out);
        for (size_t i = 0; i < seed.data.size(); ++i) g.data[i] += seed.data[i];
        for (Id id = out; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (!n.needs_grad || n.grad.data.empty() || !n.vjp) continue;
            n.vjp(*this, id);
        }
        backward_done_ = true;
    }

    bool backward_done() const { return backward_done_; }

    Tensor<T>& ensure_grad(Id id) {
        Node& n = node(id);
        if (n.grad.data.empty()) n.grad = Tensor<T>(val(id).shape);
        return n.grad;
    }

    bool wants_grad(Id id) const { return node(id).needs_grad; }

private:
    Node& node(Id id) {
        if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
            throw StateError("invalid graph node id");
        }
        return nodes_[static_cast<size_t>(id)];
    }
    const Node& node(Id id) const {
        if (id < 0 || static_cast<size_t>(id) >= nodes_.size()) {
            throw StateError("invalid graph node id");
        }
        return nodes_[static_cast<size_t>(id)];
    }

    Id push(Tensor<T> value, Vjp vjp, bool needs_grad, const char* op) {
        Node node;
        node.value = std::move(value);
        node.vjp = std::move(vjp);
        node.needs_grad = needs_grad;
        node.op = op;
        nodes_.push_back(std::move(node));
        return static_cast<Id>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

}  // namespace fsrir::nn
