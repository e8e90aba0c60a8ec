#include "idedit/autograd.hpp"

#include <Eigen/Core>
#include <cmath>
#include <unordered_set>

#include "idedit/errors.hpp"

namespace idedit::ag {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& in : inputs) {
        if (in.valid() && in.requires_grad()) n->requires_grad = true;
    }
    if (n->requires_grad) {
        n->parents.reserve(inputs.size());
        for (const auto& in : inputs) n->parents.push_back(in.valid() ? in.handle() : nullptr);
        n->backward = std::move(fn);
    }
    return Var(std::move(n));
}

// Parent i receiving gradient, or nullptr if it does not need one.
Node* wants(Node& self, std::size_t i) {
    Node* p = self.parents[i].get();
    return (p != nullptr && p->requires_grad) ? p : nullptr;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape()) throw DimensionError(std::string(op) + ": shape mismatch");
}

void require_rank(const Var& x, int rank, const char* op) {
    if (x.value().rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank));
    }
}

void im2col(const double* img, int c, int h, int w, int k, int stride, int pad, int ho, int wo,
            double* col) {
    for (int ci = 0; ci < c; ++ci) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                double* row = col + (static_cast<std::size_t>((ci * k + ki) * k + kj) * ho * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    double* out = row + static_cast<std::size_t>(oy) * wo;
                    if (iy < 0 || iy >= h) {
                        std::fill(out, out + wo, 0.0);
                        continue;
                    }
                    const double* src = img + (static_cast<std::size_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        out[ox] = (ix < 0 || ix >= w) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

void col2im(const double* col, int c, int h, int w, int k, int stride, int pad, int ho, int wo,
            double* img) {
    for (int ci = 0; ci < c; ++ci) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const double* row =
                    col + (static_cast<std::size_t>((ci * k + ki) * k + kj) * ho * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ki;
                    if (iy < 0 || iy >= h) continue;
                    double* dst = img + (static_cast<std::size_t>(ci) * h + iy) * w;
                    const double* in = row + static_cast<std::size_t>(oy) * wo;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kj;
                        if (ix >= 0 && ix < w) dst[ix] += in[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    return Var(std::move(n));
}

Var leaf(Tensor t, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = requires_grad;
    return Var(std::move(n));
}

Var detach(const Var& x) { return constant(x.value()); }

void backward(const Var& root) {
    if (!root.requires_grad()) return;
    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{&root.node(), 0}};
    seen.insert(&root.node());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p != nullptr && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    Tensor& seed = root.node().ensure_grad();
    std::fill(seed.data.begin(), seed.data.end(), 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
    }
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    require_rank(x, 2, "linear");
    require_rank(weight, 2, "linear");
    const int batch = x.shape()[0];
    const int in = x.shape()[1];
    const int out = weight.shape()[0];
    if (weight.shape()[1] != in) throw DimensionError("linear: input width mismatch");
    if (bias.valid() && static_cast<int>(bias.value().size()) != out) {
        throw DimensionError("linear: bias length mismatch");
    }
    Tensor y({batch, out});
    MatMap ym(y.ptr(), batch, out);
    ConstMatMap xm(x.value().ptr(), batch, in);
    ConstMatMap wm(weight.value().ptr(), out, in);
    ym.noalias() = xm * wm.transpose();
    if (bias.valid()) {
        Eigen::Map<const Eigen::RowVectorXd> bm(bias.value().ptr(), out);
        ym.rowwise() += bm;
    }
    return make(std::move(y), {x, weight, bias}, [batch, in, out](Node& self) {
        ConstMatMap dy(self.grad.ptr(), batch, out);
        if (Node* px = wants(self, 0)) {
            ConstMatMap wm(self.parents[1]->value.ptr(), out, in);
            MatMap(px->ensure_grad().ptr(), batch, in).noalias() += dy * wm;
        }
        if (Node* pw = wants(self, 1)) {
            ConstMatMap xm(self.parents[0]->value.ptr(), batch, in);
            MatMap(pw->ensure_grad().ptr(), out, in).noalias() += dy.transpose() * xm;
        }
        if (self.parents.size() > 2) {
            if (Node* pb = wants(self, 2)) {
                Eigen::Map<Eigen::RowVectorXd>(pb->ensure_grad().ptr(), out) += dy.colwise().sum();
            }
        }
    });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
    require_rank(x, 4, "conv2d");
    require_rank(weight, 4, "conv2d");
    const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    const int o = weight.shape()[0], k = weight.shape()[2];
    if (weight.shape()[1] != c || weight.shape()[3] != k) {
        throw DimensionError("conv2d: weight shape mismatch");
    }
    if (bias.valid() && static_cast<int>(bias.value().size()) != o) {
        throw DimensionError("conv2d: bias length mismatch");
    }
    const int ho = (h + 2 * pad - k) / stride + 1;
    const int wo = (w + 2 * pad - k) / stride + 1;
    if (ho <= 0 || wo <= 0) throw DimensionError("conv2d: input smaller than kernel");
    const int rows = c * k * k;
    const int cols = ho * wo;
    const std::size_t col_size = static_cast<std::size_t>(rows) * cols;

    auto colbuf = std::make_shared<Buffer>(col_size * static_cast<std::size_t>(n));
    Tensor y({n, o, ho, wo});
    ConstMatMap wm(weight.value().ptr(), o, rows);
    for (int i = 0; i < n; ++i) {
        double* col = colbuf->data() + col_size * i;
        im2col(x.value().ptr() + static_cast<std::size_t>(i) * c * h * w, c, h, w, k, stride, pad,
               ho, wo, col);
        MatMap ym(y.ptr() + static_cast<std::size_t>(i) * o * cols, o, cols);
        ym.noalias() = wm * ConstMatMap(col, rows, cols);
        if (bias.valid()) {
            for (int oc = 0; oc < o; ++oc) ym.row(oc).array() += bias.value().data[oc];
        }
    }
    return make(std::move(y), {x, weight, bias},
                [=](Node& self) {
                    Node* px = wants(self, 0);
                    Node* pw = wants(self, 1);
                    Node* pb = self.parents.size() > 2 ? wants(self, 2) : nullptr;
                    ConstMatMap wmat(self.parents[1]->value.ptr(), o, rows);
                    Buffer dcol(px ? col_size : 0);
                    for (int i = 0; i < n; ++i) {
                        ConstMatMap dy(self.grad.ptr() + static_cast<std::size_t>(i) * o * cols, o,
                                       cols);
                        if (pw) {
                            ConstMatMap col(colbuf->data() + col_size * i, rows, cols);
                            MatMap(pw->ensure_grad().ptr(), o, rows).noalias() +=
                                dy * col.transpose();
                        }
                        if (pb) {
                            Eigen::Map<Eigen::VectorXd>(pb->ensure_grad().ptr(), o) +=
                                dy.rowwise().sum();
                        }
                        if (px) {
                            MatMap(dcol.data(), rows, cols).noalias() = wmat.transpose() * dy;
                            col2im(dcol.data(), c, h, w, k, stride, pad, ho, wo,
                                   px->ensure_grad().ptr() + static_cast<std::size_t>(i) * c * h * w);
                        }
                    }
                });
}

Var leaky_relu(const Var& x, double slope) {
    Tensor y = x.value();
    for (double& v : y.data) {
        if (v < 0.0) v *= slope;
    }
    return make(std::move(y), {x}, [slope](Node& self) {
        Node* px = wants(self, 0);
        const auto& in = px->value.data;
        auto& g = px->ensure_grad().data;
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += in[i] < 0.0 ? slope * self.grad.data[i] : self.grad.data[i];
        }
    });
}

Var upsample2x(const Var& x) {
    require_rank(x, 4, "upsample2x");
    const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    Tensor y({n, c, 2 * h, 2 * w});
    const int planes = n * c;
    for (int p = 0; p < planes; ++p) {
        const double* src = x.value().ptr() + static_cast<std::size_t>(p) * h * w;
        double* dst = y.ptr() + static_cast<std::size_t>(p) * 4 * h * w;
        for (int i = 0; i < 2 * h; ++i) {
            for (int j = 0; j < 2 * w; ++j) dst[i * 2 * w + j] = src[(i / 2) * w + j / 2];
        }
    }
    return make(std::move(y), {x}, [planes, h, w](Node& self) {
        Node* px = wants(self, 0);
        double* g = px->ensure_grad().ptr();
        for (int p = 0; p < planes; ++p) {
            const double* dy = self.grad.ptr() + static_cast<std::size_t>(p) * 4 * h * w;
            double* dx = g + static_cast<std::size_t>(p) * h * w;
            for (int i = 0; i < 2 * h; ++i) {
                for (int j = 0; j < 2 * w; ++j) dx[(i / 2) * w + j / 2] += dy[i * 2 * w + j];
            }
        }
    });
}

Var avg_pool2x(const Var& x) {
    require_rank(x, 4, "avg_pool2x");
    const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    if (h % 2 != 0 || w % 2 != 0) throw DimensionError("avg_pool2x: odd spatial size");
    const int ho = h / 2, wo = w / 2, planes = n * c;
    Tensor y({n, c, ho, wo});
    for (int p = 0; p < planes; ++p) {
        const double* src = x.value().ptr() + static_cast<std::size_t>(p) * h * w;
        double* dst = y.ptr() + static_cast<std::size_t>(p) * ho * wo;
        for (int i = 0; i < ho; ++i) {
            for (int j = 0; j < wo; ++j) {
                const double* s = src + 2 * i * w + 2 * j;
                dst[i * wo + j] = 0.25 * (s[0] + s[1] + s[w] + s[w + 1]);
            }
        }
    }
    return make(std::move(y), {x}, [planes, h, w, ho, wo](Node& self) {
        Node* px = wants(self, 0);
        double* g = px->ensure_grad().ptr();
        for (int p = 0; p < planes; ++p) {
            const double* dy = self.grad.ptr() + static_cast<std::size_t>(p) * ho * wo;
            double* dx = g + static_cast<std::size_t>(p) * h * w;
            for (int i = 0; i < ho; ++i) {
                for (int j = 0; j < wo; ++j) {
                    const double v = 0.25 * dy[i * wo + j];
                    double* d = dx + 2 * i * w + 2 * j;
                    d[0] += v;
                    d[1] += v;
                    d[w] += v;
                    d[w + 1] += v;
                }
            }
        }
    });
}

Var instance_norm(const Var& x, double eps) {
    require_rank(x, 4, "instance_norm");
    const int planes = x.shape()[0] * x.shape()[1];
    const int hw = x.shape()[2] * x.shape()[3];
    Tensor y(x.shape());
    auto inv_std = std::make_shared<std::vector<double>>(planes);
    for (int p = 0; p < planes; ++p) {
        const double* src = x.value().ptr() + static_cast<std::size_t>(p) * hw;
        double* dst = y.ptr() + static_cast<std::size_t>(p) * hw;
        double m = 0.0;
        for (int i = 0; i < hw; ++i) m += src[i];
        m /= hw;
        double var = 0.0;
        for (int i = 0; i < hw; ++i) var += (src[i] - m) * (src[i] - m);
        var /= hw;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[p] = is;
        for (int i = 0; i < hw; ++i) dst[i] = (src[i] - m) * is;
    }
    Tensor normalized = y;
    return make(std::move(y), {x},
                [planes, hw, inv_std, xhat = std::move(normalized)](Node& self) {
                    Node* px = wants(self, 0);
                    double* g = px->ensure_grad().ptr();
                    for (int p = 0; p < planes; ++p) {
                        const double* dy = self.grad.ptr() + static_cast<std::size_t>(p) * hw;
                        const double* xh = xhat.ptr() + static_cast<std::size_t>(p) * hw;
                        double mdy = 0.0, mdyx = 0.0;
                        for (int i = 0; i < hw; ++i) {
                            mdy += dy[i];
                            mdyx += dy[i] * xh[i];
                        }
                        mdy /= hw;
                        mdyx /= hw;
                        double* dx = g + static_cast<std::size_t>(p) * hw;
                        const double is = (*inv_std)[p];
                        for (int i = 0; i < hw; ++i) dx[i] += is * (dy[i] - mdy - xh[i] * mdyx);
                    }
                });
}

Var modulate(const Var& x, const Var& style) {
    require_rank(x, 4, "modulate");
    require_rank(style, 2, "modulate");
    const int n = x.shape()[0], c = x.shape()[1];
    const int hw = x.shape()[2] * x.shape()[3];
    if (style.shape()[0] != n || style.shape()[1] != 2 * c) {
        throw DimensionError("modulate: style must be [N, 2C]");
    }
    Tensor y(x.shape());
    const double* s = style.value().ptr();
    for (int i = 0; i < n; ++i) {
        for (int ch = 0; ch < c; ++ch) {
            const double gain = 1.0 + s[i * 2 * c + ch];
            const double shift = s[i * 2 * c + c + ch];
            const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * hw;
            for (int k = 0; k < hw; ++k) y.data[off + k] = x.value().data[off + k] * gain + shift;
        }
    }
    return make(std::move(y), {x, style}, [n, c, hw](Node& self) {
        Node* px = wants(self, 0);
        Node* ps = wants(self, 1);
        const double* xv = self.parents[0]->value.ptr();
        const double* sv = self.parents[1]->value.ptr();
        const double* dy = self.grad.ptr();
        double* dx = px ? px->ensure_grad().ptr() : nullptr;
        double* ds = ps ? ps->ensure_grad().ptr() : nullptr;
        for (int i = 0; i < n; ++i) {
            for (int ch = 0; ch < c; ++ch) {
                const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * hw;
                if (dx) {
                    const double gain = 1.0 + sv[i * 2 * c + ch];
                    for (int k = 0; k < hw; ++k) dx[off + k] += dy[off + k] * gain;
                }
                if (ds) {
                    double dg = 0.0, db = 0.0;
                    for (int k = 0; k < hw; ++k) {
                        dg += dy[off + k] * xv[off + k];
                        db += dy[off + k];
                    }
                    ds[i * 2 * c + ch] += dg;
                    ds[i * 2 * c + c + ch] += db;
                }
            }
        }
    });
}

Var clamp(const Var& x, double lo, double hi) {
    Tensor y = x.value();
    // NaN passes through so divergence stays visible downstream.
    for (double& v : y.data) {
        if (!std::isnan(v)) v = std::min(hi, std::max(lo, v));
    }
    return make(std::move(y), {x}, [lo, hi](Node& self) {
        Node* px = wants(self, 0);
        const auto& in = px->value.data;
        auto& g = px->ensure_grad().data;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (in[i] >= lo && in[i] <= hi) g[i] += self.grad.data[i];
        }
    });
}

Var reshape(const Var& x, std::vector<int> shape) {
    if (Tensor::count(shape) != x.value().size()) throw DimensionError("reshape: size mismatch");
    Tensor y(std::move(shape), x.value().data);
    return make(std::move(y), {x}, [](Node& self) {
        Node* px = wants(self, 0);
        auto& g = px->ensure_grad().data;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad.data[i];
    });
}

Var repeat_batch(const Var& x, int n) {
    if (x.value().rank() < 1 || x.shape()[0] != 1) throw DimensionError("repeat_batch: leading dim must be 1");
    const std::size_t block = x.value().size();
    std::vector<int> shape = x.shape();
    shape[0] = n;
    Tensor y(std::move(shape));
    for (int i = 0; i < n; ++i) {
        std::copy(x.value().data.begin(), x.value().data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(i * block));
    }
    return make(std::move(y), {x}, [n, block](Node& self) {
        Node* px = wants(self, 0);
        auto& g = px->ensure_grad().data;
        for (int i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < block; ++k) g[k] += self.grad.data[i * block + k];
        }
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += b.value().data[i];
    return make(std::move(y), {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (Node* p = wants(self, k)) {
                auto& g = p->ensure_grad().data;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad.data[i];
            }
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    Tensor y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] -= b.value().data[i];
    return make(std::move(y), {a, b}, [](Node& self) {
        if (Node* p = wants(self, 0)) {
            auto& g = p->ensure_grad().data;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad.data[i];
        }
        if (Node* p = wants(self, 1)) {
            auto& g = p->ensure_grad().data;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad.data[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor y = a.value();
    for (double& v : y.data) v *= s;
    return make(std::move(y), {a}, [s](Node& self) {
        Node* p = wants(self, 0);
        auto& g = p->ensure_grad().data;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad.data[i];
    });
}

Var softplus(const Var& x) {
    Tensor y = x.value();
    for (double& v : y.data) v = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    return make(std::move(y), {x}, [](Node& self) {
        Node* p = wants(self, 0);
        const auto& in = p->value.data;
        auto& g = p->ensure_grad().data;
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad.data[i] / (1.0 + std::exp(-in[i]));
        }
    });
}

Var sum(const Var& x) {
    double s = 0.0;
    for (double v : x.value().data) s += v;
    return make(Tensor({1}, s), {x}, [](Node& self) {
        Node* p = wants(self, 0);
        const double d = self.grad.data[0];
        for (double& g : p->ensure_grad().data) g += d;
    });
}

Var mean(const Var& x) {
    const double n = static_cast<double>(x.value().size());
    return scale(sum(x), 1.0 / n);
}

Var mse(const Var& a, const Var& b) {
    require_same_shape(a, b, "mse");
    const std::size_t n = a.value().size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a.value().data[i] - b.value().data[i];
        s += d * d;
    }
    return make(Tensor({1}, s / static_cast<double>(n)), {a, b}, [n](Node& self) {
        const auto& av = self.parents[0]->value.data;
        const auto& bv = self.parents[1]->value.data;
        const double k = 2.0 * self.grad.data[0] / static_cast<double>(n);
        if (Node* p = wants(self, 0)) {
            auto& g = p->ensure_grad().data;
            for (std::size_t i = 0; i < n; ++i) g[i] += k * (av[i] - bv[i]);
        }
        if (Node* p = wants(self, 1)) {
            auto& g = p->ensure_grad().data;
            for (std::size_t i = 0; i < n; ++i) g[i] -= k * (av[i] - bv[i]);
        }
    });
}

Var rms_distance(const Var& a, const Var& b) {
    require_same_shape(a, b, "rms_distance");
    const std::size_t n = a.value().size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a.value().data[i] - b.value().data[i];
        s += d * d;
    }
    const double r = std::sqrt(s / static_cast<double>(n));
    return make(Tensor({1}, r), {a, b}, [n, r](Node& self) {
        if (r == 0.0) return;  // subgradient 0 at the kink
        const auto& av = self.parents[0]->value.data;
        const auto& bv = self.parents[1]->value.data;
        const double k = self.grad.data[0] / (static_cast<double>(n) * r);
        if (Node* p = wants(self, 0)) {
            auto& g = p->ensure_grad().data;
            for (std::size_t i = 0; i < n; ++i) g[i] += k * (av[i] - bv[i]);
        }
        if (Node* p = wants(self, 1)) {
            auto& g = p->ensure_grad().data;
            for (std::size_t i = 0; i < n; ++i) g[i] -= k * (av[i] - bv[i]);
        }
    });
}

Var smooth_l1(const Var& r) {
    Tensor y = r.value();
    for (double& v : y.data) {
        const double a = std::abs(v);
        v = a < 1.0 ? 0.5 * a * a : a - 0.5;
    }
    return make(std::move(y), {r}, [](Node& self) {
        Node* p = wants(self, 0);
        const auto& in = p->value.data;
        auto& g = p->ensure_grad().data;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = in[i];
            const double d = std::abs(v) < 1.0 ? v : (v > 0.0 ? 1.0 : -1.0);
            g[i] += d * self.grad.data[i];
        }
    });
}

}  // namespace idedit::ag
