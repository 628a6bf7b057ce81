#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "vulgnn/rng.hpp"
#include "vulgnn/tensor.hpp"

namespace vulgnn {

using ValueId = std::size_t;

namespace detail {

template <typename T>
T stable_sigmoid(T x) {
    if (x >= T(0)) {
        return T(1) / (T(1) + std::exp(-x));
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

// Numerically stable weighted BCE-with-logits:
//   l = -(pw*y*log(sigmoid(x)) + (1-y)*log(1-sigmoid(x)))
// evaluated as (1-y)*x + (1 + (pw-1)*y) * (max(-x,0) + log(1+exp(-|x|))).
template <typename T>
T stable_bce_with_logits(T x, T y, T pos_weight) {
    const T softplus_neg_x = std::max(-x, T(0)) + std::log1p(std::exp(-std::abs(x)));
    return (T(1) - y) * x + (T(1) + (pos_weight - T(1)) * y) * softplus_neg_x;
}

template <typename T>
T bce_with_logits_dx(T x, T y, T pos_weight) {
    const T s = stable_sigmoid(x);
    return (T(1) - y) * s - pos_weight * y * (T(1) - s);
}

} // namespace detail

// Records the forward computation and replays it in reverse for exact
// gradients. A tape is confined to one thread; forward-only evaluation
// simply never calls backward().
template <typename T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    ValueId leaf(Tensor<T> value, bool requires_grad) {
        nodes_.push_back(Node{std::move(value), requires_grad, nullptr});
        return nodes_.size() - 1;
    }

    ValueId constant(Tensor<T> value) { return leaf(std::move(value), false); }

    const Tensor<T>& value(ValueId id) const { return nodes_.at(id).value; }

    const Tensor<T>& grad(ValueId id) const {
        if (!ran_backward_) {
            throw std::logic_error("grad() before backward()");
        }
        return grads_.at(id);
    }

    std::size_t size() const { return nodes_.size(); }

    // ---- elementwise / arithmetic ----

    ValueId add(ValueId a, ValueId b) {
        check_same_shape(a, b, "add");
        Tensor<T> out = val(a);
        const Tensor<T>& vb = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] += vb[i];
        }
        return record(std::move(out), {a, b}, [a, b, this](ValueId o) {
            accumulate(a, grd(o));
            accumulate(b, grd(o));
        });
    }

    ValueId sub(ValueId a, ValueId b) {
        check_same_shape(a, b, "sub");
        Tensor<T> out = val(a);
        const Tensor<T>& vb = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] -= vb[i];
        }
        return record(std::move(out), {a, b}, [a, b, this](ValueId o) {
            accumulate(a, grd(o));
            accumulate_scaled(b, grd(o), T(-1));
        });
    }

    ValueId mul(ValueId a, ValueId b) {
        check_same_shape(a, b, "mul");
        Tensor<T> out = val(a);
        const Tensor<T>& vb = val(b);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] *= vb[i];
        }
        return record(std::move(out), {a, b}, [a, b, this](ValueId o) {
            const Tensor<T>& g = grd(o);
            Tensor<T>& ga = grad_buf(a);
            Tensor<T>& gb = grad_buf(b);
            const Tensor<T>& va = val(a);
            const Tensor<T>& vb2 = val(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * vb2[i];
                gb[i] += g[i] * va[i];
            }
        });
    }

    ValueId scale(ValueId a, T c) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) {
            v *= c;
        }
        return record(std::move(out), {a}, [a, c, this](ValueId o) {
            accumulate_scaled(a, grd(o), c);
        });
    }

    ValueId add_scalar(ValueId a, T c) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) {
            v += c;
        }
        return record(std::move(out), {a}, [a, this](ValueId o) {
            accumulate(a, grd(o));
        });
    }

    ValueId exp(ValueId a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) {
            v = std::exp(v);
        }
        return record(std::move(out), {a}, [a, this](ValueId o) {
            const Tensor<T>& g = grd(o);
            const Tensor<T>& y = val(o);
            Tensor<T>& ga = grad_buf(a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * y[i];
            }
        });
    }

    ValueId log(ValueId a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) {
            v = std::log(v);
        }
        return record(std::move(out), {a}, [a, this](ValueId o) {
            const Tensor<T>& g = grd(o);
            const Tensor<T>& x = val(a);
            Tensor<T>& ga = grad_buf(a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] / x[i];
            }
        });
    }

    ValueId sigmoid(ValueId a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) {
            v = detail::stable_sigmoid(v);
        }
        return record(std::move(out), {a}, [a, this](ValueId o) {
            const Tensor<T>& g = grd(o);
            const Tensor<T>& y = val(o);
            Tensor<T>& ga = grad_buf(a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * y[i] * (T(1) - y[i]);
            }
        });
    }

    ValueId rsqrt(ValueId a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) {
            v = T(1) / std::sqrt(v);
        }
        return record(std::move(out), {a}, [a, this](ValueId o) {
            const Tensor<T>& g = grd(o);
            const Tensor<T>& y = val(o);
            Tensor<T>& ga = grad_buf(a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * T(-0.5) * y[i] * y[i] * y[i];
            }
        });
    }

    // slope is a single-element tensor (one learnable slope per layer).
    ValueId prelu(ValueId x, ValueId slope) {
        if (val(slope).size() != 1) {
            throw std::invalid_argument("prelu: slope must be a single-element tensor");
        }
        const T a = val(slope)[0];
        Tensor<T> out = val(x);
        for (auto& v : out.data) {
            if (v < T(0)) {
                v *= a;
            }
        }
        return record(std::move(out), {x, slope}, [x, slope, this](ValueId o) {
            const Tensor<T>& g = grd(o);
            const Tensor<T>& vx = val(x);
            const T a2 = val(slope)[0];
            Tensor<T>& gx = grad_buf(x);
            Tensor<T>& gs = grad_buf(slope);
            T slope_grad = T(0);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (vx[i] >= T(0)) {
                    gx[i] += g[i];
                } else {
                    gx[i] += g[i] * a2;
                    slope_grad += g[i] * vx[i];
                }
            }
            gs[0] += slope_grad;
        });
    }

    // Training mode: each element dropped independently with probability p,
    // survivors scaled by 1/(1-p). Eval mode (or p == 0) is the identity.
    ValueId dropout(ValueId x, double p, Rng& rng, bool training) {
        if (p < 0.0 || p >= 1.0) {
            throw std::invalid_argument("dropout: p must be in [0,1)");
        }
        if (!training || p == 0.0) {
            return x;
        }
        const T keep_scale = T(1.0 / (1.0 - p));
        std::vector<T> mask(val(x).size());
        for (auto& m : mask) {
            m = (rng.uniform() < p) ? T(0) : keep_scale;
        }
        Tensor<T> out = val(x);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] *= mask[i];
        }
        return record(std::move(out), {x}, [x, mask = std::move(mask), this](ValueId o) {
            const Tensor<T>& g = grd(o);
            Tensor<T>& gx = grad_buf(x);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx[i] += g[i] * mask[i];
            }
        });
    }

    // ---- linear algebra ----

    ValueId matmul(ValueId a, ValueId b) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        if (va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.rows()) {
            throw std::invalid_argument("matmul: incompatible shapes");
        }
        const std::size_t m = va.rows(), k = va.cols(), n = vb.cols();
        Tensor<T> out({m, n});
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t kk = 0; kk < k; ++kk) {
                const T av = va.data[i * k + kk];
                if (av == T(0)) {
                    continue;
                }
                const T* brow = vb.data.data() + kk * n;
                T* crow = out.data.data() + i * n;
                for (std::size_t j = 0; j < n; ++j) {
                    crow[j] += av * brow[j];
                }
            }
        }
        return record(std::move(out), {a, b}, [a, b, m, k, n, this](ValueId o) {
            const Tensor<T>& g = grd(o);
            const Tensor<T>& va2 = val(a);
            const Tensor<T>& vb2 = val(b);
            Tensor<T>& ga = grad_buf(a);
            Tensor<T>& gb = grad_buf(b);
            // dA = dC * B^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const T gv = g.data[i * n + j];
                    if (gv == T(0)) {
                        continue;
                    }
                    const T* brow = vb2.data.data() + 0 * n + j;
                    T* garow = ga.data.data() + i * k;
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        garow[kk] += gv * brow[kk * n];
                    }
                }
            }
            // dB = A^T * dC
            for (std::size_t kk = 0; kk < k; ++kk) {
                for (std::size_t i = 0; i < m; ++i) {
                    const T av = va2.data[i * k + kk];
                    if (av == T(0)) {
                        continue;
                    }
                    const T* grow = g.data.data() + i * n;
                    T* gbrow = gb.data.data() + kk * n;
                    for (std::size_t j = 0; j < n; ++j) {
                        gbrow[j] += av * grow[j];
                    }
                }
            }
        });
    }

    ValueId reshape(ValueId a, std::vector<std::size_t> new_shape) {
        const Tensor<T>& va = val(a);
        if (Tensor<T>::count(new_shape) != va.size()) {
            throw std::invalid_argument("reshape: element count mismatch");
        }
        Tensor<T> out(std::move(new_shape), va.data);
        return record(std::move(out), {a}, [a, this](ValueId o) {
            const Tensor<T>& g = grd(o);
            Tensor<T>& ga = grad_buf(a);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
            }
        });
    }

    ValueId concat_rows(ValueId a, ValueId b) {
        const Tensor<T>& va = val(a);
        const Tensor<T>& vb = val(b);
        if (va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.cols()) {
            throw std::invalid_argument("concat_rows: column mismatch");
        }
        Tensor<T> out({va.rows() + vb.rows(), va.cols()});
        std::copy(va.data.begin(), va.data.end(), out.data.begin());
        std::copy(vb.data.begin(), vb.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(va.size()));
        const std::size_t split = va.size();
        return record(std::move(out), {a, b}, [a, b, split, this](ValueId o) {
            const Tensor<T>& g = grd(o);
            Tensor<T>& ga = grad_buf(a);
            Tensor<T>& gb = grad_buf(b);
            for (std::size_t i = 0; i < split; ++i) {
                ga[i] += g[i];
            }
            for (std::size_t i = split; i < g.size(); ++i) {
                gb[i - split] += g[i];
            }
        });
    }

    ValueId gather_rows(ValueId table, std::vector<std::size_t> indices) {
        const Tensor<T>& vt = val(table);
        if (vt.rank() != 2) {
            throw std::invalid_argument("gather_rows: table must be 2-D");
        }
        const std::size_t d = vt.cols();
        Tensor<T> out({indices.size(), d});
        for (std::size_t r = 0; r < indices.size(); ++r) {
            if (indices[r] >= vt.rows()) {
                throw std::invalid_argument("gather_rows: index out of range");
            }
            std::copy_n(vt.data.begin() + static_cast<std::ptrdiff_t>(indices[r] * d), d,
                        out.data.begin() + static_cast<std::ptrdiff_t>(r * d));
        }
        return record(std::move(out), {table},
                      [table, d, indices = std::move(indices), this](ValueId o) {
                          const Tensor<T>& g = grd(o);
                          Tensor<T>& gt = grad_buf(table);
                          for (std::size_t r = 0; r < indices.size(); ++r) {
                              T* dst = gt.data.data() + indices[r] * d;
                              const T* src = g.data.data() + r * d;
                              for (std::size_t j = 0; j < d; ++j) {
                                  dst[j] += src[j];
                              }
                          }
                      });
    }

    // ---- reductions ----

    ValueId sum_all(ValueId a) {
        T s = T(0);
        for (const T& v : val(a).data) {
            s += v;
        }
        return record(Tensor<T>::scalar(s), {a}, [a, this](ValueId o) {
            accumulate_broadcast(a, grd(o)[0]);
        });
    }

    ValueId mean_all(ValueId a) {
        const std::size_t n = val(a).size();
        if (n == 0) {
            throw std::invalid_argument("mean_all: empty tensor");
        }
        T s = T(0);
        for (const T& v : val(a).data) {
            s += v;
        }
        return record(Tensor<T>::scalar(s / static_cast<T>(n)), {a}, [a, n, this](ValueId o) {
            accumulate_broadcast(a, grd(o)[0] / static_cast<T>(n));
        });
    }

    // axis 0 sums down columns -> [cols]; axis 1 sums across rows -> [rows].
    ValueId sum_axis(ValueId a, int axis) {
        const Tensor<T>& va = val(a);
        if (va.rank() != 2 || (axis != 0 && axis != 1)) {
            throw std::invalid_argument("sum_axis: need 2-D tensor and axis 0 or 1");
        }
        const std::size_t m = va.rows(), n = va.cols();
        Tensor<T> out({axis == 0 ? n : m});
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                out[axis == 0 ? j : i] += va.data[i * n + j];
            }
        }
        return record(std::move(out), {a}, [a, axis, m, n, this](ValueId o) {
            const Tensor<T>& g = grd(o);
            Tensor<T>& ga = grad_buf(a);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    ga.data[i * n + j] += g[axis == 0 ? j : i];
                }
            }
        });
    }

    // ---- broadcast helpers over rows / features ----

    // out[i,:] = x[i,:] * w[i]
    ValueId scale_rows(ValueId x, ValueId w) {
        const Tensor<T>& vx = val(x);
        const Tensor<T>& vw = val(w);
        if (vx.rank() != 2 || vw.rank() != 1 || vw.size() != vx.rows()) {
            throw std::invalid_argument("scale_rows: shape mismatch");
        }
        const std::size_t m = vx.rows(), n = vx.cols();
        Tensor<T> out = vx;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                out.data[i * n + j] *= vw[i];
            }
        }
        return record(std::move(out), {x, w}, [x, w, m, n, this](ValueId o) {
            const Tensor<T>& g = grd(o);
            const Tensor<T>& vx2 = val(x);
            const Tensor<T>& vw2 = val(w);
            Tensor<T>& gx = grad_buf(x);
            Tensor<T>& gw = grad_buf(w);
            for (std::size_t i = 0; i < m; ++i) {
                T acc = T(0);
                for (std::size_t j = 0; j < n; ++j) {
                    gx.data[i * n + j] += g.data[i * n + j] * vw2[i];
                    acc += g.data[i * n + j] * vx2.data[i * n + j];
                }
                gw[i] += acc;
            }
        });
    }

    // out[i,j] = x[i,j] * f[j]
    ValueId scale_features(ValueId x, ValueId f) {
        const Tensor<T>& vx = val(x);
        const Tensor<T>& vf = val(f);
        if (vx.rank() != 2 || vf.rank() != 1 || vf.size() != vx.cols()) {
            throw std::invalid_argument("scale_features: shape mismatch");
        }
        const std::size_t m = vx.rows(), n = vx.cols();
        Tensor<T> out = vx;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                out.data[i * n + j] *= vf[j];
            }
        }
        return record(std::move(out), {x, f}, [x, f, m, n, this](ValueId o) {
            const Tensor<T>& g = grd(o);
            const Tensor<T>& vx2 = val(x);
            const Tensor<T>& vf2 = val(f);
            Tensor<T>& gx = grad_buf(x);
            Tensor<T>& gf = grad_buf(f);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    gx.data[i * n + j] += g.data[i * n + j] * vf2[j];
                    gf[j] += g.data[i * n + j] * vx2.data[i * n + j];
                }
            }
        });
    }

    // out[i,j] = x[i,j] + b[j]
    ValueId add_bias(ValueId x, ValueId b) {
        const Tensor<T>& vx = val(x);
        const Tensor<T>& vb = val(b);
        if (vx.rank() != 2 || vb.rank() != 1 || vb.size() != vx.cols()) {
            throw std::invalid_argument("add_bias: shape mismatch");
        }
        const std::size_t m = vx.rows(), n = vx.cols();
        Tensor<T> out = vx;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                out.data[i * n + j] += vb[j];
            }
        }
        return record(std::move(out), {x, b}, [x, b, m, n, this](ValueId o) {
            const Tensor<T>& g = grd(o);
            Tensor<T>& gx = grad_buf(x);
            Tensor<T>& gb = grad_buf(b);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    gx.data[i * n + j] += g.data[i * n + j];
                    gb[j] += g.data[i * n + j];
                }
            }
        });
    }

    // ---- segment operations ----

    // Row g of the output is the mean of value rows whose segment is g;
    // empty groups yield zero rows.
    ValueId segment_mean(ValueId values, const std::vector<std::size_t>& segments,
                         std::size_t n_groups) {
        const Tensor<T>& vv = val(values);
        if (vv.rank() != 2 || segments.size() != vv.rows()) {
            throw std::invalid_argument("segment_mean: shape mismatch");
        }
        const std::size_t d = vv.cols();
        std::vector<std::size_t> counts(n_groups, 0);
        for (std::size_t s : segments) {
            if (s >= n_groups) {
                throw std::invalid_argument("segment_mean: segment id out of range");
            }
            ++counts[s];
        }
        Tensor<T> out({n_groups, d});
        for (std::size_t r = 0; r < segments.size(); ++r) {
            const T* src = vv.data.data() + r * d;
            T* dst = out.data.data() + segments[r] * d;
            for (std::size_t j = 0; j < d; ++j) {
                dst[j] += src[j];
            }
        }
        for (std::size_t g = 0; g < n_groups; ++g) {
            if (counts[g] > 0) {
                const T inv = T(1) / static_cast<T>(counts[g]);
                T* row = out.data.data() + g * d;
                for (std::size_t j = 0; j < d; ++j) {
                    row[j] *= inv;
                }
            }
        }
        return record(std::move(out), {values},
                      [values, d, segments, counts = std::move(counts), this](ValueId o) {
                          const Tensor<T>& g = grd(o);
                          Tensor<T>& gv = grad_buf(values);
                          for (std::size_t r = 0; r < segments.size(); ++r) {
                              const T inv = T(1) / static_cast<T>(counts[segments[r]]);
                              const T* src = g.data.data() + segments[r] * d;
                              T* dst = gv.data.data() + r * d;
                              for (std::size_t j = 0; j < d; ++j) {
                                  dst[j] += src[j] * inv;
                              }
                          }
                      });
    }

    // Softmax within each segment group; each non-empty group sums to 1.
    ValueId segment_softmax(ValueId scores, const std::vector<std::size_t>& segments,
                            std::size_t n_groups) {
        const Tensor<T>& vs = val(scores);
        if (vs.rank() != 1 || segments.size() != vs.size()) {
            throw std::invalid_argument("segment_softmax: shape mismatch");
        }
        std::vector<T> group_max(n_groups, -std::numeric_limits<T>::infinity());
        for (std::size_t r = 0; r < segments.size(); ++r) {
            if (segments[r] >= n_groups) {
                throw std::invalid_argument("segment_softmax: segment id out of range");
            }
            group_max[segments[r]] = std::max(group_max[segments[r]], vs[r]);
        }
        Tensor<T> out({vs.size()});
        std::vector<T> group_sum(n_groups, T(0));
        for (std::size_t r = 0; r < segments.size(); ++r) {
            out[r] = std::exp(vs[r] - group_max[segments[r]]);
            group_sum[segments[r]] += out[r];
        }
        for (std::size_t r = 0; r < segments.size(); ++r) {
            out[r] /= group_sum[segments[r]];
        }
        return record(std::move(out), {scores},
                      [scores, segments, n_groups, this](ValueId o) {
                          const Tensor<T>& g = grd(o);
                          const Tensor<T>& alpha = val(o);
                          Tensor<T>& gs = grad_buf(scores);
                          std::vector<T> group_dot(n_groups, T(0));
                          for (std::size_t r = 0; r < segments.size(); ++r) {
                              group_dot[segments[r]] += g[r] * alpha[r];
                          }
                          for (std::size_t r = 0; r < segments.size(); ++r) {
                              gs[r] += alpha[r] * (g[r] - group_dot[segments[r]]);
                          }
                      });
    }

    // ---- loss ----

    // Elementwise weighted BCE-with-logits; targets and pos_weights are
    // fixed (non-differentiated) tensors of the logits' shape.
    ValueId bce_with_logits(ValueId logits, Tensor<T> targets, Tensor<T> pos_weights) {
        const Tensor<T>& vx = val(logits);
        if (!vx.same_shape(targets) || !vx.same_shape(pos_weights)) {
            throw std::invalid_argument("bce_with_logits: shape mismatch");
        }
        Tensor<T> out = vx;
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = detail::stable_bce_with_logits(vx[i], targets[i], pos_weights[i]);
        }
        return record(std::move(out), {logits},
                      [logits, targets = std::move(targets), pw = std::move(pos_weights),
                       this](ValueId o) {
                          const Tensor<T>& g = grd(o);
                          const Tensor<T>& vx2 = val(logits);
                          Tensor<T>& gx = grad_buf(logits);
                          for (std::size_t i = 0; i < g.size(); ++i) {
                              gx[i] += g[i] * detail::bce_with_logits_dx(vx2[i], targets[i], pw[i]);
                          }
                      });
    }

    // ---- backward ----

    void backward(ValueId loss) {
        if (loss >= nodes_.size()) {
            throw std::invalid_argument("backward: loss id not on this tape");
        }
        if (nodes_[loss].value.size() != 1) {
            throw std::invalid_argument("backward: loss must be scalar");
        }
        grads_.clear();
        grads_.reserve(nodes_.size());
        for (const Node& n : nodes_) {
            grads_.push_back(Tensor<T>(n.value.shape));
        }
        grads_[loss][0] = T(1);
        ran_backward_ = true;
        for (std::size_t i = loss + 1; i-- > 0;) {
            if (nodes_[i].backprop && nodes_[i].requires_grad) {
                nodes_[i].backprop(i);
            }
        }
    }

private:
    struct Node {
        Tensor<T> value;
        bool requires_grad;
        std::function<void(ValueId)> backprop;
    };

    const Tensor<T>& val(ValueId id) const { return nodes_[id].value; }
    const Tensor<T>& grd(ValueId id) const { return grads_[id]; }
    Tensor<T>& grad_buf(ValueId id) { return grads_[id]; }

    void check_same_shape(ValueId a, ValueId b, const char* op) const {
        if (!val(a).same_shape(val(b))) {
            throw std::invalid_argument(std::string(op) + ": shape mismatch");
        }
    }

    void accumulate(ValueId id, const Tensor<T>& g) {
        Tensor<T>& buf = grads_[id];
        for (std::size_t i = 0; i < g.size(); ++i) {
            buf[i] += g[i];
        }
    }

    void accumulate_scaled(ValueId id, const Tensor<T>& g, T c) {
        Tensor<T>& buf = grads_[id];
        for (std::size_t i = 0; i < g.size(); ++i) {
            buf[i] += g[i] * c;
        }
    }

    void accumulate_broadcast(ValueId id, T v) {
        for (T& g : grads_[id].data) {
            g += v;
        }
    }

    template <typename Fn>
    ValueId record(Tensor<T> out, std::initializer_list<ValueId> inputs, Fn&& backprop) {
        bool needs_grad = false;
        for (ValueId in : inputs) {
            needs_grad = needs_grad || nodes_[in].requires_grad;
        }
        assert(out.all_finite() && "non-finite value produced by tape op");
        Node node{std::move(out), needs_grad, nullptr};
        if (needs_grad) {
            node.backprop = std::forward<Fn>(backprop);
        }
        nodes_.push_back(std::move(node));
        return nodes_.size() - 1;
    }

    std::vector<Node> nodes_;
    std::vector<Tensor<T>> grads_;
    bool ran_backward_ = false;
};

} // namespace vulgnn
