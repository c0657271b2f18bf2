#include "ecgsal/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "ecgsal/error.hpp"

namespace ecgsal::ad {
namespace {

struct Signal3 {
    std::size_t batch;
    std::size_t channels;
    std::size_t length;
};

Signal3 as_signal(const Tensor& x, const char* op) {
    if (x.rank() == 2) return {1, x.dim(0), x.dim(1)};
    if (x.rank() == 3) return {x.dim(0), x.dim(1), x.dim(2)};
    throw ShapeError(std::string(op) + ": expected [C, L] or [N, C, L], got " + to_string(x.shape()));
}

Shape signal_shape(const Tensor& like, std::size_t channels, std::size_t length) {
    if (like.rank() == 2) return {channels, length};
    return {like.dim(0), channels, length};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMatrix>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, std::size_t stride,
                                 Padding padding) {
    if (stride == 0) throw ShapeError("conv1d: stride must be positive");
    if (padding == Padding::same) return (length + stride - 1) / stride;
    if (kernel > length) return 0;
    return (length - kernel) / stride + 1;
}

Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
              Padding padding) {
    const auto in = as_signal(x, "conv1d");
    if (w.rank() != 3 || w.dim(1) != in.channels) {
        throw ShapeError("conv1d: weight " + to_string(w.shape()) + " incompatible with input " +
                         to_string(x.shape()));
    }
    const std::size_t c_out = w.dim(0);
    const std::size_t kernel = w.dim(2);
    if (b.defined() && (b.rank() != 1 || b.dim(0) != c_out)) {
        throw ShapeError("conv1d: bias " + to_string(b.shape()) + " incompatible with weight " +
                         to_string(w.shape()));
    }
    const std::size_t out_len = conv1d_output_length(in.length, kernel, stride, padding);
    if (out_len == 0) {
        throw ShapeError("conv1d: kernel " + std::to_string(kernel) + " longer than input " +
                         to_string(x.shape()));
    }
    long pad_left = 0;
    if (padding == Padding::same) {
        const long total = std::max<long>(
            static_cast<long>((out_len - 1) * stride + kernel) - static_cast<long>(in.length), 0);
        pad_left = total / 2;
    }

    // Valid output range [lo, hi) for tap k, i.e. 0 <= t*stride + k - pad_left < L.
    auto tap_range = [=](std::size_t k) {
        const long offset = static_cast<long>(k) - pad_left;
        const long s = static_cast<long>(stride);
        const long lo = offset >= 0 ? 0 : (-offset + s - 1) / s;
        const long last = static_cast<long>(in.length) - 1 - offset;
        const long hi = last < 0 ? 0 : std::min<long>(static_cast<long>(out_len), last / s + 1);
        return std::pair<long, long>{lo, std::max(lo, hi)};
    };

    // Unfolded input: row (ci, k), column (n, t) holds x[n, ci, t*stride + k - pad_left].
    const std::size_t rows = in.channels * kernel;
    const std::size_t cols = in.batch * out_len;
    auto unfolded = std::make_shared<RowMatrix>(RowMatrix::Zero(static_cast<long>(rows), static_cast<long>(cols)));
    const double* xv = x.values().data();
    for (std::size_t ci = 0; ci < in.channels; ++ci) {
        for (std::size_t k = 0; k < kernel; ++k) {
            const auto [lo, hi] = tap_range(k);
            const long offset = static_cast<long>(k) - pad_left;
            double* row = unfolded->data() + (ci * kernel + k) * cols;
            for (std::size_t n = 0; n < in.batch; ++n) {
                const double* xr = xv + (n * in.channels + ci) * in.length;
                double* dst = row + n * out_len;
                for (long t = lo; t < hi; ++t) dst[t] = xr[t * static_cast<long>(stride) + offset];
            }
        }
    }

    const ConstRowMap wm(w.values().data(), static_cast<long>(c_out), static_cast<long>(rows));
    RowMatrix y = wm * (*unfolded);
    Tensor out(signal_shape(x, c_out, out_len));
    double* yv = out.values().data();
    for (std::size_t n = 0; n < in.batch; ++n) {
        for (std::size_t co = 0; co < c_out; ++co) {
            const double* src = y.data() + co * cols + n * out_len;
            double* dst = yv + (n * c_out + co) * out_len;
            const double bias = b.defined() ? b[co] : 0.0;
            for (std::size_t t = 0; t < out_len; ++t) dst[t] = src[t] + bias;
        }
    }

    if (tape.tracks({&x, &w, &b})) {
        tape.record([x, w, b, out, in, c_out, kernel, out_len, stride, pad_left, rows, cols, unfolded,
                     tap_range]() mutable {
            const double* dy_all = out.grad().data();
            RowMatrix dy(static_cast<long>(c_out), static_cast<long>(cols));
            for (std::size_t n = 0; n < in.batch; ++n) {
                for (std::size_t co = 0; co < c_out; ++co) {
                    std::copy_n(dy_all + (n * c_out + co) * out_len, out_len, dy.data() + co * cols + n * out_len);
                }
            }
            if (b.defined() && b.requires_grad()) {
                auto db = b.grad();
                for (std::size_t co = 0; co < c_out; ++co) db[co] += dy.row(static_cast<long>(co)).sum();
            }
            if (w.requires_grad()) {
                RowMap dw(w.grad().data(), static_cast<long>(c_out), static_cast<long>(rows));
                dw.noalias() += dy * unfolded->transpose();
            }
            if (x.requires_grad()) {
                const ConstRowMap wm(w.values().data(), static_cast<long>(c_out), static_cast<long>(rows));
                const RowMatrix dcols = wm.transpose() * dy;
                double* dx = x.grad().data();
                for (std::size_t ci = 0; ci < in.channels; ++ci) {
                    for (std::size_t k = 0; k < kernel; ++k) {
                        const auto [lo, hi] = tap_range(k);
                        const long offset = static_cast<long>(k) - pad_left;
                        const double* row = dcols.data() + (ci * kernel + k) * cols;
                        for (std::size_t n = 0; n < in.batch; ++n) {
                            double* dxr = dx + (n * in.channels + ci) * in.length;
                            const double* src = row + n * out_len;
                            for (long t = lo; t < hi; ++t) dxr[t * static_cast<long>(stride) + offset] += src[t];
                        }
                    }
                }
            }
        });
        out.set_requires_grad(true);
    }
    return out;
}

BatchNormStats::BatchNormStats(std::size_t channels)
    : running_mean(Shape{channels}, 0.0), running_var(Shape{channels}, 1.0), updates(Shape{1}, 0.0) {}

Tensor batchnorm1d(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, BatchNormMode mode, double eps, double momentum) {
    const auto in = as_signal(x, "batchnorm1d");
    const std::size_t C = in.channels;
    if (gamma.size() != C || beta.size() != C || stats.running_mean.size() != C ||
        stats.running_var.size() != C) {
        throw ShapeError("batchnorm1d: parameters do not match " + std::to_string(C) + " channels");
    }
    if (mode == BatchNormMode::eval && !stats.initialized()) {
        throw StatisticsError("batchnorm1d: eval mode before any training step populated running statistics");
    }
    const std::size_t M = in.batch * in.length;
    std::vector<double> mean(C), inv_std(C);
    if (mode == BatchNormMode::train) {
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t n = 0; n < in.batch; ++n) {
                const double* r = x.values().data() + (n * C + c) * in.length;
                for (std::size_t t = 0; t < in.length; ++t) s += r[t];
            }
            const double mu = s / static_cast<double>(M);
            double v = 0.0;
            for (std::size_t n = 0; n < in.batch; ++n) {
                const double* r = x.values().data() + (n * C + c) * in.length;
                for (std::size_t t = 0; t < in.length; ++t) v += (r[t] - mu) * (r[t] - mu);
            }
            v /= static_cast<double>(M);
            mean[c] = mu;
            inv_std[c] = 1.0 / std::sqrt(v + eps);
            const double unbiased = M > 1 ? v * static_cast<double>(M) / static_cast<double>(M - 1) : v;
            stats.running_mean[c] = (1.0 - momentum) * stats.running_mean[c] + momentum * mu;
            stats.running_var[c] = (1.0 - momentum) * stats.running_var[c] + momentum * unbiased;
        }
        stats.updates[0] += 1.0;
    } else {
        for (std::size_t c = 0; c < C; ++c) {
            mean[c] = stats.running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + eps);
        }
    }

    Tensor out(x.shape());
    Tensor xhat(x.shape());
    for (std::size_t n = 0; n < in.batch; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t off = (n * C + c) * in.length;
            for (std::size_t t = 0; t < in.length; ++t) {
                const double h = (x[off + t] - mean[c]) * inv_std[c];
                xhat[off + t] = h;
                out[off + t] = gamma[c] * h + beta[c];
            }
        }
    }

    if (tape.tracks({&x, &gamma, &beta})) {
        tape.record([x, gamma, beta, out, xhat, in, C, M, inv_std, mode]() mutable {
            const auto dy = out.grad();
            const bool need_x = x.requires_grad();
            std::span<double> dx = need_x ? x.grad() : std::span<double>{};
            for (std::size_t c = 0; c < C; ++c) {
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::size_t n = 0; n < in.batch; ++n) {
                    const std::size_t off = (n * C + c) * in.length;
                    for (std::size_t t = 0; t < in.length; ++t) {
                        sum_dy += dy[off + t];
                        sum_dy_xhat += dy[off + t] * xhat[off + t];
                    }
                }
                if (gamma.requires_grad()) gamma.grad()[c] += sum_dy_xhat;
                if (beta.requires_grad()) beta.grad()[c] += sum_dy;
                if (!need_x) continue;
                const double g = gamma[c];
                if (mode == BatchNormMode::eval) {
                    for (std::size_t n = 0; n < in.batch; ++n) {
                        const std::size_t off = (n * C + c) * in.length;
                        for (std::size_t t = 0; t < in.length; ++t) dx[off + t] += dy[off + t] * g * inv_std[c];
                    }
                    continue;
                }
                // dxhat = g * dy; dx = inv_std/M * (M dxhat - sum dxhat - xhat sum(dxhat xhat))
                const double m = static_cast<double>(M);
                const double k = g * inv_std[c] / m;
                for (std::size_t n = 0; n < in.batch; ++n) {
                    const std::size_t off = (n * C + c) * in.length;
                    for (std::size_t t = 0; t < in.length; ++t) {
                        dx[off + t] += k * (m * dy[off + t] - sum_dy - xhat[off + t] * sum_dy_xhat);
                    }
                }
            }
        });
        out.set_requires_grad(true);
    }
    return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
    Tensor out(x.shape());
    const auto xv = x.values();
    auto yv = out.values();
    for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    if (tape.tracks({&x})) {
        tape.record([x, out]() mutable {
            const auto dy = out.grad();
            auto dx = x.grad();
            const auto xv = x.values();
            for (std::size_t i = 0; i < dx.size(); ++i) {
                if (xv[i] > 0.0) dx[i] += dy[i];
            }
        });
        out.set_requires_grad(true);
    }
    return out;
}

Tensor maxpool1d(Tape& tape, const Tensor& x, std::size_t width, std::size_t stride) {
    const auto in = as_signal(x, "maxpool1d");
    if (width == 0 || stride == 0) throw ShapeError("maxpool1d: width and stride must be positive");
    if (width > in.length) {
        throw ShapeError("maxpool1d: width " + std::to_string(width) + " exceeds input " + to_string(x.shape()));
    }
    const std::size_t out_len = (in.length - width) / stride + 1;
    Tensor out(signal_shape(x, in.channels, out_len));
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t row = 0; row < in.batch * in.channels; ++row) {
        const double* xr = x.values().data() + row * in.length;
        for (std::size_t t = 0; t < out_len; ++t) {
            std::size_t best = t * stride;
            for (std::size_t j = best + 1; j < t * stride + width; ++j) {
                if (xr[j] > xr[best]) best = j;
            }
            out[row * out_len + t] = xr[best];
            argmax[row * out_len + t] = row * in.length + best;
        }
    }
    if (tape.tracks({&x})) {
        tape.record([x, out, argmax = std::move(argmax)]() mutable {
            const auto dy = out.grad();
            auto dx = x.grad();
            for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
        });
        out.set_requires_grad(true);
    }
    return out;
}

Tensor gap(Tape& tape, const Tensor& x) {
    const auto in = as_signal(x, "gap");
    Shape shape = x.rank() == 2 ? Shape{in.channels} : Shape{in.batch, in.channels};
    Tensor out(shape);
    const double scale = 1.0 / static_cast<double>(in.length);
    for (std::size_t row = 0; row < in.batch * in.channels; ++row) {
        double s = 0.0;
        for (std::size_t t = 0; t < in.length; ++t) s += x[row * in.length + t];
        out[row] = s * scale;
    }
    if (tape.tracks({&x})) {
        tape.record([x, out, in, scale]() mutable {
            const auto dy = out.grad();
            auto dx = x.grad();
            for (std::size_t row = 0; row < in.batch * in.channels; ++row) {
                for (std::size_t t = 0; t < in.length; ++t) dx[row * in.length + t] += dy[row] * scale;
            }
        });
        out.set_requires_grad(true);
    }
    return out;
}

Tensor dense(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 1 && x.rank() != 2) throw ShapeError("dense: expected [In] or [N, In], got " + to_string(x.shape()));
    const std::size_t batch = x.rank() == 1 ? 1 : x.dim(0);
    const std::size_t n_in = x.shape().back();
    if (w.rank() != 2 || w.dim(1) != n_in) {
        throw ShapeError("dense: weight " + to_string(w.shape()) + " incompatible with input " + to_string(x.shape()));
    }
    const std::size_t n_out = w.dim(0);
    if (b.size() != n_out) throw ShapeError("dense: bias " + to_string(b.shape()) + " incompatible with weight " + to_string(w.shape()));
    Tensor out(x.rank() == 1 ? Shape{n_out} : Shape{batch, n_out});
    for (std::size_t n = 0; n < batch; ++n) {
        const double* xr = x.values().data() + n * n_in;
        for (std::size_t o = 0; o < n_out; ++o) {
            const double* wr = w.values().data() + o * n_in;
            double acc = b[o];
            for (std::size_t i = 0; i < n_in; ++i) acc += wr[i] * xr[i];
            out[n * n_out + o] = acc;
        }
    }
    if (tape.tracks({&x, &w, &b})) {
        tape.record([x, w, b, out, batch, n_in, n_out]() mutable {
            const auto dy = out.grad();
            double* dx = x.requires_grad() ? x.grad().data() : nullptr;
            double* dw = w.requires_grad() ? w.grad().data() : nullptr;
            double* db = b.requires_grad() ? b.grad().data() : nullptr;
            for (std::size_t n = 0; n < batch; ++n) {
                const double* xr = x.values().data() + n * n_in;
                for (std::size_t o = 0; o < n_out; ++o) {
                    const double g = dy[n * n_out + o];
                    if (db) db[o] += g;
                    if (dw) {
                        double* dwr = dw + o * n_in;
                        for (std::size_t i = 0; i < n_in; ++i) dwr[i] += g * xr[i];
                    }
                    if (dx) {
                        const double* wr = w.values().data() + o * n_in;
                        double* dxr = dx + n * n_in;
                        for (std::size_t i = 0; i < n_in; ++i) dxr[i] += g * wr[i];
                    }
                }
            }
        });
        out.set_requires_grad(true);
    }
    return out;
}

Tensor concat(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank() || a.rank() == 0 ||
        !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
        throw ShapeError("concat: leading axes differ " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }
    const std::size_t la = a.shape().back();
    const std::size_t lb = b.shape().back();
    const std::size_t rows = a.size() / la;
    Shape shape = a.shape();
    shape.back() = la + lb;
    Tensor out(shape);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(a.values().data() + r * la, la, out.values().data() + r * (la + lb));
        std::copy_n(b.values().data() + r * lb, lb, out.values().data() + r * (la + lb) + la);
    }
    if (tape.tracks({&a, &b})) {
        tape.record([a, b, out, la, lb, rows]() mutable {
            const auto dy = out.grad();
            for (std::size_t r = 0; r < rows; ++r) {
                if (a.requires_grad()) {
                    auto da = a.grad();
                    for (std::size_t i = 0; i < la; ++i) da[r * la + i] += dy[r * (la + lb) + i];
                }
                if (b.requires_grad()) {
                    auto db = b.grad();
                    for (std::size_t i = 0; i < lb; ++i) db[r * lb + i] += dy[r * (la + lb) + la + i];
                }
            }
        });
        out.set_requires_grad(true);
    }
    return out;
}

Tensor concat_channels(Tape& tape, std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const auto first = as_signal(parts[0], "concat_channels");
    std::size_t channels = 0;
    for (const auto& p : parts) {
        const auto s = as_signal(p, "concat_channels");
        if (p.rank() != parts[0].rank() || s.batch != first.batch || s.length != first.length) {
            throw ShapeError("concat_channels: incompatible " + to_string(parts[0].shape()) + " and " +
                             to_string(p.shape()));
        }
        channels += s.channels;
    }
    const std::size_t L = first.length;
    Tensor out(signal_shape(parts[0], channels, L));
    std::vector<std::size_t> base;
    std::size_t c0 = 0;
    for (const auto& p : parts) {
        const std::size_t cp = p.size() / (first.batch * L);
        base.push_back(c0);
        for (std::size_t n = 0; n < first.batch; ++n) {
            std::copy_n(p.values().data() + n * cp * L, cp * L, out.values().data() + (n * channels + c0) * L);
        }
        c0 += cp;
    }
    bool track = false;
    for (const auto& p : parts) track = track || tape.tracks({&p});
    if (track) {
        std::vector<Tensor> inputs(parts.begin(), parts.end());
        tape.record([inputs, out, base, channels, L, batch = first.batch]() mutable {
            const auto dy = out.grad();
            for (std::size_t i = 0; i < inputs.size(); ++i) {
                if (!inputs[i].requires_grad()) continue;
                const std::size_t cp = inputs[i].size() / (batch * L);
                auto dx = inputs[i].grad();
                for (std::size_t n = 0; n < batch; ++n) {
                    const double* src = dy.data() + (n * channels + base[i]) * L;
                    double* dst = dx.data() + n * cp * L;
                    for (std::size_t j = 0; j < cp * L; ++j) dst[j] += src[j];
                }
            }
        });
        out.set_requires_grad(true);
    }
    return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    if (tape.tracks({&a, &b})) {
        tape.record([a, b, out]() mutable {
            const auto dy = out.grad();
            if (a.requires_grad()) {
                auto da = a.grad();
                for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
            }
            if (b.requires_grad()) {
                auto db = b.grad();
                for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
            }
        });
        out.set_requires_grad(true);
    }
    return out;
}

Tensor elementwise_mul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "elementwise_mul");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    if (tape.tracks({&a, &b})) {
        tape.record([a, b, out]() mutable {
            const auto dy = out.grad();
            if (a.requires_grad()) {
                auto da = a.grad();
                for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * b[i];
            }
            if (b.requires_grad()) {
                auto db = b.grad();
                for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * a[i];
            }
        });
        out.set_requires_grad(true);
    }
    return out;
}

Tensor affine(Tape& tape, const Tensor& x, double scale, double shift) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * x[i] + shift;
    if (tape.tracks({&x})) {
        tape.record([x, out, scale]() mutable {
            const auto dy = out.grad();
            auto dx = x.grad();
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += scale * dy[i];
        });
        out.set_requires_grad(true);
    }
    return out;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
    if (numel(shape) != x.size()) {
        throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
    }
    Tensor out(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()));
    if (tape.tracks({&x})) {
        tape.record([x, out]() mutable {
            const auto dy = out.grad();
            auto dx = x.grad();
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
        });
        out.set_requires_grad(true);
    }
    return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    Tensor out = Tensor::scalar(s);
    if (tape.tracks({&x})) {
        tape.record([x, out]() mutable {
            const double g = out.grad()[0];
            for (double& d : x.grad()) d += g;
        });
        out.set_requires_grad(true);
    }
    return out;
}

Tensor pick(Tape& tape, const Tensor& x, std::size_t index) {
    if (index >= x.size()) {
        throw ShapeError("pick: index " + std::to_string(index) + " outside " + to_string(x.shape()));
    }
    Tensor out = Tensor::scalar(x[index]);
    if (tape.tracks({&x})) {
        tape.record([x, out, index]() mutable { x.grad()[index] += out.grad()[0]; });
        out.set_requires_grad(true);
    }
    return out;
}

Tensor softmax(Tape& tape, const Tensor& logits) {
    if (logits.rank() == 0) throw ShapeError("softmax: scalar input");
    const std::size_t C = logits.shape().back();
    const std::size_t rows = logits.size() / C;
    Tensor out(logits.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* z = logits.values().data() + r * C;
        double* p = out.values().data() + r * C;
        const double zmax = *std::max_element(z, z + C);
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += (p[c] = std::exp(z[c] - zmax));
        for (std::size_t c = 0; c < C; ++c) p[c] /= s;
    }
    if (tape.tracks({&logits})) {
        tape.record([logits, out, C, rows]() mutable {
            const auto dy = out.grad();
            auto dx = logits.grad();
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < C; ++c) dot += dy[r * C + c] * out[r * C + c];
                for (std::size_t c = 0; c < C; ++c) dx[r * C + c] += out[r * C + c] * (dy[r * C + c] - dot);
            }
        });
        out.set_requires_grad(true);
    }
    return out;
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 1 && logits.rank() != 2) {
        throw ShapeError("softmax_cross_entropy: expected [C] or [N, C], got " + to_string(logits.shape()));
    }
    const std::size_t C = logits.shape().back();
    const std::size_t rows = logits.rank() == 1 ? 1 : logits.dim(0);
    if (labels.size() != rows) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
    }
    std::vector<double> probs(logits.size());
    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= C) {
            throw ShapeError("softmax_cross_entropy: label " + std::to_string(labels[r]) + " out of range");
        }
        const double* z = logits.values().data() + r * C;
        const double zmax = *std::max_element(z, z + C);
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += (probs[r * C + c] = std::exp(z[c] - zmax));
        for (std::size_t c = 0; c < C; ++c) probs[r * C + c] /= s;
        loss += std::log(s) + zmax - z[labels[r]];
    }
    const double inv_rows = 1.0 / static_cast<double>(rows);
    Tensor out = Tensor::scalar(loss * inv_rows);
    if (tape.tracks({&logits})) {
        std::vector<int> lab(labels.begin(), labels.end());
        tape.record([logits, out, probs = std::move(probs), lab = std::move(lab), C, rows, inv_rows]() mutable {
            const double g = out.grad()[0] * inv_rows;
            auto dx = logits.grad();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < C; ++c) {
                    const double onehot = static_cast<int>(c) == lab[r] ? 1.0 : 0.0;
                    dx[r * C + c] += g * (probs[r * C + c] - onehot);
                }
            }
        });
        out.set_requires_grad(true);
    }
    return out;
}

Tensor lstm_sequence(Tape& tape, const Tensor& x, const LstmParams& params) {
    if (x.rank() != 2 && x.rank() != 3) {
        throw ShapeError("lstm_sequence: expected [T, D] or [N, T, D], got " + to_string(x.shape()));
    }
    const std::size_t batch = x.rank() == 2 ? 1 : x.dim(0);
    const std::size_t steps = x.shape()[x.rank() - 2];
    const std::size_t D = x.shape().back();
    const std::size_t H = params.hidden();
    if (steps == 0) throw ShapeError("lstm_sequence: empty sequence");
    if (params.bias.size() != 4 * H || params.w_input.shape() != Shape{4 * H, D} ||
        params.w_recurrent.shape() != Shape{4 * H, H}) {
        throw ShapeError("lstm_sequence: parameters " + to_string(params.w_input.shape()) + ", " +
                         to_string(params.w_recurrent.shape()) + ", " + to_string(params.bias.shape()) +
                         " incompatible with input width " + std::to_string(D));
    }
    const std::size_t G = 4 * H;
    // Per (n, t): activated gates [i f g o], cell state, tanh(cell), hidden.
    std::vector<double> gates(batch * steps * G), cell(batch * steps * H), cell_tanh(batch * steps * H),
        hidden(batch * steps * H);
    const double* wx = params.w_input.values().data();
    const double* wh = params.w_recurrent.values().data();
    const double* bias = params.bias.values().data();
    std::vector<double> z(G);
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t t = 0; t < steps; ++t) {
            const double* xt = x.values().data() + (n * steps + t) * D;
            const double* h_prev = t ? &hidden[(n * steps + t - 1) * H] : nullptr;
            const double* c_prev = t ? &cell[(n * steps + t - 1) * H] : nullptr;
            for (std::size_t g = 0; g < G; ++g) {
                double acc = bias[g];
                const double* wr = wx + g * D;
                for (std::size_t d = 0; d < D; ++d) acc += wr[d] * xt[d];
                if (h_prev) {
                    const double* ur = wh + g * H;
                    for (std::size_t j = 0; j < H; ++j) acc += ur[j] * h_prev[j];
                }
                z[g] = acc;
            }
            double* a = &gates[(n * steps + t) * G];
            for (std::size_t j = 0; j < H; ++j) {
                a[j] = sigmoid(z[j]);
                a[H + j] = sigmoid(z[H + j]);
                a[2 * H + j] = std::tanh(z[2 * H + j]);
                a[3 * H + j] = sigmoid(z[3 * H + j]);
                const double c = a[H + j] * (c_prev ? c_prev[j] : 0.0) + a[j] * a[2 * H + j];
                const std::size_t idx = (n * steps + t) * H + j;
                cell[idx] = c;
                cell_tanh[idx] = std::tanh(c);
                hidden[idx] = a[3 * H + j] * cell_tanh[idx];
            }
        }
    }
    Tensor out(x.rank() == 2 ? Shape{H} : Shape{batch, H});
    for (std::size_t n = 0; n < batch; ++n) {
        std::copy_n(&hidden[(n * steps + steps - 1) * H], H, out.values().data() + n * H);
    }

    const Tensor& wxt = params.w_input;
    const Tensor& wht = params.w_recurrent;
    const Tensor& bt = params.bias;
    if (tape.tracks({&x, &wxt, &wht, &bt})) {
        tape.record([x, w_input = params.w_input, w_rec = params.w_recurrent, b = params.bias, out, batch, steps, D,
                     H, G, gates = std::move(gates), cell = std::move(cell), cell_tanh = std::move(cell_tanh),
                     hidden = std::move(hidden)]() mutable {
            const auto dout = out.grad();
            double* dx = x.requires_grad() ? x.grad().data() : nullptr;
            double* dwx = w_input.requires_grad() ? w_input.grad().data() : nullptr;
            double* dwh = w_rec.requires_grad() ? w_rec.grad().data() : nullptr;
            double* db = b.requires_grad() ? b.grad().data() : nullptr;
            const double* wx = w_input.values().data();
            const double* wh = w_rec.values().data();
            std::vector<double> dh(H), dc(H), dz(G), dh_prev(H);
            for (std::size_t n = 0; n < batch; ++n) {
                std::copy_n(dout.data() + n * H, H, dh.begin());
                std::fill(dc.begin(), dc.end(), 0.0);
                for (std::size_t t = steps; t-- > 0;) {
                    const std::size_t base = (n * steps + t) * H;
                    const double* a = &gates[(n * steps + t) * G];
                    for (std::size_t j = 0; j < H; ++j) {
                        const double i_g = a[j], f_g = a[H + j], g_g = a[2 * H + j], o_g = a[3 * H + j];
                        const double tc = cell_tanh[base + j];
                        const double c_prev = t ? cell[base - H + j] : 0.0;
                        const double d_o = dh[j] * tc;
                        const double d_c = dc[j] + dh[j] * o_g * (1.0 - tc * tc);
                        dz[j] = d_c * g_g * i_g * (1.0 - i_g);
                        dz[H + j] = d_c * c_prev * f_g * (1.0 - f_g);
                        dz[2 * H + j] = d_c * i_g * (1.0 - g_g * g_g);
                        dz[3 * H + j] = d_o * o_g * (1.0 - o_g);
                        dc[j] = d_c * f_g;
                    }
                    const double* xt = x.values().data() + (n * steps + t) * D;
                    const double* h_prev = t ? &hidden[base - H] : nullptr;
                    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
                    for (std::size_t g = 0; g < G; ++g) {
                        const double gz = dz[g];
                        if (gz == 0.0) continue;
                        if (db) db[g] += gz;
                        if (dwx) {
                            double* r = dwx + g * D;
                            for (std::size_t d = 0; d < D; ++d) r[d] += gz * xt[d];
                        }
                        if (dx) {
                            const double* r = wx + g * D;
                            double* dxt = dx + (n * steps + t) * D;
                            for (std::size_t d = 0; d < D; ++d) dxt[d] += gz * r[d];
                        }
                        if (h_prev) {
                            if (dwh) {
                                double* r = dwh + g * H;
                                for (std::size_t j = 0; j < H; ++j) r[j] += gz * h_prev[j];
                            }
                            const double* r = wh + g * H;
                            for (std::size_t j = 0; j < H; ++j) dh_prev[j] += gz * r[j];
                        }
                    }
                    dh.swap(dh_prev);
                }
            }
        });
        out.set_requires_grad(true);
    }
    return out;
}

}  // namespace ecgsal::ad
