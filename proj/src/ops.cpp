#include <algorithm>
#include <cmath>

#include "adapos/kernels.hpp"
#include "adapos/tensor.hpp"

namespace adapos {

namespace {

bool any_tracked(std::initializer_list<int> nodes) {
    return std::any_of(nodes.begin(), nodes.end(), [](int n) { return n >= 0; });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw shape_error(std::string(op) + ": shapes " + a.shape_str() + " and " + b.shape_str() +
                          " differ");
}

void axpy(std::vector<double>& y, double c, const std::vector<double>& x) {
    for (size_t i = 0; i < y.size(); ++i) y[i] += c * x[i];
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw shape_error("matmul: incompatible shapes " + a.shape_str() + " and " + b.shape_str());
    const int m = static_cast<int>(a.dim(0));
    const int k = static_cast<int>(a.dim(1));
    const int n = static_cast<int>(b.dim(1));

    Tensor out({m, n});
    kernels::matmul(a.data(), b.data(), out.data(), m, k, n);

    if (tape.recording() && any_tracked({a.node, b.node})) {
        const int an = a.node, bn = b.node;
        out.node = tape.emit(out.size(), {an, bn},
                             [a, b, an, bn, m, k, n](const std::vector<double>& g, Tape::Flow& f) {
                                 if (an >= 0)
                                     kernels::matmul_nt_acc(g.data(), b.data(), f.at(an).data(), m, k, n);
                                 if (bn >= 0)
                                     kernels::matmul_tn_acc(a.data(), g.data(), f.at(bn).data(), k, n, m);
                             });
    }
    return out;
}

Tensor conv1d_same(Tape& tape, const Tensor& x, const Tensor& kernels_t, const Tensor& bias) {
    if (x.rank() != 2 || kernels_t.rank() != 3 || bias.rank() != 1)
        throw shape_error("conv1d_same: expected x[c_in x L], kernels[c_out x c_in x w], bias[c_out]");
    const int c_in = static_cast<int>(x.dim(0));
    const int len = static_cast<int>(x.dim(1));
    const int c_out = static_cast<int>(kernels_t.dim(0));
    const int kw = static_cast<int>(kernels_t.dim(2));
    if (kernels_t.dim(1) != c_in)
        throw shape_error("conv1d_same: kernel input channels " + kernels_t.shape_str() +
                          " do not match x " + x.shape_str());
    if (bias.dim(0) != c_out)
        throw shape_error("conv1d_same: bias " + bias.shape_str() + " does not match c_out");
    if (kw % 2 == 0) throw config_error("conv1d_same: kernel width must be odd, got " + std::to_string(kw));

    Tensor out({c_out, len});
    kernels::conv1d_fwd(x.data(), kernels_t.data(), bias.data(), out.data(), c_in, c_out, len, kw);

    if (tape.recording() && any_tracked({x.node, kernels_t.node, bias.node})) {
        const int xn = x.node, wn = kernels_t.node, bn = bias.node;
        out.node = tape.emit(
            out.size(), {xn, wn, bn},
            [x, kernels_t, xn, wn, bn, c_in, c_out, len, kw](const std::vector<double>& g, Tape::Flow& f) {
                if (xn >= 0)
                    kernels::conv1d_grad_x_acc(g.data(), kernels_t.data(), f.at(xn).data(), c_in, c_out,
                                               len, kw);
                if (wn >= 0)
                    kernels::conv1d_grad_w_acc(g.data(), x.data(), f.at(wn).data(), c_in, c_out, len, kw);
                if (bn >= 0) kernels::conv1d_grad_b_acc(g.data(), f.at(bn).data(), c_out, len);
            });
    }
    return out;
}

Tensor softmax_lastdim(Tape& tape, const Tensor& x) {
    const int64_t d = x.dim(x.rank() - 1);
    const int64_t slices = x.size() / d;

    Tensor out(x.shape());
    for (int64_t s = 0; s < slices; ++s) {
        const double* xi = x.data() + s * d;
        double* yi = out.data() + s * d;
        double mx = xi[0];
        for (int64_t j = 0; j < d; ++j) {
            if (std::isnan(xi[j])) throw numeric_error("softmax_lastdim: NaN input");
            mx = std::max(mx, xi[j]);
        }
        double z = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            z += yi[j];
        }
        for (int64_t j = 0; j < d; ++j) yi[j] /= z;
    }

    if (tape.recording() && x.node >= 0) {
        const int xn = x.node;
        const Tensor y = out;  // backward needs the normalized output
        out.node = tape.emit(out.size(), {xn},
                             [y, xn, d, slices](const std::vector<double>& g, Tape::Flow& f) {
                                 auto& gx = f.at(xn);
                                 for (int64_t s = 0; s < slices; ++s) {
                                     const double* yi = y.data() + s * d;
                                     const double* gi = g.data() + static_cast<size_t>(s * d);
                                     double dot = 0.0;
                                     for (int64_t j = 0; j < d; ++j) dot += gi[j] * yi[j];
                                     double* go = gx.data() + s * d;
                                     for (int64_t j = 0; j < d; ++j) go[j] += yi[j] * (gi[j] - dot);
                                 }
                             });
    }
    return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& offset) {
    constexpr double kEps = 1e-5;
    const int64_t d = x.dim(x.rank() - 1);
    if (d < 2) throw config_error("layer_norm: last dimension must be >= 2, got " + std::to_string(d));
    if (gain.rank() != 1 || gain.dim(0) != d || offset.rank() != 1 || offset.dim(0) != d)
        throw shape_error("layer_norm: gain " + gain.shape_str() + " / offset " + offset.shape_str() +
                          " do not match feature dim of " + x.shape_str());
    const int64_t slices = x.size() / d;

    Tensor out(x.shape());
    Tensor xhat(x.shape());           // normalized pre-affine values, reused in backward
    std::vector<double> inv_std(static_cast<size_t>(slices));
    for (int64_t s = 0; s < slices; ++s) {
        const double* xi = x.data() + s * d;
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += xi[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + kEps);
        inv_std[static_cast<size_t>(s)] = is;
        double* hi = xhat.data() + s * d;
        double* yi = out.data() + s * d;
        for (int64_t j = 0; j < d; ++j) {
            hi[j] = (xi[j] - mean) * is;
            yi[j] = gain(j) * hi[j] + offset(j);
        }
    }

    if (tape.recording() && any_tracked({x.node, gain.node, offset.node})) {
        const int xn = x.node, gn = gain.node, on = offset.node;
        out.node = tape.emit(
            out.size(), {xn, gn, on},
            [xhat, gain, inv_std = std::move(inv_std), xn, gn, on, d,
             slices](const std::vector<double>& g, Tape::Flow& f) {
                for (int64_t s = 0; s < slices; ++s) {
                    const double* hi = xhat.data() + s * d;
                    const double* gi = g.data() + static_cast<size_t>(s * d);
                    if (gn >= 0) {
                        auto& gg = f.at(gn);
                        for (int64_t j = 0; j < d; ++j) gg[static_cast<size_t>(j)] += gi[j] * hi[j];
                    }
                    if (on >= 0) {
                        auto& go = f.at(on);
                        for (int64_t j = 0; j < d; ++j) go[static_cast<size_t>(j)] += gi[j];
                    }
                    if (xn >= 0) {
                        // d_j = g_j * gain_j; dx = (d - mean(d) - xhat * mean(d*xhat)) * inv_std
                        double md = 0.0, mdh = 0.0;
                        for (int64_t j = 0; j < d; ++j) {
                            const double dj = gi[j] * gain(j);
                            md += dj;
                            mdh += dj * hi[j];
                        }
                        md /= static_cast<double>(d);
                        mdh /= static_cast<double>(d);
                        auto& gx = f.at(xn);
                        double* go = gx.data() + s * d;
                        const double is = inv_std[static_cast<size_t>(s)];
                        for (int64_t j = 0; j < d; ++j)
                            go[j] += (gi[j] * gain(j) - md - hi[j] * mdh) * is;
                    }
                }
            });
    }
    return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (int64_t i = 0; i < out.size(); ++i) out(i) = a(i) + b(i);
    if (tape.recording() && any_tracked({a.node, b.node})) {
        const int an = a.node, bn = b.node;
        out.node = tape.emit(out.size(), {an, bn}, [an, bn](const std::vector<double>& g, Tape::Flow& f) {
            if (an >= 0) axpy(f.at(an), 1.0, g);
            if (bn >= 0) axpy(f.at(bn), 1.0, g);
        });
    }
    return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (int64_t i = 0; i < out.size(); ++i) out(i) = a(i) - b(i);
    if (tape.recording() && any_tracked({a.node, b.node})) {
        const int an = a.node, bn = b.node;
        out.node = tape.emit(out.size(), {an, bn}, [an, bn](const std::vector<double>& g, Tape::Flow& f) {
            if (an >= 0) axpy(f.at(an), 1.0, g);
            if (bn >= 0) axpy(f.at(bn), -1.0, g);
        });
    }
    return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (int64_t i = 0; i < out.size(); ++i) out(i) = a(i) * b(i);
    if (tape.recording() && any_tracked({a.node, b.node})) {
        const int an = a.node, bn = b.node;
        out.node = tape.emit(out.size(), {an, bn},
                             [a, b, an, bn](const std::vector<double>& g, Tape::Flow& f) {
                                 if (an >= 0) {
                                     auto& ga = f.at(an);
                                     for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.data()[i];
                                 }
                                 if (bn >= 0) {
                                     auto& gb = f.at(bn);
                                     for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.data()[i];
                                 }
                             });
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& x, double c) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < out.size(); ++i) out(i) = c * x(i);
    if (tape.recording() && x.node >= 0) {
        const int xn = x.node;
        out.node = tape.emit(out.size(), {xn}, [xn, c](const std::vector<double>& g, Tape::Flow& f) {
            axpy(f.at(xn), c, g);
        });
    }
    return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < out.size(); ++i) out(i) = x(i) > 0.0 ? x(i) : 0.0;
    if (tape.recording() && x.node >= 0) {
        const int xn = x.node;
        out.node = tape.emit(out.size(), {xn}, [x, xn](const std::vector<double>& g, Tape::Flow& f) {
            auto& gx = f.at(xn);
            for (size_t i = 0; i < g.size(); ++i)
                if (x.data()[i] > 0.0) gx[i] += g[i];
        });
    }
    return out;
}

Tensor sqrt_elem(Tape& tape, const Tensor& x) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < out.size(); ++i) out(i) = std::sqrt(x(i));
    if (tape.recording() && x.node >= 0) {
        const int xn = x.node;
        const Tensor y = out;
        out.node = tape.emit(out.size(), {xn}, [y, xn](const std::vector<double>& g, Tape::Flow& f) {
            auto& gx = f.at(xn);
            // Subgradient 0 at the origin keeps zero-distance pairs finite.
            for (size_t i = 0; i < g.size(); ++i)
                if (y.data()[i] > 0.0) gx[i] += 0.5 * g[i] / y.data()[i];
        });
    }
    return out;
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& b) {
    const int64_t d = x.dim(x.rank() - 1);
    if (b.rank() != 1 || b.dim(0) != d)
        throw shape_error("add_bias: bias " + b.shape_str() + " does not match trailing dim of " +
                          x.shape_str());
    const int64_t rows = x.size() / d;
    Tensor out(x.shape());
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < d; ++j) out(r * d + j) = x(r * d + j) + b(j);
    if (tape.recording() && any_tracked({x.node, b.node})) {
        const int xn = x.node, bn = b.node;
        out.node = tape.emit(out.size(), {xn, bn},
                             [xn, bn, rows, d](const std::vector<double>& g, Tape::Flow& f) {
                                 if (xn >= 0) axpy(f.at(xn), 1.0, g);
                                 if (bn >= 0) {
                                     auto& gb = f.at(bn);
                                     for (int64_t r = 0; r < rows; ++r)
                                         for (int64_t j = 0; j < d; ++j)
                                             gb[static_cast<size_t>(j)] += g[static_cast<size_t>(r * d + j)];
                                 }
                             });
    }
    return out;
}

Tensor sum_all(Tape& tape, const Tensor& x) {
    double s = 0.0;
    for (int64_t i = 0; i < x.size(); ++i) s += x(i);
    Tensor out = Tensor::scalar(s);
    if (tape.recording() && x.node >= 0) {
        const int xn = x.node;
        out.node = tape.emit(1, {xn}, [xn](const std::vector<double>& g, Tape::Flow& f) {
            auto& gx = f.at(xn);
            for (auto& v : gx) v += g[0];
        });
    }
    return out;
}

Tensor mean_rows(Tape& tape, const Tensor& x) {
    if (x.rank() != 2) throw shape_error("mean_rows: expected rank-2 input, got " + x.shape_str());
    const int64_t n = x.dim(0), d = x.dim(1);
    Tensor out({d});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) out(j) += x(i, j);
    for (int64_t j = 0; j < d; ++j) out(j) /= static_cast<double>(n);
    if (tape.recording() && x.node >= 0) {
        const int xn = x.node;
        out.node = tape.emit(d, {xn}, [xn, n, d](const std::vector<double>& g, Tape::Flow& f) {
            auto& gx = f.at(xn);
            const double inv = 1.0 / static_cast<double>(n);
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < d; ++j)
                    gx[static_cast<size_t>(i * d + j)] += g[static_cast<size_t>(j)] * inv;
        });
    }
    return out;
}

Tensor mean_cols(Tape& tape, const Tensor& x) {
    if (x.rank() != 2) throw shape_error("mean_cols: expected rank-2 input, got " + x.shape_str());
    const int64_t c = x.dim(0), len = x.dim(1);
    Tensor out({c});
    for (int64_t i = 0; i < c; ++i) {
        double s = 0.0;
        for (int64_t t = 0; t < len; ++t) s += x(i, t);
        out(i) = s / static_cast<double>(len);
    }
    if (tape.recording() && x.node >= 0) {
        const int xn = x.node;
        out.node = tape.emit(c, {xn}, [xn, c, len](const std::vector<double>& g, Tape::Flow& f) {
            auto& gx = f.at(xn);
            const double inv = 1.0 / static_cast<double>(len);
            for (int64_t i = 0; i < c; ++i)
                for (int64_t t = 0; t < len; ++t)
                    gx[static_cast<size_t>(i * len + t)] += g[static_cast<size_t>(i)] * inv;
        });
    }
    return out;
}

Tensor transpose(Tape& tape, const Tensor& x) {
    if (x.rank() != 2) throw shape_error("transpose: expected rank-2 input, got " + x.shape_str());
    const int64_t m = x.dim(0), n = x.dim(1);
    Tensor out({n, m});
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out(j, i) = x(i, j);
    if (tape.recording() && x.node >= 0) {
        const int xn = x.node;
        out.node = tape.emit(out.size(), {xn}, [xn, m, n](const std::vector<double>& g, Tape::Flow& f) {
            auto& gx = f.at(xn);
            for (int64_t j = 0; j < n; ++j)
                for (int64_t i = 0; i < m; ++i)
                    gx[static_cast<size_t>(i * n + j)] += g[static_cast<size_t>(j * m + i)];
        });
    }
    return out;
}

Tensor reshape(Tape& tape, const Tensor& x, std::vector<int64_t> shape) {
    Tensor out(std::move(shape), x.values());
    if (out.size() != x.size())
        throw shape_error("reshape: size mismatch between " + x.shape_str() + " and " + out.shape_str());
    if (tape.recording() && x.node >= 0) {
        const int xn = x.node;
        out.node = tape.emit(out.size(), {xn}, [xn](const std::vector<double>& g, Tape::Flow& f) {
            axpy(f.at(xn), 1.0, g);
        });
    }
    return out;
}

Tensor slice_cols(Tape& tape, const Tensor& x, int64_t c0, int64_t c1) {
    if (x.rank() != 2) throw shape_error("slice_cols: expected rank-2 input, got " + x.shape_str());
    const int64_t n = x.dim(0), d = x.dim(1);
    if (c0 < 0 || c1 > d || c0 >= c1)
        throw shape_error("slice_cols: range [" + std::to_string(c0) + ", " + std::to_string(c1) +
                          ") invalid for " + x.shape_str());
    const int64_t w = c1 - c0;
    Tensor out({n, w});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < w; ++j) out(i, j) = x(i, c0 + j);
    if (tape.recording() && x.node >= 0) {
        const int xn = x.node;
        out.node =
            tape.emit(out.size(), {xn}, [xn, n, d, c0, w](const std::vector<double>& g, Tape::Flow& f) {
                auto& gx = f.at(xn);
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < w; ++j)
                        gx[static_cast<size_t>(i * d + c0 + j)] += g[static_cast<size_t>(i * w + j)];
            });
    }
    return out;
}

Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
    if (parts.empty()) throw shape_error("concat_cols: no parts");
    const int64_t n = parts[0].dim(0);
    int64_t d = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.dim(0) != n)
            throw shape_error("concat_cols: inconsistent part shape " + p.shape_str());
        d += p.dim(1);
    }
    Tensor out({n, d});
    int64_t off = 0;
    bool tracked = false;
    std::vector<int> inputs;
    std::vector<int64_t> widths;
    for (const auto& p : parts) {
        const int64_t w = p.dim(1);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < w; ++j) out(i, off + j) = p(i, j);
        inputs.push_back(p.node);
        widths.push_back(w);
        tracked = tracked || p.node >= 0;
        off += w;
    }
    if (tape.recording() && tracked) {
        out.node = tape.emit(out.size(), inputs,
                             [inputs, widths, n, d](const std::vector<double>& g, Tape::Flow& f) {
                                 int64_t off = 0;
                                 for (size_t p = 0; p < inputs.size(); ++p) {
                                     const int64_t w = widths[p];
                                     if (inputs[p] >= 0) {
                                         auto& gp = f.at(inputs[p]);
                                         for (int64_t i = 0; i < n; ++i)
                                             for (int64_t j = 0; j < w; ++j)
                                                 gp[static_cast<size_t>(i * w + j)] +=
                                                     g[static_cast<size_t>(i * d + off + j)];
                                     }
                                     off += w;
                                 }
                             });
    }
    return out;
}

Tensor stack_rows(Tape& tape, std::span<const Tensor> rows) {
    if (rows.empty()) throw shape_error("stack_rows: no rows");
    const int64_t d = rows[0].size();
    const int64_t n = static_cast<int64_t>(rows.size());
    Tensor out({n, d});
    std::vector<int> inputs;
    bool tracked = false;
    for (int64_t i = 0; i < n; ++i) {
        const Tensor& r = rows[static_cast<size_t>(i)];
        if (r.size() != d) throw shape_error("stack_rows: inconsistent row size " + r.shape_str());
        for (int64_t j = 0; j < d; ++j) out(i, j) = r(j);
        inputs.push_back(r.node);
        tracked = tracked || r.node >= 0;
    }
    if (tape.recording() && tracked) {
        out.node = tape.emit(out.size(), inputs,
                             [inputs, d](const std::vector<double>& g, Tape::Flow& f) {
                                 for (size_t i = 0; i < inputs.size(); ++i) {
                                     if (inputs[i] < 0) continue;
                                     auto& gr = f.at(inputs[i]);
                                     for (int64_t j = 0; j < d; ++j)
                                         gr[static_cast<size_t>(j)] += g[i * static_cast<size_t>(d) +
                                                                         static_cast<size_t>(j)];
                                 }
                             });
    }
    return out;
}

Tensor embedding_rows(Tape& tape, const Tensor& table, std::span<const int> ids) {
    if (table.rank() != 2) throw shape_error("embedding_rows: table must be rank-2, got " + table.shape_str());
    const int64_t rows = table.dim(0), d = table.dim(1);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= rows)
            throw validation_error("embedding lookup id " + std::to_string(ids[i]) +
                                   " outside table with " + std::to_string(rows) + " rows");
        for (size_t j = i + 1; j < ids.size(); ++j)
            if (ids[i] == ids[j])
                throw validation_error("duplicate id " + std::to_string(ids[i]) + " in embedding lookup");
    }
    const int64_t n = static_cast<int64_t>(ids.size());
    Tensor out({n, d});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) out(i, j) = table(ids[static_cast<size_t>(i)], j);
    if (tape.recording() && table.node >= 0) {
        const int tn = table.node;
        std::vector<int> idv(ids.begin(), ids.end());
        out.node = tape.emit(out.size(), {tn},
                             [tn, idv = std::move(idv), d](const std::vector<double>& g, Tape::Flow& f) {
                                 auto& gt = f.at(tn);
                                 for (size_t i = 0; i < idv.size(); ++i)
                                     for (int64_t j = 0; j < d; ++j)
                                         gt[static_cast<size_t>(idv[i] * d + j)] +=
                                             g[i * static_cast<size_t>(d) + static_cast<size_t>(j)];
                             });
    }
    return out;
}

}  // namespace adapos
