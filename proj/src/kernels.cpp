#include "adapos/kernels.hpp"

namespace adapos::kernels {

// Work threshold below which spawning a team costs more than the loop.
static constexpr long kParallelCutoff = 1 << 16;

namespace serial {

void matmul(const double* a, const double* b, double* y, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* yi = y + static_cast<long>(i) * n;
        for (int j = 0; j < n; ++j) yi[j] = 0.0;
        const double* ai = a + static_cast<long>(i) * k;
        for (int t = 0; t < k; ++t) {
            const double ait = ai[t];
            const double* bt = b + static_cast<long>(t) * n;
            for (int j = 0; j < n; ++j) yi[j] += ait * bt[j];
        }
    }
}

void matmul_nt_acc(const double* a, const double* b, double* y, int m, int n, int p) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<long>(i) * p;
        double* yi = y + static_cast<long>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + static_cast<long>(j) * p;
            double s = 0.0;
            for (int t = 0; t < p; ++t) s += ai[t] * bj[t];
            yi[j] += s;
        }
    }
}

void matmul_tn_acc(const double* a, const double* b, double* y, int m, int n, int p) {
    for (int i = 0; i < m; ++i) {
        double* yi = y + static_cast<long>(i) * n;
        for (int t = 0; t < p; ++t) {
            const double ati = a[static_cast<long>(t) * m + i];
            const double* bt = b + static_cast<long>(t) * n;
            for (int j = 0; j < n; ++j) yi[j] += ati * bt[j];
        }
    }
}

void conv1d_fwd(const double* x, const double* w, const double* bias, double* y,
                int c_in, int c_out, int len, int kw) {
    const int pad = (kw - 1) / 2;
    for (int o = 0; o < c_out; ++o) {
        double* yo = y + static_cast<long>(o) * len;
        const double b = bias ? bias[o] : 0.0;
        for (int t = 0; t < len; ++t) yo[t] = b;
        for (int i = 0; i < c_in; ++i) {
            const double* xi = x + static_cast<long>(i) * len;
            const double* wo = w + (static_cast<long>(o) * c_in + i) * kw;
            for (int k = 0; k < kw; ++k) {
                const double wk = wo[k];
                const int shift = k - pad;
                const int t0 = shift < 0 ? -shift : 0;
                const int t1 = shift > 0 ? len - shift : len;
                for (int t = t0; t < t1; ++t) yo[t] += wk * xi[t + shift];
            }
        }
    }
}

void conv1d_grad_x_acc(const double* gy, const double* w, double* gx,
                       int c_in, int c_out, int len, int kw) {
    const int pad = (kw - 1) / 2;
    for (int i = 0; i < c_in; ++i) {
        double* gxi = gx + static_cast<long>(i) * len;
        for (int o = 0; o < c_out; ++o) {
            const double* gyo = gy + static_cast<long>(o) * len;
            const double* wo = w + (static_cast<long>(o) * c_in + i) * kw;
            for (int k = 0; k < kw; ++k) {
                const double wk = wo[k];
                // y[o][t] consumed x[i][t + k - pad]; invert the shift.
                const int shift = pad - k;
                const int s0 = shift < 0 ? -shift : 0;
                const int s1 = shift > 0 ? len - shift : len;
                for (int s = s0; s < s1; ++s) gxi[s] += wk * gyo[s + shift];
            }
        }
    }
}

void conv1d_grad_w_acc(const double* gy, const double* x, double* gw,
                       int c_in, int c_out, int len, int kw) {
    const int pad = (kw - 1) / 2;
    for (int o = 0; o < c_out; ++o) {
        const double* gyo = gy + static_cast<long>(o) * len;
        for (int i = 0; i < c_in; ++i) {
            const double* xi = x + static_cast<long>(i) * len;
            double* gwo = gw + (static_cast<long>(o) * c_in + i) * kw;
            for (int k = 0; k < kw; ++k) {
                const int shift = k - pad;
                const int t0 = shift < 0 ? -shift : 0;
                const int t1 = shift > 0 ? len - shift : len;
                double s = 0.0;
                for (int t = t0; t < t1; ++t) s += gyo[t] * xi[t + shift];
                gwo[k] += s;
            }
        }
    }
}

void conv1d_grad_b_acc(const double* gy, double* gb, int c_out, int len) {
    for (int o = 0; o < c_out; ++o) {
        const double* gyo = gy + static_cast<long>(o) * len;
        double s = 0.0;
        for (int t = 0; t < len; ++t) s += gyo[t];
        gb[o] += s;
    }
}

}  // namespace serial

// Parallel variants split work across rows / output channels only; every
// output element is still produced by one thread with the same inner-loop
// order as the serial twin, so results do not depend on the thread count.

void matmul(const double* a, const double* b, double* y, int m, int k, int n) {
    const long work = static_cast<long>(m) * k * n;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
    for (int i = 0; i < m; ++i) {
        double* yi = y + static_cast<long>(i) * n;
        for (int j = 0; j < n; ++j) yi[j] = 0.0;
        const double* ai = a + static_cast<long>(i) * k;
        for (int t = 0; t < k; ++t) {
            const double ait = ai[t];
            const double* bt = b + static_cast<long>(t) * n;
            for (int j = 0; j < n; ++j) yi[j] += ait * bt[j];
        }
    }
}

void matmul_nt_acc(const double* a, const double* b, double* y, int m, int n, int p) {
    const long work = static_cast<long>(m) * n * p;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<long>(i) * p;
        double* yi = y + static_cast<long>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = b + static_cast<long>(j) * p;
            double s = 0.0;
            for (int t = 0; t < p; ++t) s += ai[t] * bj[t];
            yi[j] += s;
        }
    }
}

void matmul_tn_acc(const double* a, const double* b, double* y, int m, int n, int p) {
    const long work = static_cast<long>(m) * n * p;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
    for (int i = 0; i < m; ++i) {
        double* yi = y + static_cast<long>(i) * n;
        for (int t = 0; t < p; ++t) {
            const double ati = a[static_cast<long>(t) * m + i];
            const double* bt = b + static_cast<long>(t) * n;
            for (int j = 0; j < n; ++j) yi[j] += ati * bt[j];
        }
    }
}

void conv1d_fwd(const double* x, const double* w, const double* bias, double* y,
                int c_in, int c_out, int len, int kw) {
    const long work = static_cast<long>(c_out) * c_in * len * kw;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
    for (int o = 0; o < c_out; ++o) {
        double* yo = y + static_cast<long>(o) * len;
        const double b = bias ? bias[o] : 0.0;
        const int pad = (kw - 1) / 2;
        for (int t = 0; t < len; ++t) yo[t] = b;
        for (int i = 0; i < c_in; ++i) {
            const double* xi = x + static_cast<long>(i) * len;
            const double* wo = w + (static_cast<long>(o) * c_in + i) * kw;
            for (int k = 0; k < kw; ++k) {
                const double wk = wo[k];
                const int shift = k - pad;
                const int t0 = shift < 0 ? -shift : 0;
                const int t1 = shift > 0 ? len - shift : len;
                for (int t = t0; t < t1; ++t) yo[t] += wk * xi[t + shift];
            }
        }
    }
}

void conv1d_grad_x_acc(const double* gy, const double* w, double* gx,
                       int c_in, int c_out, int len, int kw) {
    const long work = static_cast<long>(c_out) * c_in * len * kw;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
    for (int i = 0; i < c_in; ++i) {
        double* gxi = gx + static_cast<long>(i) * len;
        const int pad = (kw - 1) / 2;
        for (int o = 0; o < c_out; ++o) {
            const double* gyo = gy + static_cast<long>(o) * len;
            const double* wo = w + (static_cast<long>(o) * c_in + i) * kw;
            for (int k = 0; k < kw; ++k) {
                const double wk = wo[k];
                const int shift = pad - k;
                const int s0 = shift < 0 ? -shift : 0;
                const int s1 = shift > 0 ? len - shift : len;
                for (int s = s0; s < s1; ++s) gxi[s] += wk * gyo[s + shift];
            }
        }
    }
}

void conv1d_grad_w_acc(const double* gy, const double* x, double* gw,
                       int c_in, int c_out, int len, int kw) {
    const long work = static_cast<long>(c_out) * c_in * len * kw;
#pragma omp parallel for schedule(static) if (work > kParallelCutoff)
    for (int o = 0; o < c_out; ++o) {
        const double* gyo = gy + static_cast<long>(o) * len;
        const int pad = (kw - 1) / 2;
        for (int i = 0; i < c_in; ++i) {
            const double* xi = x + static_cast<long>(i) * len;
            double* gwo = gw + (static_cast<long>(o) * c_in + i) * kw;
            for (int k = 0; k < kw; ++k) {
                const int shift = k - pad;
                const int t0 = shift < 0 ? -shift : 0;
                const int t1 = shift > 0 ? len - shift : len;
                double s = 0.0;
                for (int t = t0; t < t1; ++t) s += gyo[t] * xi[t + shift];
                gwo[k] += s;
            }
        }
    }
}

void conv1d_grad_b_acc(const double* gy, double* gb, int c_out, int len) {
    for (int o = 0; o < c_out; ++o) {
        const double* gyo = gy + static_cast<long>(o) * len;
        double s = 0.0;
        for (int t = 0; t < len; ++t) s += gyo[t];
        gb[o] += s;
    }
}

}  // namespace adapos::kernels
