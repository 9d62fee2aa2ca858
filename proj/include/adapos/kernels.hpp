#pragma once

namespace adapos::kernels {

// Dense numeric kernels behind the tensor ops. The default entry points are
// OpenMP-parallel over independent output elements, which keeps results
// bitwise identical for any thread count; kernels::serial holds plain-loop
// reference twins that the tests and the benchmark compare against.
//
// Convention: *_acc kernels accumulate (+=) into the output, forward kernels
// overwrite. Convolutions are "same"-padded cross-correlations with an odd
// kernel width; p = (kw - 1) / 2.

// y[m x n] = a[m x k] * b[k x n]
void matmul(const double* a, const double* b, double* y, int m, int k, int n);

// y[m x n] += a[m x p] * b[n x p]^T
void matmul_nt_acc(const double* a, const double* b, double* y, int m, int n, int p);

// y[m x n] += a[p x m]^T * b[p x n]
void matmul_tn_acc(const double* a, const double* b, double* y, int m, int n, int p);

// y[c_out x len], x[c_in x len], w[c_out x c_in x kw], bias[c_out]
void conv1d_fwd(const double* x, const double* w, const double* bias, double* y,
                int c_in, int c_out, int len, int kw);

void conv1d_grad_x_acc(const double* gy, const double* w, double* gx,
                       int c_in, int c_out, int len, int kw);

void conv1d_grad_w_acc(const double* gy, const double* x, double* gw,
                       int c_in, int c_out, int len, int kw);

void conv1d_grad_b_acc(const double* gy, double* gb, int c_out, int len);

namespace serial {

void matmul(const double* a, const double* b, double* y, int m, int k, int n);
void matmul_nt_acc(const double* a, const double* b, double* y, int m, int n, int p);
void matmul_tn_acc(const double* a, const double* b, double* y, int m, int n, int p);
void conv1d_fwd(const double* x, const double* w, const double* bias, double* y,
                int c_in, int c_out, int len, int kw);
void conv1d_grad_x_acc(const double* gy, const double* w, double* gx,
                       int c_in, int c_out, int len, int kw);
void conv1d_grad_w_acc(const double* gy, const double* x, double* gw,
                       int c_in, int c_out, int len, int kw);
void conv1d_grad_b_acc(const double* gy, double* gb, int c_out, int len);

}  // namespace serial

}  // namespace adapos::kernels
