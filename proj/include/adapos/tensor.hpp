#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "adapos/errors.hpp"

namespace adapos {

// Dense row-major tensor of 64-bit reals. The value buffer is shared between
// copies (copies are handles), shapes are fixed at construction. `node` ties
// the tensor to a Tape: -1 means untracked, and an untracked tensor never
// receives a gradient.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    const std::vector<int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return size_; }

    double* data() { return values_->data(); }
    const double* data() const { return values_->data(); }
    std::vector<double>& values() { return *values_; }
    const std::vector<double>& values() const { return *values_; }

    double& operator()(int64_t i) { return (*values_)[static_cast<size_t>(i)]; }
    double operator()(int64_t i) const { return (*values_)[static_cast<size_t>(i)]; }
    double& operator()(int64_t i, int64_t j) { return (*values_)[static_cast<size_t>(i * shape_[1] + j)]; }
    double operator()(int64_t i, int64_t j) const { return (*values_)[static_cast<size_t>(i * shape_[1] + j)]; }
    double& operator()(int64_t i, int64_t j, int64_t k) {
        return (*values_)[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    double operator()(int64_t i, int64_t j, int64_t k) const {
        return (*values_)[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }

    // Value of a single-element tensor.
    double item() const;

    // Deep copy with its own buffer (untracked).
    Tensor clone() const;

    std::string shape_str() const;

    int node = -1;

  private:
    std::vector<int64_t> shape_;
    int64_t size_ = 0;
    std::shared_ptr<std::vector<double>> values_ = std::make_shared<std::vector<double>>();
};

// Named, ordered parameter container. Paths are dot-separated; iteration is
// lexicographic. finalize() assigns every parameter a stable node id equal to
// its lexicographic index, after which any Tape built over the set treats
// those ids as leaves. The ids live in the stored tensors and are never
// rewritten, so independent tapes can coexist (e.g. one per Siamese pair).
class ParamSet {
  public:
    Tensor& add(const std::string& path, Tensor t);
    void finalize();
    bool finalized() const { return finalized_; }

    size_t size() const { return params_.size(); }
    bool contains(const std::string& path) const { return params_.count(path) > 0; }
    Tensor& at(const std::string& path);
    const Tensor& at(const std::string& path) const;

    // Index-aligned views, valid after finalize(). Index == node id.
    const std::vector<std::string>& paths() const { return paths_; }
    Tensor& by_index(size_t i) { return *by_index_[i]; }
    const Tensor& by_index(size_t i) const { return *by_index_[i]; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

  private:
    std::map<std::string, Tensor> params_;
    std::vector<std::string> paths_;
    std::vector<Tensor*> by_index_;
    bool finalized_ = false;
};

// Gradients aligned with ParamSet order (index == node id).
using GradVec = std::vector<std::vector<double>>;

// Reverse-mode tape. One forward evaluation records onto one tape; backward
// replays the records once in reverse creation order. Tapes constructed over
// a finalized ParamSet reserve node ids [0, params.size()) as leaves.
class Tape {
  public:
    // Lazily allocated per-node gradient store used during backward.
    class Flow {
      public:
        std::vector<double>& at(int node);
        std::vector<double>* peek(int node);

      private:
        friend class Tape;
        std::vector<std::vector<double>> g_;
        const std::vector<int64_t>* sizes_ = nullptr;
    };

    using BackFn = std::function<void(const std::vector<double>& gout, Flow& flow)>;

    explicit Tape(bool recording = true);
    explicit Tape(const ParamSet& params, bool recording = true);

    bool recording() const { return recording_; }
    size_t node_count() const { return sizes_.size(); }

    // Register one op result. Returns the new node id, or -1 when the tape is
    // not recording (callers then leave the output untracked).
    int emit(int64_t out_size, std::vector<int> inputs, BackFn fn);

    // d(loss)/d(param) for every parameter of the bound ParamSet; parameters
    // off the loss path get zero tensors. Replay is deterministic: calling
    // backward twice yields bitwise-identical results.
    GradVec backward_flat(const Tensor& loss) const;
    std::map<std::string, Tensor> backward(const Tensor& loss) const;

  private:
    struct Record {
        std::vector<int> inputs;
        BackFn fn;
    };

    bool recording_ = true;
    const ParamSet* params_ = nullptr;
    size_t leaf_count_ = 0;
    std::vector<int64_t> sizes_;
    std::vector<Record> records_;  // records_[i] produced node leaf_count_ + i
};

// ---------------------------------------------------------------------------
// Tape-recorded operations. Outputs are tracked iff the tape is recording and
// at least one input is tracked. Shape mismatches throw shape_error naming
// both shapes.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor conv1d_same(Tape& tape, const Tensor& x, const Tensor& kernels, const Tensor& bias);
Tensor softmax_lastdim(Tape& tape, const Tensor& x);
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& offset);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double c);
Tensor relu(Tape& tape, const Tensor& x);
Tensor sqrt_elem(Tape& tape, const Tensor& x);
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& b);  // x[..xd] + b[d]
Tensor sum_all(Tape& tape, const Tensor& x);                    // -> scalar
Tensor mean_rows(Tape& tape, const Tensor& x);                  // [N x d] -> [d]
Tensor mean_cols(Tape& tape, const Tensor& x);                  // [c x L] -> [c]
Tensor transpose(Tape& tape, const Tensor& x);                  // [m x n] -> [n x m]
Tensor reshape(Tape& tape, const Tensor& x, std::vector<int64_t> shape);
Tensor slice_cols(Tape& tape, const Tensor& x, int64_t c0, int64_t c1);
Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);
Tensor stack_rows(Tape& tape, std::span<const Tensor> rows);  // each [d] -> [N x d]
// Row gather with gradient scatter-accumulate into the looked-up rows.
Tensor embedding_rows(Tape& tape, const Tensor& table, std::span<const int> ids);

// ---------------------------------------------------------------------------
// Finite-difference oracle: central differences (f(p+h) - f(p-h)) / 2h
// compared elementwise against backward(). Independent of the gradient rules
// it checks (only forward evaluations on a non-recording tape).

struct FdEntry {
    std::string path;
    double max_rel_err = 0.0;
    bool pass = true;
};

struct FdReport {
    std::vector<FdEntry> per_param;
    bool all_pass = true;
    double worst = 0.0;
    std::string worst_path;
};

using ScalarFn = std::function<Tensor(Tape&, ParamSet&)>;

FdReport finite_difference_check(const ScalarFn& f, ParamSet& params, double h, double tol);

}  // namespace adapos
