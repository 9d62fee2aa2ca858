#include "adapos/tensor.hpp"

#include <cmath>
#include <sstream>

namespace adapos {

static int64_t checked_size(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw shape_error("non-positive dimension in shape");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    size_ = checked_size(shape_);
    values_ = std::make_shared<std::vector<double>>(static_cast<size_t>(size_), 0.0);
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> values) : shape_(std::move(shape)) {
    size_ = checked_size(shape_);
    if (size_ != static_cast<int64_t>(values.size()))
        throw shape_error("value count " + std::to_string(values.size()) + " does not match shape " +
                          shape_str());
    values_ = std::make_shared<std::vector<double>>(std::move(values));
}

double Tensor::item() const {
    if (size_ != 1) throw shape_error("item() on non-scalar tensor " + shape_str());
    return (*values_)[0];
}

Tensor Tensor::clone() const {
    Tensor out;
    out.shape_ = shape_;
    out.size_ = size_;
    out.values_ = std::make_shared<std::vector<double>>(*values_);
    return out;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << ']';
    return os.str();
}

// --------------------------------------------------------------------------

Tensor& ParamSet::add(const std::string& path, Tensor t) {
    if (finalized_) throw usage_error("ParamSet::add after finalize: " + path);
    auto [it, inserted] = params_.emplace(path, std::move(t));
    if (!inserted) throw validation_error("duplicate parameter path: " + path);
    return it->second;
}

void ParamSet::finalize() {
    paths_.clear();
    by_index_.clear();
    int id = 0;
    for (auto& [path, tensor] : params_) {
        tensor.node = id++;
        paths_.push_back(path);
        by_index_.push_back(&tensor);
    }
    finalized_ = true;
}

Tensor& ParamSet::at(const std::string& path) {
    auto it = params_.find(path);
    if (it == params_.end()) throw usage_error("no parameter at path: " + path);
    return it->second;
}

const Tensor& ParamSet::at(const std::string& path) const {
    auto it = params_.find(path);
    if (it == params_.end()) throw usage_error("no parameter at path: " + path);
    return it->second;
}

// --------------------------------------------------------------------------

std::vector<double>& Tape::Flow::at(int node) {
    auto& slot = g_[static_cast<size_t>(node)];
    if (slot.empty()) slot.assign(static_cast<size_t>((*sizes_)[static_cast<size_t>(node)]), 0.0);
    return slot;
}

std::vector<double>* Tape::Flow::peek(int node) {
    auto& slot = g_[static_cast<size_t>(node)];
    return slot.empty() ? nullptr : &slot;
}

Tape::Tape(bool recording) : recording_(recording) {}

Tape::Tape(const ParamSet& params, bool recording) : recording_(recording), params_(&params) {
    if (!params.finalized()) throw usage_error("Tape over a ParamSet that is not finalized");
    leaf_count_ = params.size();
    sizes_.reserve(leaf_count_);
    for (size_t i = 0; i < leaf_count_; ++i) sizes_.push_back(params.by_index(i).size());
}

int Tape::emit(int64_t out_size, std::vector<int> inputs, BackFn fn) {
    if (!recording_) return -1;
    const int id = static_cast<int>(sizes_.size());
    sizes_.push_back(out_size);
    records_.push_back(Record{std::move(inputs), std::move(fn)});
    return id;
}

GradVec Tape::backward_flat(const Tensor& loss) const {
    if (loss.node < 0)
        throw usage_error("backward: loss is not tracked on this tape (did gradients get disabled?)");
    if (loss.size() != 1) throw usage_error("backward: loss must be a scalar, got " + loss.shape_str());

    Flow flow;
    flow.sizes_ = &sizes_;
    flow.g_.resize(sizes_.size());
    flow.at(loss.node)[0] = 1.0;

    // Reverse creation order; each record is visited exactly once.
    for (size_t r = records_.size(); r-- > 0;) {
        const int node = static_cast<int>(leaf_count_ + r);
        auto* gout = flow.peek(node);
        if (gout == nullptr) continue;  // node not on any path to the loss
        records_[r].fn(*gout, flow);
    }

    GradVec grads(leaf_count_);
    for (size_t i = 0; i < leaf_count_; ++i) {
        auto* g = flow.peek(static_cast<int>(i));
        if (g != nullptr)
            grads[i] = std::move(*g);
        else
            grads[i].assign(static_cast<size_t>(sizes_[i]), 0.0);
    }
    return grads;
}

std::map<std::string, Tensor> Tape::backward(const Tensor& loss) const {
    if (params_ == nullptr) throw usage_error("backward: tape was not built over a ParamSet");
    GradVec flat = backward_flat(loss);
    std::map<std::string, Tensor> out;
    for (size_t i = 0; i < flat.size(); ++i)
        out.emplace(params_->paths()[i], Tensor(params_->by_index(i).shape(), std::move(flat[i])));
    return out;
}

// --------------------------------------------------------------------------

FdReport finite_difference_check(const ScalarFn& f, ParamSet& params, double h, double tol) {
    if (!(h > 0.0)) throw usage_error("finite_difference_check: h must be positive");
    if (!params.finalized()) params.finalize();

    auto eval = [&]() {
        Tape tape(params, false);
        return f(tape, params).item();
    };

    // Two base evaluations guard against a non-deterministic objective, which
    // would silently corrupt the differences.
    const double base0 = eval();
    const double base1 = eval();
    if (!(base0 == base1))
        throw oracle_error("objective is not deterministic: " + std::to_string(base0) + " vs " +
                           std::to_string(base1));

    Tape tape(params, true);
    const Tensor loss = f(tape, params);
    const GradVec analytic = tape.backward_flat(loss);

    FdReport report;
    for (size_t p = 0; p < params.size(); ++p) {
        Tensor& t = params.by_index(p);
        FdEntry entry;
        entry.path = params.paths()[p];
        for (int64_t e = 0; e < t.size(); ++e) {
            double* slot = t.data() + e;
            const double saved = *slot;
            *slot = saved + h;
            const double fp = eval();
            *slot = saved - h;
            const double fm = eval();
            *slot = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double ad = analytic[p][static_cast<size_t>(e)];
            // Floored denominator: tiny gradients are dominated by roundoff in
            // the differences, not by the rules under test.
            const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), 0.1});
            if (rel > entry.max_rel_err) entry.max_rel_err = rel;
        }
        entry.pass = entry.max_rel_err <= tol;
        if (!entry.pass) report.all_pass = false;
        if (entry.max_rel_err > report.worst) {
            report.worst = entry.max_rel_err;
            report.worst_path = entry.path;
        }
        report.per_param.push_back(std::move(entry));
    }
    return report;
}

}  // namespace adapos
