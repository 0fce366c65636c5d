#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "ebssc/tensor.hpp"

namespace ebssc::detail {

// Reverse-mode record of tensor operations. Deque storage keeps references stable while
// nodes are appended.
class Tape {
public:
    using Id = std::size_t;

    explicit Tape(bool record) : record_(record) {}

    bool recording() const noexcept { return record_; }

    Id add(FeatureTensor value, bool needs_grad = true) {
        values_.push_back(std::move(value));
        grads_.emplace_back();
        needs_grad_.push_back(needs_grad);
        return values_.size() - 1;
    }

    bool needs_grad(Id id) const { return needs_grad_[id]; }

    const FeatureTensor& value(Id id) const { return values_[id]; }

    bool has_grad(Id id) const { return !grads_[id].empty(); }

    FeatureTensor& grad(Id id) {
        if (grads_[id].empty()) grads_[id] = FeatureTensor(values_[id].shape());
        return grads_[id];
    }

    void on_backward(std::function<void()> fn) {
        if (record_) ops_.push_back(std::move(fn));
    }

    void backward() {
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

private:
    bool record_;
    std::deque<FeatureTensor> values_;
    std::deque<FeatureTensor> grads_;
    std::vector<bool> needs_grad_;
    std::vector<std::function<void()>> ops_;
};

} // namespace ebssc::detail
