#pragma once

#include <memory>
#include <vector>

#include "xdistill/common.hpp"

namespace xd {

struct TensorData {
    Shape shape;
    RawVec data;
    RawVec grad;  // empty means absent
    bool requires_grad = false;
};

// Value-semantics handle over shared storage. Copies alias the same buffer;
// forward ops never mutate their inputs' data. Constness of the handle does
// not extend to the gradient buffer: grad() is callable on a const handle so
// backward closures (which capture handles by value) can accumulate.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    // storage left uninitialized: for op outputs whose every element is
    // written before the tensor escapes
    static Tensor uninit(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, real value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<real> values, bool requires_grad = false);
    static Tensor scalar(real value);

    bool defined() const { return static_cast<bool>(impl_); }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int dim(int axis) const { return impl_->shape[static_cast<size_t>(axis)]; }
    size_t numel() const { return impl_->data.size(); }

    real* data() { return impl_->data.data(); }
    const real* data() const { return impl_->data.data(); }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool rg) {
        impl_->requires_grad = rg;
        return *this;
    }

    bool has_grad() const { return !impl_->grad.empty(); }
    real* grad() const;            // allocates zeros on first use
    const real* grad_data() const;  // fails if absent
    void zero_grad();
    void drop_grad() { impl_->grad.clear(); }

    real value() const;  // scalar fetch, fails unless numel()==1
    real& at(const std::vector<int>& index);
    real at(const std::vector<int>& index) const;

    Tensor clone() const;  // deep copy of data (grad not copied)

    TensorData* node() const { return impl_.get(); }

private:
    std::shared_ptr<TensorData> impl_;
};

}  // namespace xd
