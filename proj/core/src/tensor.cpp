#include "xdistill/tensor.hpp"

namespace xd {

static std::shared_ptr<TensorData> make_impl(Shape shape, bool zeroed) {
    auto impl = std::make_shared<TensorData>();
    if (zeroed)
        impl->data.resize(shape_numel(shape), real(0));
    else
        impl->data.resize(shape_numel(shape));
    impl->shape = std::move(shape);
    return impl;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    Tensor t;
    t.impl_ = make_impl(std::move(shape), true);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::uninit(Shape shape, bool requires_grad) {
    Tensor t;
    t.impl_ = make_impl(std::move(shape), false);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (real& v : t.impl_->data) v = value;
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<real> values, bool requires_grad) {
    check(shape_numel(shape) == values.size(),
          "value count " + std::to_string(values.size()) + " does not match shape " +
              shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<TensorData>();
    t.impl_->shape = std::move(shape);
    t.impl_->data.assign(values.begin(), values.end());
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(real value) { return from({1}, {value}); }

real* Tensor::grad() const {
    if (impl_->grad.empty()) impl_->grad.resize(impl_->data.size(), real(0));
    return impl_->grad.data();
}

const real* Tensor::grad_data() const {
    check(!impl_->grad.empty(), "tensor has no gradient buffer");
    return impl_->grad.data();
}

void Tensor::zero_grad() {
    for (real& g : impl_->grad) g = real(0);
}

real Tensor::value() const {
    check(numel() == 1, "value() requires a scalar tensor, got shape " + shape_str(shape()));
    return impl_->data[0];
}

static size_t flat_index(const Shape& shape, const std::vector<int>& index) {
    check(index.size() == shape.size(), "index rank mismatch");
    size_t flat = 0;
    for (size_t i = 0; i < shape.size(); ++i) {
        check(index[i] >= 0 && index[i] < shape[i], "index out of range");
        flat = flat * static_cast<size_t>(shape[i]) + static_cast<size_t>(index[i]);
    }
    return flat;
}

real& Tensor::at(const std::vector<int>& index) { return impl_->data[flat_index(shape(), index)]; }

real Tensor::at(const std::vector<int>& index) const {
    return impl_->data[flat_index(shape(), index)];
}

Tensor Tensor::clone() const {
    Tensor t = Tensor::uninit(shape(), requires_grad());
    t.impl_->data = impl_->data;
    return t;
}

}  // namespace xd
