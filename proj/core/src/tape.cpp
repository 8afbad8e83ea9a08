#include "xdistill/tape.hpp"

#include <unordered_set>

namespace xd {

void Tape::record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward_fn) {
    if (!enabled_) return;
    if (!output.requires_grad()) return;
    entries_.push_back({std::move(inputs), std::move(output), std::move(backward_fn)});
    consumed_ = false;
}

void Tape::backward(const Tensor& loss) {
    check(loss.defined(), "backward: undefined loss tensor");
    check(loss.numel() == 1,
          "backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    check(!consumed_, "backward called twice without re-running the forward pass");
    consumed_ = true;

    loss.node()->grad.assign(1, real(1));

    std::unordered_set<TensorData*> reachable;
    reachable.insert(loss.node());
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (!reachable.count(it->output.node())) continue;
        for (const Tensor& in : it->inputs) {
            if (!in.requires_grad()) continue;
            in.grad();  // ensure the buffer exists even if this entry adds nothing
            reachable.insert(in.node());
        }
        it->backward_fn();
    }
}

void Tape::clear() {
    entries_.clear();
    consumed_ = false;
}

}  // namespace xd
