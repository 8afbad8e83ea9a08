#pragma once

#include <functional>
#include <vector>

#include "xdistill/tensor.hpp"

namespace xd {

// Reverse-mode tape. Each entry owns a closure that pulls the gradient of its
// output and accumulates into the inputs. backward() replays entries in
// reverse, restricted to the subgraph that reaches the loss, so tensors not on
// that path keep their grad buffers absent.
class Tape {
public:
    void record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward_fn);

    // loss must be scalar; accumulates into grad buffers of every reachable
    // requires_grad tensor. A second call without new recorded work fails.
    void backward(const Tensor& loss);

    void clear();
    size_t size() const { return entries_.size(); }

    bool recording() const { return enabled_; }
    void set_recording(bool on) { enabled_ = on; }

private:
    struct Entry {
        std::vector<Tensor> inputs;
        Tensor output;
        std::function<void()> backward_fn;
    };
    std::vector<Entry> entries_;
    bool enabled_ = true;
    bool consumed_ = false;
};

// Restores the tape's recording flag on scope exit.
class NoGradGuard {
public:
    explicit NoGradGuard(Tape& tape) : tape_(tape), prev_(tape.recording()) {
        tape_.set_recording(false);
    }
    ~NoGradGuard() { tape_.set_recording(prev_); }

private:
    Tape& tape_;
    bool prev_;
};

}  // namespace xd
