#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <new>
#include <string>
#include <utility>
#include <vector>

namespace xd {

// XD_REAL_DOUBLE selects the f64 shadow build used for tight-tolerance
// gradient checks; the normal build is f32.
#ifdef XD_REAL_DOUBLE
using real = double;
#else
using real = float;
#endif

using Shape = std::vector<int>;

// Allocator whose value-less construct leaves elements uninitialized, so
// resize(n) on scratch/output buffers skips the zero-fill. Only for buffers
// whose every element is written before it is read.
template <class T>
struct RawAlloc : std::allocator<T> {
    template <class U>
    struct rebind {
        using other = RawAlloc<U>;
    };
    template <class U>
    void construct(U*) noexcept {}
    template <class U, class... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

using RawVec = std::vector<real, RawAlloc<real>>;

[[noreturn]] void fail(const std::string& msg);

inline void check(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

}  // namespace xd
