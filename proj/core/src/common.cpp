#include "xdistill/common.hpp"

#include <sstream>
#include <stdexcept>

namespace xd {

void fail(const std::string& msg) { throw std::runtime_error(msg); }

size_t shape_numel(const Shape& shape) {
    size_t n = 1;
    for (int d : shape) {
        check(d >= 0, "negative dimension in shape " + shape_str(shape));
        n *= static_cast<size_t>(d);
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

}  // namespace xd
