#include "ttyard/tensor.hpp"

namespace ttyard {

std::string shape_to_string(const Shape& dims) {
    std::string out = "(";
    for (std::size_t k = 0; k < dims.size(); ++k) {
        if (k) out += ", ";
        out += std::to_string(dims[k]);
    }
    return out + ")";
}

}  // namespace ttyard
