#include "lungcrct/tensor.hpp"

#include <cmath>
#include <sstream>

#include "lungcrct/errors.hpp"

namespace lungcrct {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    for (auto e : shape_)
        if (e == 0) throw ShapeError("tensor: zero extent in shape " + shape_str(shape_));
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    for (auto e : shape_)
        if (e == 0) throw ShapeError("tensor: zero extent in shape " + shape_str(shape_));
    if (shape_numel(shape_) != data_.size())
        throw ShapeError("tensor: shape " + shape_str(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
}

double Tensor::item() const {
    if (data_.size() != 1)
        throw ShapeError("item: tensor of shape " + shape_str(shape_) + " is not a scalar");
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
        throw ShapeError("reshape: " + shape_str(shape_) + " -> " + shape_str(shape));
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace lungcrct
