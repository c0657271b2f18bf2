#include "ecgsal/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "ecgsal/error.hpp"

namespace ecgsal::ad {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : storage_(std::make_shared<Storage>()) {
    storage_->values.assign(numel(shape), fill);
    storage_->shape = std::move(shape);
    storage_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : storage_(std::make_shared<Storage>()) {
    if (values.size() != numel(shape)) {
        throw ShapeError("tensor values length " + std::to_string(values.size()) +
                         " does not match shape " + to_string(shape));
    }
    storage_->shape = std::move(shape);
    storage_->values = std::move(values);
    storage_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<double>{value}, requires_grad);
}

void Tensor::throw_undefined() { throw ContractError("use of an undefined tensor"); }

std::size_t Tensor::dim(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
    }
    return s[axis];
}


double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return storage().values[0];
}

bool Tensor::requires_grad() const { return defined() && storage_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { storage().requires_grad = flag; }

bool Tensor::has_grad() const { return defined() && !storage_->grad.empty(); }

std::span<double> Tensor::grad() const {
    auto& s = storage();
    if (s.grad.empty()) s.grad.assign(s.values.size(), 0.0);
    return s.grad;
}

void Tensor::zero_grad() {
    auto& s = storage();
    std::fill(s.grad.begin(), s.grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    return Tensor(shape(), std::vector<double>(values().begin(), values().end()));
}

Tape Tape::inference() {
    Tape t;
    t.recording_ = false;
    return t;
}

bool Tape::tracks(std::initializer_list<const Tensor*> inputs) const {
    if (!recording_) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor* t) { return t && t->requires_grad(); });
}

void Tape::record(std::function<void()> backward_rule) {
    if (!recording_) return;
    if (consumed_) throw ContractError("cannot record on a tape that already ran backward");
    nodes_.push_back(std::move(backward_rule));
}

void Tape::backward(Tensor& loss) {
    if (!recording_) throw ContractError("backward on an inference tape");
    if (consumed_) throw ContractError("backward already ran on this tape");
    if (!loss.defined() || loss.size() != 1) {
        throw ContractError("backward requires a scalar loss, got shape " +
                            (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) throw ContractError("loss is not reachable from any differentiable tensor");
    loss.grad()[0] += 1.0;
    consumed_ = true;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    nodes_.clear();
}

}  // namespace ecgsal::ad
