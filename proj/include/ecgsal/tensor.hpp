#pragma once

// Dense double-precision tensors and the recording tape used for
// reverse-mode differentiation.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ecgsal::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Shared handle to a row-major array of doubles with an optional gradient
/// buffer. Copies of a Tensor alias the same storage.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return static_cast<bool>(storage_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const;

    std::span<double> values();
    std::span<const double> values() const;
    double& operator[](std::size_t i) { return values()[i]; }
    double operator[](std::size_t i) const { return values()[i]; }
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);

    bool has_grad() const;
    /// Gradient buffer, allocated as zeros on first access. Constness is
    /// shallow: every handle to the storage sees the same buffer.
    std::span<double> grad() const;
    void zero_grad();

    /// New tensor holding a copy of the values and no gradient.
    Tensor detach() const;
    bool aliases(const Tensor& other) const noexcept { return storage_ == other.storage_; }

private:
    struct Storage {
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;
        bool requires_grad = false;
    };
    Storage& storage() const {
        if (!storage_) throw_undefined();
        return *storage_;
    }
    [[noreturn]] static void throw_undefined();

    std::shared_ptr<Storage> storage_;
};

inline const Shape& Tensor::shape() const { return storage().shape; }
inline std::size_t Tensor::size() const { return storage().values.size(); }
inline std::span<double> Tensor::values() { return storage().values; }
inline std::span<const double> Tensor::values() const { return storage().values; }

/// Ordered list of backward rules. Operations append to it during the
/// forward pass; `backward` replays them in reverse exactly once.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    /// A tape that never records; for evaluation-only forward passes.
    static Tape inference();

    bool recording() const noexcept { return recording_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// True when an op over `inputs` must record a backward rule.
    bool tracks(std::initializer_list<const Tensor*> inputs) const;

    void record(std::function<void()> backward_rule);

    /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse.
    /// Gradients accumulate into existing buffers.
    void backward(Tensor& loss);

private:
    bool recording_ = true;
    bool consumed_ = false;
    std::vector<std::function<void()>> nodes_;
};

}  // namespace ecgsal::ad
