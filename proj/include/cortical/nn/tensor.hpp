#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace cortical::nn {

/// Per-example activation shape, height x width x channels (NHWC without N).
/// Dense activations use 1 x 1 x features.
struct Shape {
    std::size_t h = 1;
    std::size_t w = 1;
    std::size_t c = 1;

    std::size_t size() const noexcept { return h * w * c; }
    bool operator==(const Shape&) const = default;
    std::string str() const {
        return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
    }
};

/// Batch of activations, n examples of `shape`, NHWC row-major.
template <typename T>
struct Tensor {
    std::size_t n = 0;
    Shape shape{};
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::size_t batch, Shape s, T fill = T{}) : n(batch), shape(s), data(batch * s.size(), fill) {}

    std::size_t per_example() const noexcept { return shape.size(); }
    T* example(std::size_t i) noexcept { return data.data() + i * shape.size(); }
    const T* example(std::size_t i) const noexcept { return data.data() + i * shape.size(); }

    void resize(std::size_t batch, Shape s) {
        n = batch;
        shape = s;
        data.assign(batch * s.size(), T{});
    }
};

enum class Mode { train, eval };

}  // namespace cortical::nn
