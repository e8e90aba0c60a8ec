#pragma once

#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <vector>

namespace idedit {

// Vectorized reductions peel to the first SIMD-aligned element, so results
// would depend on where the heap put a buffer. Pinning the alignment keeps
// runs bit-identical.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

// Dense row-major double tensor used by the autograd engine. Images use NCHW.
struct Tensor {
    std::vector<int> shape;
    Buffer data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0)
        : shape(std::move(s)), data(count(shape), fill) {}
    Tensor(std::vector<int> s, Buffer d) : shape(std::move(s)), data(std::move(d)) {}
    Tensor(std::vector<int> s, const std::vector<double>& d)
        : shape(std::move(s)), data(d.begin(), d.end()) {}

    static std::size_t count(const std::vector<int>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1},
                               [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    }

    std::size_t size() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    bool empty() const { return data.empty(); }
    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }
};

}  // namespace idedit
