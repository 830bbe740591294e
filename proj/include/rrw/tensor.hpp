#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace rrw {

// 64-byte-aligned storage for every buffer that reaches a SIMD kernel. With a
// fixed alignment class the vectorized code paths (and therefore the floating
// point summation order) are identical on every run, which keeps training and
// inference bitwise reproducible.
template <class T, std::size_t Align = 64>
struct AlignedAllocator {
    using value_type = T;
    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U, Align>&) noexcept {}
    template <class U>
    struct rebind {
        using other = AlignedAllocator<U, Align>;
    };
    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
    }
    void deallocate(T* p, std::size_t) noexcept {
        ::operator delete(p, std::align_val_t(Align));
    }
    bool operator==(const AlignedAllocator&) const noexcept { return true; }
    bool operator!=(const AlignedAllocator&) const noexcept { return false; }
};

using FloatVec = std::vector<float, AlignedAllocator<float>>;

// Dense CHW float tensor. All network activations and image planes use this.
struct Tensor {
    int c = 0, h = 0, w = 0;
    FloatVec data;

    Tensor() = default;
    Tensor(int c_, int h_, int w_, float fill = 0.0f)
        : c(c_), h(h_), w(w_), data(static_cast<size_t>(c_) * h_ * w_, fill) {}

    size_t size() const { return data.size(); }
    int plane() const { return h * w; }

    float& at(int ci, int y, int x) { return data[(static_cast<size_t>(ci) * h + y) * w + x]; }
    float at(int ci, int y, int x) const { return data[(static_cast<size_t>(ci) * h + y) * w + x]; }

    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

    Tensor& operator+=(const Tensor& o) {
        for (size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        for (size_t i = 0; i < data.size(); ++i) data[i] -= o.data[i];
        return *this;
    }
    Tensor& operator*=(float s) {
        for (float& v : data) v *= s;
        return *this;
    }

    void fill(float v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
inline Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                    std::to_string(a.c) + "," + std::to_string(a.h) + "," +
                                    std::to_string(a.w) + ") vs (" + std::to_string(b.c) + "," +
                                    std::to_string(b.h) + "," + std::to_string(b.w) + ")");
}

inline Tensor clamp01(Tensor t) {
    for (float& v : t.data) v = std::clamp(v, 0.0f, 1.0f);
    return t;
}

// Concatenate along the channel axis; spatial sizes must agree.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.h != b.h || a.w != b.w)
        throw std::invalid_argument("concat_channels: spatial size mismatch");
    Tensor out(a.c + b.c, a.h, a.w);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
    return out;
}

inline Tensor slice_channels(const Tensor& t, int first, int count) {
    Tensor out(count, t.h, t.w);
    std::copy(t.data.begin() + static_cast<size_t>(first) * t.plane(),
              t.data.begin() + static_cast<size_t>(first + count) * t.plane(), out.data.begin());
    return out;
}

}  // namespace rrw
