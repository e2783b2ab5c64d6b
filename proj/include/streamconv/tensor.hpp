// Dense 4-D tensor (batch, channel, height, width), row-major with width
// fastest. Templated on the scalar so the finite-difference reference can run
// the same graph in double precision; production code uses Tensor = float.
#pragma once

#include <array>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "streamconv/mem.hpp"

namespace streamconv {

struct Shape4 {
    std::int64_t n = 0, c = 0, h = 0, w = 0;

    std::int64_t numel() const { return n * c * h * w; }
    bool operator==(const Shape4&) const = default;

    std::string str() const {
        std::ostringstream os;
        os << "[" << n << "," << c << "," << h << "," << w << "]";
        return os.str();
    }
};

template <class T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(Shape4 s) : shape_(s) {
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
            throw std::invalid_argument("tensor: negative extent " + s.str());
        data_.assign(static_cast<std::size_t>(s.numel()), T(0));
        mem::on_alloc(bytes());
    }

    TensorT(const TensorT& o) : shape_(o.shape_), data_(o.data_) {
        mem::on_alloc(bytes());
    }
    TensorT(TensorT&& o) noexcept
        : shape_(o.shape_), data_(std::move(o.data_)) {
        o.shape_ = {};
        o.data_.clear();
    }
    TensorT& operator=(const TensorT& o) {
        if (this != &o) {
            mem::on_free(bytes());
            shape_ = o.shape_;
            data_ = o.data_;
            mem::on_alloc(bytes());
        }
        return *this;
    }
    TensorT& operator=(TensorT&& o) noexcept {
        if (this != &o) {
            mem::on_free(bytes());
            shape_ = o.shape_;
            data_ = std::move(o.data_);
            o.shape_ = {};
            o.data_.clear();
        }
        return *this;
    }
    ~TensorT() { mem::on_free(bytes()); }

    const Shape4& shape() const { return shape_; }
    std::int64_t numel() const { return shape_.numel(); }
    std::size_t bytes() const { return data_.size() * sizeof(T); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
        return data_[index(n, c, y, x)];
    }
    T at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
        return data_[index(n, c, y, x)];
    }

    std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t y,
                       std::int64_t x) const {
        return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }

    void fill(T v) {
        for (auto& e : data_) e = v;
    }

    void release() {
        mem::on_free(bytes());
        shape_ = {};
        data_.clear();
        data_.shrink_to_fit();
    }

    template <class U>
    TensorT<U> cast() const {
        TensorT<U> out(shape_);
        for (std::int64_t i = 0; i < numel(); ++i)
            out.data()[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    Shape4 shape_{};
    std::vector<T> data_;
};

using Tensor = TensorT<float>;

template <class T>
inline void check_shape(const TensorT<T>& t, const Shape4& want,
                        const char* what) {
    if (!(t.shape() == want))
        throw std::invalid_argument(std::string(what) + ": expected shape " +
                                    want.str() + " but got " + t.shape().str());
}

}  // namespace streamconv
