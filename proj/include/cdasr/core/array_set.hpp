#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cdasr/core/aligned.hpp"
#include "cdasr/core/error.hpp"

namespace cdasr {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape)
{
    std::string out = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            out += ", ";
        out += std::to_string(shape[i]);
    }
    return out + ")";
}

template <class T>
struct NamedArray {
    std::string name;
    Shape shape;
    AlignedVector<T> data;

    std::size_t size() const noexcept { return data.size(); }
};

// Ordered collection of uniquely named, fixed-shape arrays. Insertion order
// is the canonical order for serialization and iteration.
template <class T>
class ArraySet {
public:
    using value_type = T;

    NamedArray<T>& add(std::string name, Shape shape, T fill = T(0))
    {
        if (index_.contains(name))
            throw invalid_input("ArraySet: duplicate entry '" + name + "'");
        const std::size_t n = shape_numel(shape);
        index_.emplace(name, entries_.size());
        entries_.push_back(NamedArray<T>{std::move(name), std::move(shape), AlignedVector<T>(n, fill)});
        return entries_.back();
    }

    bool contains(const std::string& name) const { return index_.contains(name); }

    NamedArray<T>& entry(const std::string& name) { return entries_[lookup(name)]; }
    const NamedArray<T>& entry(const std::string& name) const { return entries_[lookup(name)]; }

    std::span<T> operator[](const std::string& name) { return entry(name).data; }
    std::span<const T> operator[](const std::string& name) const { return entry(name).data; }

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t numel() const noexcept
    {
        std::size_t n = 0;
        for (const auto& e : entries_)
            n += e.data.size();
        return n;
    }

    auto begin() noexcept { return entries_.begin(); }
    auto end() noexcept { return entries_.end(); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }

    NamedArray<T>& at(std::size_t i) { return entries_.at(i); }
    const NamedArray<T>& at(std::size_t i) const { return entries_.at(i); }

    // Same names, same shapes, same order.
    bool same_layout(const ArraySet& other) const
    {
        if (entries_.size() != other.entries_.size())
            return false;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].name != other.entries_[i].name || entries_[i].shape != other.entries_[i].shape)
                return false;
        }
        return true;
    }

    ArraySet zeros_like() const
    {
        ArraySet out;
        for (const auto& e : entries_)
            out.add(e.name, e.shape);
        return out;
    }

    void fill(T v)
    {
        for (auto& e : entries_)
            std::fill(e.data.begin(), e.data.end(), v);
    }

    template <class U>
    ArraySet<U> cast() const
    {
        ArraySet<U> out;
        for (const auto& e : entries_) {
            auto& dst = out.add(e.name, e.shape);
            std::copy(e.data.begin(), e.data.end(), dst.data.begin());
        }
        return out;
    }

    bool all_finite() const { return first_non_finite().empty(); }

    // Name of the first entry containing NaN/Inf, or empty.
    std::string first_non_finite() const
    {
        for (const auto& e : entries_) {
            for (T v : e.data) {
                if (!std::isfinite(v))
                    return e.name;
            }
        }
        return {};
    }

    friend bool operator==(const ArraySet& a, const ArraySet& b)
    {
        if (!a.same_layout(b))
            return false;
        for (std::size_t i = 0; i < a.entries_.size(); ++i) {
            if (a.entries_[i].data != b.entries_[i].data)
                return false;
        }
        return true;
    }

private:
    std::size_t lookup(const std::string& name) const
    {
        auto it = index_.find(name);
        if (it == index_.end())
            throw invalid_input("ArraySet: no entry named '" + name + "'");
        return it->second;
    }

    std::vector<NamedArray<T>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Trainable parameters with one gradient slot per entry.
template <class T>
struct ParameterSet {
    ArraySet<T> values;
    ArraySet<T> grads;

    NamedArray<T>& add(std::string name, Shape shape)
    {
        grads.add(name, shape);
        return values.add(std::move(name), std::move(shape));
    }

    static ParameterSet from_values(ArraySet<T> values)
    {
        ParameterSet p;
        p.grads = values.zeros_like();
        p.values = std::move(values);
        return p;
    }

    void zero_grad() { grads.fill(T(0)); }
    std::size_t size() const noexcept { return values.size(); }
};

} // namespace cdasr
