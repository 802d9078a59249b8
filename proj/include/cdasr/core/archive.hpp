#pragma once

// Binary container of named arrays plus a JSON metadata record.
//
// Layout (all integers little-endian):
//   "CDASRARC" | u32 version | u64 meta_len | meta (UTF-8 JSON)
//   u32 count | count x { u32 name_len | name | u8 dtype | u32 ndim |
//                         u64 dims[ndim] | raw little-endian data }
//   "CDASREND"
// dtype: 1 = float32, 2 = float64.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdasr/core/array_set.hpp"
#include "cdasr/core/error.hpp"

namespace cdasr {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

class archive_error : public io_error {
public:
    using io_error::io_error;
};
class archive_version_error : public archive_error {
public:
    using archive_error::archive_error;
};
class archive_truncated_error : public archive_error {
public:
    using archive_error::archive_error;
};
class archive_format_error : public archive_error {
public:
    using archive_error::archive_error;
};

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

inline std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

template <class T>
constexpr DType dtype_of()
{
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

struct StoredArray {
    std::string name;
    DType dtype = DType::f32;
    Shape shape;
    std::vector<unsigned char> raw;

    std::size_t numel() const { return shape_numel(shape); }

    template <class T>
    std::vector<T> values() const
    {
        std::vector<T> out(numel());
        if (dtype == DType::f32) {
            std::vector<float> tmp(out.size());
            std::memcpy(tmp.data(), raw.data(), raw.size());
            std::copy(tmp.begin(), tmp.end(), out.begin());
        } else {
            std::vector<double> tmp(out.size());
            std::memcpy(tmp.data(), raw.data(), raw.size());
            std::copy(tmp.begin(), tmp.end(), out.begin());
        }
        return out;
    }

    template <class T>
    static StoredArray from(const NamedArray<T>& a)
    {
        StoredArray s;
        s.name = a.name;
        s.dtype = dtype_of<T>();
        s.shape = a.shape;
        s.raw.resize(a.data.size() * sizeof(T));
        std::memcpy(s.raw.data(), a.data.data(), s.raw.size());
        return s;
    }
};

struct Archive {
    static constexpr std::uint32_t version = 1;

    nlohmann::json meta = nlohmann::json::object();
    std::vector<StoredArray> arrays;

    const StoredArray* find(const std::string& name) const
    {
        for (const auto& a : arrays) {
            if (a.name == name)
                return &a;
        }
        return nullptr;
    }

    template <class T>
    void add_all(const ArraySet<T>& set, const std::string& prefix = "")
    {
        for (const auto& e : set) {
            auto s = StoredArray::from(e);
            s.name = prefix + s.name;
            arrays.push_back(std::move(s));
        }
    }

    // Collects every array whose name starts with prefix (prefix stripped),
    // in stored order.
    template <class T>
    ArraySet<T> extract(const std::string& prefix = "") const
    {
        ArraySet<T> out;
        for (const auto& a : arrays) {
            if (a.name.compare(0, prefix.size(), prefix) != 0)
                continue;
            auto& dst = out.add(a.name.substr(prefix.size()), a.shape);
            const auto v = a.values<T>();
            dst.data.assign(v.begin(), v.end());
        }
        return out;
    }
};

namespace detail {

inline void put_bytes(std::vector<unsigned char>& buf, const void* p, std::size_t n)
{
    const auto* b = static_cast<const unsigned char*>(p);
    buf.insert(buf.end(), b, b + n);
}

template <class U>
void put(std::vector<unsigned char>& buf, U v)
{
    put_bytes(buf, &v, sizeof(U));
}

class Reader {
public:
    explicit Reader(const std::vector<unsigned char>& buf) : buf_(buf) {}

    void read(void* dst, std::size_t n)
    {
        if (n > buf_.size() - pos_)
            throw archive_truncated_error("archive truncated at byte " + std::to_string(pos_));
        std::memcpy(dst, buf_.data() + pos_, n);
        pos_ += n;
    }

    template <class U>
    U get()
    {
        U v;
        read(&v, sizeof(U));
        return v;
    }

    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    const std::vector<unsigned char>& buf_;
    std::size_t pos_ = 0;
};

inline constexpr char magic_head[8] = {'C', 'D', 'A', 'S', 'R', 'A', 'R', 'C'};
inline constexpr char magic_tail[8] = {'C', 'D', 'A', 'S', 'R', 'E', 'N', 'D'};

} // namespace detail

inline std::vector<unsigned char> serialize_archive(const Archive& ar)
{
    std::vector<unsigned char> buf;
    detail::put_bytes(buf, detail::magic_head, 8);
    detail::put<std::uint32_t>(buf, Archive::version);
    const std::string meta = ar.meta.dump();
    detail::put<std::uint64_t>(buf, meta.size());
    detail::put_bytes(buf, meta.data(), meta.size());
    detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(ar.arrays.size()));
    for (const auto& a : ar.arrays) {
        if (a.raw.size() != a.numel() * dtype_size(a.dtype))
            throw invalid_input("archive: array '" + a.name + "' payload does not match its shape");
        detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(a.name.size()));
        detail::put_bytes(buf, a.name.data(), a.name.size());
        detail::put<std::uint8_t>(buf, static_cast<std::uint8_t>(a.dtype));
        detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(a.shape.size()));
        for (auto d : a.shape)
            detail::put<std::uint64_t>(buf, d);
        detail::put_bytes(buf, a.raw.data(), a.raw.size());
    }
    detail::put_bytes(buf, detail::magic_tail, 8);
    return buf;
}

inline Archive parse_archive(const std::vector<unsigned char>& buf)
{
    detail::Reader in(buf);
    char magic[8];
    in.read(magic, 8);
    if (std::memcmp(magic, detail::magic_head, 8) != 0)
        throw archive_format_error("not a cdasr archive (bad magic)");
    const auto ver = in.get<std::uint32_t>();
    if (ver != Archive::version)
        throw archive_version_error("unsupported archive version " + std::to_string(ver) + " (expected "
                                    + std::to_string(Archive::version) + ")");
    Archive ar;
    const auto meta_len = in.get<std::uint64_t>();
    if (meta_len > in.remaining())
        throw archive_truncated_error("archive truncated inside metadata");
    std::string meta(meta_len, '\0');
    in.read(meta.data(), meta_len);
    try {
        ar.meta = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw archive_format_error(std::string("archive metadata is not valid JSON: ") + e.what());
    }
    const auto count = in.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        StoredArray a;
        const auto name_len = in.get<std::uint32_t>();
        if (name_len > in.remaining())
            throw archive_truncated_error("archive truncated inside array name");
        a.name.resize(name_len);
        in.read(a.name.data(), name_len);
        const auto dt = in.get<std::uint8_t>();
        if (dt != 1 && dt != 2)
            throw archive_format_error("array '" + a.name + "' has unknown dtype " + std::to_string(dt));
        a.dtype = static_cast<DType>(dt);
        const auto ndim = in.get<std::uint32_t>();
        if (ndim > 8)
            throw archive_format_error("array '" + a.name + "' has implausible rank");
        for (std::uint32_t d = 0; d < ndim; ++d)
            a.shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>()));
        const std::size_t bytes = a.numel() * dtype_size(a.dtype);
        if (bytes > in.remaining())
            throw archive_truncated_error("archive truncated inside array '" + a.name + "'");
        a.raw.resize(bytes);
        in.read(a.raw.data(), bytes);
        ar.arrays.push_back(std::move(a));
    }
    in.read(magic, 8);
    if (std::memcmp(magic, detail::magic_tail, 8) != 0)
        throw archive_format_error("archive end marker missing");
    return ar;
}

inline void write_archive(const std::filesystem::path& path, const Archive& ar)
{
    const auto bytes = serialize_archive(ar);
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    // Write to a sibling temp file first so readers never observe a partial archive.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw io_error("cannot open '" + tmp.string() + "' for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw io_error("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline Archive read_archive(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw io_error("cannot open archive '" + path.string() + "'");
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_archive(buf);
}

} // namespace cdasr
