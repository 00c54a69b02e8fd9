#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mugat/model/model.hpp"

namespace mugat::model {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[] = "MUGATCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

template <typename T>
constexpr DType dtype_of()
{
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

/// A stored tensor. Values are held as double, which represents every f32
/// exactly, so a file round-trips to the same bytes.
struct NamedTensor {
    std::string name;
    DType dtype = DType::f64;
    Shape shape;
    std::vector<double> values;

    template <typename T>
    static NamedTensor from(const std::string& name, const Tensor<T>& t)
    {
        return {name, dtype_of<T>(), t.shape(), std::vector<double>(t.values().begin(), t.values().end())};
    }

    template <typename T>
    Tensor<T> to_tensor() const
    {
        Storage<T> data(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) data[i] = static_cast<T>(values[i]);
        return Tensor<T>(shape, std::move(data));
    }
};

namespace detail {

inline void put_u8(std::string& out, std::uint8_t v) { out += static_cast<char>(v); }

template <typename U>
void put_le(std::string& out, U v)
{
    for (std::size_t i = 0; i < sizeof(U); ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <typename U>
    U le()
    {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }

    std::string take(std::size_t n)
    {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const
    {
        if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Magic, version, tensor count, then per tensor (name length, name, dtype,
/// rank, dims), then all values little-endian in the same order.
inline std::string encode_checkpoint(const std::vector<NamedTensor>& tensors)
{
    std::string out(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    detail::put_le<std::uint32_t>(out, kCheckpointVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        if (shape_numel(t.shape) != t.values.size()) throw CheckpointError("tensor " + t.name + " has inconsistent shape");
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        detail::put_u8(out, static_cast<std::uint8_t>(t.dtype));
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (const auto dim : t.shape) detail::put_le<std::uint64_t>(out, dim);
    }
    for (const auto& t : tensors) {
        for (const double v : t.values) {
            if (t.dtype == DType::f32) detail::put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            else detail::put_le(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    return out;
}

inline std::vector<NamedTensor> decode_checkpoint(const std::string& bytes)
{
    detail::Reader in(bytes);
    if (in.take(sizeof(kCheckpointMagic) - 1) != std::string(kCheckpointMagic)) throw CheckpointError("not a checkpoint (bad magic)");
    const auto version = in.le<std::uint32_t>();
    if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const auto count = in.le<std::uint32_t>();
    std::vector<NamedTensor> tensors(count);
    std::set<std::string> names;
    for (auto& t : tensors) {
        t.name = in.take(in.le<std::uint32_t>());
        if (!names.insert(t.name).second) throw CheckpointError("duplicate tensor " + t.name);
        const auto tag = in.le<std::uint8_t>();
        if (tag != 1 && tag != 2) throw CheckpointError("tensor " + t.name + " has unknown dtype tag " + std::to_string(tag));
        t.dtype = static_cast<DType>(tag);
        const auto rank = in.le<std::uint32_t>();
        if (rank == 0 || rank > 8) throw CheckpointError("tensor " + t.name + " has rank " + std::to_string(rank));
        for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(static_cast<std::size_t>(in.le<std::uint64_t>()));
    }
    for (auto& t : tensors) {
        t.values.resize(shape_numel(t.shape));
        for (auto& v : t.values) {
            v = t.dtype == DType::f32 ? static_cast<double>(std::bit_cast<float>(in.le<std::uint32_t>()))
                                      : std::bit_cast<double>(in.le<std::uint64_t>());
        }
    }
    if (!in.done()) throw CheckpointError("trailing bytes after checkpoint payload");
    return tensors;
}

/// Tensors plus the JSON sidecar (<path>.json) describing how they were made.
struct Checkpoint {
    std::vector<NamedTensor> tensors;
    nlohmann::json meta;

    const NamedTensor* find(const std::string& name) const
    {
        for (const auto& t : tensors) {
            if (t.name == name) return &t;
        }
        return nullptr;
    }
};

inline std::filesystem::path sidecar_path(const std::filesystem::path& ckpt) { return ckpt.string() + ".json"; }

inline void write_bytes_atomic(const std::filesystem::path& path, const std::string& bytes)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt)
{
    write_bytes_atomic(path, encode_checkpoint(ckpt.tensors));
    write_bytes_atomic(sidecar_path(path), ckpt.meta.dump(2) + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    Checkpoint c;
    c.tensors = decode_checkpoint(read_bytes(path));
    try {
        c.meta = nlohmann::json::parse(read_bytes(sidecar_path(path)));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("bad sidecar " + sidecar_path(path).string() + ": " + e.what());
    }
    return c;
}

template <typename T>
std::vector<NamedTensor> model_tensors(const MugatModel<T>& m)
{
    std::vector<NamedTensor> out;
    for (const auto& p : m.params().all()) out.push_back(NamedTensor::from(p.name, p.value));
    return out;
}

template <typename T>
nlohmann::json model_meta(const MugatModel<T>& m)
{
    return nlohmann::json{{"model", m.config()}, {"init_seed", m.init_seed()}};
}

/// Copies every parameter of `groups` from `ckpt` into `m`. Missing tensors
/// and shape disagreements are errors.
template <typename T>
void load_parameters(MugatModel<T>& m, const Checkpoint& ckpt, const std::set<ParamGroup>& groups)
{
    auto& store = m.params_mut();
    for (auto& p : store.all()) {
        if (!groups.count(p.group)) continue;
        const NamedTensor* t = ckpt.find(p.name);
        if (!t) throw ConfigMismatch("checkpoint lacks parameter " + p.name);
        if (t->shape != p.value.shape()) {
            throw ConfigMismatch("parameter " + p.name + " is " + shape_string(t->shape) + " in the checkpoint but " +
                                 shape_string(p.value.shape()) + " in the model");
        }
        p.value = t->template to_tensor<T>();
    }
}

template <typename T>
ModelConfig checkpoint_config(const Checkpoint& ckpt)
{
    try {
        return ckpt.meta.at("model").get<ModelConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("sidecar lacks a model config: ") + e.what());
    }
}

/// Rebuilds the model a checkpoint was saved from.
template <typename T>
MugatModel<T> model_from_checkpoint(const Checkpoint& ckpt)
{
    const ModelConfig cfg = checkpoint_config<T>(ckpt);
    const auto seed = ckpt.meta.value("init_seed", std::uint64_t{0});
    MugatModel<T> m(cfg, seed);
    load_parameters(m, ckpt, {ParamGroup::encoder, ParamGroup::adapter, ParamGroup::decoder});
    return m;
}

}  // namespace mugat::model
