#include "tritok/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "tritok/error.hpp"

namespace tritok {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <typename U>
void put(std::ofstream& os, U v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
bool get(std::ifstream& is, U& v) {
    return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof(U)));
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& records) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open '" + path.string() + "' for writing");
    os.write("TPLN", 4);
    put<std::uint32_t>(os, kCheckpointVersion);
    for (const auto& r : records) {
        if (shape_numel(r.shape) != r.values.size())
            throw shape_error("checkpoint record '" + r.name + "' has inconsistent extents " + shape_str(r.shape));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(r.name.size()));
        os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(r.shape.size()));
        for (auto e : r.shape) put<std::uint64_t>(os, e);
        os.write(reinterpret_cast<const char*>(r.values.data()),
                 static_cast<std::streamsize>(r.values.size() * sizeof(float)));
    }
    if (!os) throw io_error("write failed for '" + path.string() + "'");
}

std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open checkpoint '" + path.string() + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "TPLN", 4) != 0)
        throw io_error("'" + path.string() + "' is not a TPLN checkpoint");
    std::uint32_t version = 0;
    if (!get(is, version) || version != kCheckpointVersion)
        throw io_error("unsupported checkpoint version " + std::to_string(version));
    std::vector<NamedArray> out;
    std::uint32_t name_len = 0;
    while (get(is, name_len)) {
        NamedArray r;
        r.name.resize(name_len);
        std::uint32_t rank = 0;
        if (!is.read(r.name.data(), name_len) || !get(is, rank)) throw io_error("truncated checkpoint record");
        r.shape.resize(rank);
        for (auto& e : r.shape) {
            std::uint64_t v = 0;
            if (!get(is, v)) throw io_error("truncated extents in record '" + r.name + "'");
            e = static_cast<std::size_t>(v);
        }
        r.values.resize(shape_numel(r.shape));
        if (!is.read(reinterpret_cast<char*>(r.values.data()),
                     static_cast<std::streamsize>(r.values.size() * sizeof(float))))
            throw io_error("truncated payload in record '" + r.name + "'");
        out.push_back(std::move(r));
    }
    return out;
}

template <typename T>
NamedArray to_named_array(const std::string& name, const Tensor<T>& tensor) {
    NamedArray r{name, tensor.shape(), {}};
    r.values.reserve(tensor.size());
    for (T v : tensor.data()) r.values.push_back(static_cast<float>(v));
    return r;
}

template <typename T>
Tensor<T> to_tensor(const NamedArray& record) {
    return Tensor<T>::from(record.shape, std::vector<T>(record.values.begin(), record.values.end()));
}

template <typename T>
std::vector<NamedArray> export_params(const ParamStore<T>& store) {
    std::vector<NamedArray> out;
    for (const auto& [name, t] : store.entries()) out.push_back(to_named_array(name, t));
    return out;
}

const NamedArray* find_record(const std::vector<NamedArray>& records, const std::string& name) {
    for (const auto& r : records)
        if (r.name == name) return &r;
    return nullptr;
}

template <typename T>
void import_params(ParamStore<T>& store, const std::vector<NamedArray>& records, bool strict) {
    for (auto& [name, t] : store.entries()) {
        const NamedArray* r = find_record(records, name);
        if (!r) {
            if (strict) throw io_error("checkpoint is missing parameter '" + name + "'");
            continue;
        }
        if (r->shape != t.shape())
            throw shape_error("checkpoint parameter '" + name + "': shape mismatch " + shape_str(r->shape) +
                              " vs " + shape_str(t.shape()));
        auto dst = t.mutable_data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(r->values[i]);
    }
}

template NamedArray to_named_array(const std::string&, const Tensor<float>&);
template NamedArray to_named_array(const std::string&, const Tensor<double>&);
template Tensor<float> to_tensor(const NamedArray&);
template Tensor<double> to_tensor(const NamedArray&);
template std::vector<NamedArray> export_params(const ParamStore<float>&);
template std::vector<NamedArray> export_params(const ParamStore<double>&);
template void import_params(ParamStore<float>&, const std::vector<NamedArray>&, bool);
template void import_params(ParamStore<double>&, const std::vector<NamedArray>&, bool);

}  // namespace tritok
