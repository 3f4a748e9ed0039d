#pragma once

// Parameter checkpoint container.
//
// Layout (little-endian):
//   "TPLN"                       4 bytes magic
//   u32 format version           currently 1
//   repeated until EOF:
//     u32 name length, UTF-8 name bytes
//     u32 rank, rank x u64 extents
//     prod(extents) x f32 payload

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tritok/nn.hpp"
#include "tritok/tensor.hpp"

namespace tritok {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<float> values;
};

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& records);
std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path);

template <typename T>
NamedArray to_named_array(const std::string& name, const Tensor<T>& tensor);
template <typename T>
Tensor<T> to_tensor(const NamedArray& record);

template <typename T>
std::vector<NamedArray> export_params(const ParamStore<T>& store);

// Copies every record whose name exists in `store` (shapes must agree).
// With strict=true, every store entry must be present in `records`.
template <typename T>
void import_params(ParamStore<T>& store, const std::vector<NamedArray>& records, bool strict = true);

const NamedArray* find_record(const std::vector<NamedArray>& records, const std::string& name);

}  // namespace tritok
