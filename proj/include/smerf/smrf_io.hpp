#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "smerf/encoding.hpp"

namespace smerf::io {

// In-memory image of one "SMRF" tensor file:
//   magic "SMRF" | version u16 | dtype u8 (1 = f32, 2 = f64) | ndim u8 |
//   dims as u64 each | row-major payload.  All integers little-endian.
struct Tensor {
    uint8_t dtype = 2;
    std::vector<uint64_t> dims;
    std::vector<float> f32;    // populated when dtype == 1
    std::vector<double> f64;   // populated when dtype == 2

    uint64_t element_count() const;
};

constexpr uint16_t kSmrfVersion = 1;
constexpr uint8_t kDtypeF32 = 1;
constexpr uint8_t kDtypeF64 = 2;

std::vector<uint8_t> tensor_to_bytes(const Tensor& t);
// Throws StructuralError on bad magic/dtype/truncation; `origin` names the
// source in the message.
Tensor tensor_from_bytes(const uint8_t* data, size_t size, const std::string& origin);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

// Conversions to the shapes the rest of the toolkit uses.
Tensor from_matrix(const Eigen::MatrixXd& m);
Eigen::MatrixXd to_matrix(const Tensor& t);  // requires ndim == 2
Tensor from_sequence_tensor(const enc::PolylineSequenceTensor& t);
enc::PolylineSequenceTensor to_sequence_tensor(const Tensor& t);

// Named-tensor container: a JSON manifest (arbitrary config plus an ordered
// tensor index with byte offsets) followed by the tensors' SMRF blobs.
//   magic "SMCK" | version u16 | manifest length u64 | manifest JSON | blobs
struct Checkpoint {
    nlohmann::json config;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& at(const std::string& name) const;  // StructuralError if absent
    bool has(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Whole-file helpers. Writes go to <path>.tmp.<pid> then rename, so readers
// never observe a half-written file.
std::vector<uint8_t> read_file_bytes(const std::string& path);
void atomic_write_file(const std::string& path, const uint8_t* data, size_t size);
void atomic_write_file(const std::string& path, const std::string& text);

}  // namespace smerf::io
