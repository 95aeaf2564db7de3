#include "smerf/smrf_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <unistd.h>

#include "smerf/errors.hpp"

namespace smerf::io {

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

class ByteReader {
public:
    ByteReader(const uint8_t* data, size_t size, const std::string& origin)
        : data_(data), size_(size), origin_(origin) {}

    uint8_t u8() { return data_[need(1)]; }
    uint16_t u16() {
        size_t p = need(2);
        return static_cast<uint16_t>(data_[p]) | static_cast<uint16_t>(data_[p + 1]) << 8;
    }
    uint64_t u64() {
        size_t p = need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[p + i]) << (8 * i);
        return v;
    }
    const uint8_t* raw(size_t n) { return data_ + need(n); }
    size_t remaining() const { return size_ - pos_; }

private:
    size_t need(size_t n) {
        if (size_ - pos_ < n)
            throw StructuralError(origin_ + ": truncated (" + std::to_string(size_) + " bytes)");
        size_t p = pos_;
        pos_ += n;
        return p;
    }

    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
    std::string origin_;
};

}  // namespace

uint64_t Tensor::element_count() const {
    uint64_t n = 1;
    for (uint64_t d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

std::vector<uint8_t> tensor_to_bytes(const Tensor& t) {
    if (t.dtype != kDtypeF32 && t.dtype != kDtypeF64)
        throw std::invalid_argument("tensor_to_bytes: unknown dtype");
    const uint64_t n = t.element_count();
    const size_t have = t.dtype == kDtypeF32 ? t.f32.size() : t.f64.size();
    if (have != n) throw std::invalid_argument("tensor_to_bytes: payload size != product of dims");

    std::vector<uint8_t> out;
    out.reserve(16 + t.dims.size() * 8 + n * (t.dtype == kDtypeF32 ? 4 : 8));
    out.insert(out.end(), {'S', 'M', 'R', 'F'});
    put_u16(out, kSmrfVersion);
    out.push_back(t.dtype);
    out.push_back(static_cast<uint8_t>(t.dims.size()));
    for (uint64_t d : t.dims) put_u64(out, d);

    // IEEE-754 little-endian payload, written bytewise for portability.
    if (t.dtype == kDtypeF32) {
        for (float v : t.f32) {
            uint32_t bits;
            std::memcpy(&bits, &v, 4);
            for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((bits >> (8 * i)) & 0xff));
        }
    } else {
        for (double v : t.f64) {
            uint64_t bits;
            std::memcpy(&bits, &v, 8);
            put_u64(out, bits);
        }
    }
    return out;
}

Tensor tensor_from_bytes(const uint8_t* data, size_t size, const std::string& origin) {
    ByteReader r(data, size, origin);
    const uint8_t* magic = r.raw(4);
    if (std::memcmp(magic, "SMRF", 4) != 0)
        throw StructuralError(origin + ": not an SMRF tensor (bad magic)");
    const uint16_t version = r.u16();
    if (version != kSmrfVersion)
        throw StructuralError(origin + ": unsupported SMRF version " + std::to_string(version));

    Tensor t;
    t.dtype = r.u8();
    if (t.dtype != kDtypeF32 && t.dtype != kDtypeF64)
        throw StructuralError(origin + ": unknown dtype code " + std::to_string(t.dtype));
    const uint8_t ndim = r.u8();
    t.dims.resize(ndim);
    for (auto& d : t.dims) d = r.u64();

    const uint64_t n = t.element_count();
    if (t.dtype == kDtypeF32) {
        t.f32.resize(n);
        for (uint64_t i = 0; i < n; ++i) {
            const uint8_t* p = r.raw(4);
            uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= static_cast<uint32_t>(p[b]) << (8 * b);
            std::memcpy(&t.f32[i], &bits, 4);
        }
    } else {
        t.f64.resize(n);
        for (uint64_t i = 0; i < n; ++i) {
            const uint8_t* p = r.raw(8);
            uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) bits |= static_cast<uint64_t>(p[b]) << (8 * b);
            std::memcpy(&t.f64[i], &bits, 8);
        }
    }
    return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
    auto bytes = tensor_to_bytes(t);
    atomic_write_file(path, bytes.data(), bytes.size());
}

Tensor load_tensor(const std::string& path) {
    auto bytes = read_file_bytes(path);
    return tensor_from_bytes(bytes.data(), bytes.size(), path);
}

Tensor from_matrix(const Eigen::MatrixXd& m) {
    Tensor t;
    t.dtype = kDtypeF64;
    t.dims = {static_cast<uint64_t>(m.rows()), static_cast<uint64_t>(m.cols())};
    t.f64.reserve(m.size());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) t.f64.push_back(m(r, c));
    return t;
}

Eigen::MatrixXd to_matrix(const Tensor& t) {
    if (t.dims.size() != 2) throw StructuralError("to_matrix: tensor is not 2-D");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
    size_t i = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c, ++i)
            m(r, c) = t.dtype == kDtypeF32 ? static_cast<double>(t.f32[i]) : t.f64[i];
    return m;
}

Tensor from_sequence_tensor(const enc::PolylineSequenceTensor& s) {
    Tensor t;
    t.dtype = kDtypeF32;
    t.dims = {static_cast<uint64_t>(s.rows), static_cast<uint64_t>(s.cols)};
    t.f32 = s.data;
    return t;
}

enc::PolylineSequenceTensor to_sequence_tensor(const Tensor& t) {
    if (t.dims.size() != 2) throw StructuralError("to_sequence_tensor: tensor is not 2-D");
    enc::PolylineSequenceTensor s;
    s.rows = static_cast<int>(t.dims[0]);
    s.cols = static_cast<int>(t.dims[1]);
    if (t.dtype == kDtypeF32) {
        s.data = t.f32;
    } else {
        s.data.reserve(t.f64.size());
        for (double v : t.f64) s.data.push_back(static_cast<float>(v));
    }
    s.row_polyline_ids.resize(s.rows);
    for (int r = 0; r < s.rows; ++r) s.row_polyline_ids[r] = r;
    return s;
}

const Tensor& Checkpoint::at(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw StructuralError("checkpoint has no tensor named '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::vector<std::vector<uint8_t>> blobs;
    blobs.reserve(ckpt.tensors.size());
    nlohmann::json index = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& [name, tensor] : ckpt.tensors) {
        blobs.push_back(tensor_to_bytes(tensor));
        index.push_back({{"name", name}, {"offset", offset}, {"size", blobs.back().size()}});
        offset += blobs.back().size();
    }
    nlohmann::json manifest = {{"format", "smerf-checkpoint"},
                               {"version", 1},
                               {"config", ckpt.config},
                               {"tensors", index}};
    const std::string mtext = manifest.dump();

    std::vector<uint8_t> out;
    out.insert(out.end(), {'S', 'M', 'C', 'K'});
    put_u16(out, 1);
    put_u64(out, mtext.size());
    out.insert(out.end(), mtext.begin(), mtext.end());
    for (const auto& b : blobs) out.insert(out.end(), b.begin(), b.end());
    atomic_write_file(path, out.data(), out.size());
}

Checkpoint load_checkpoint(const std::string& path) {
    auto bytes = read_file_bytes(path);
    ByteReader r(bytes.data(), bytes.size(), path);
    if (std::memcmp(r.raw(4), "SMCK", 4) != 0)
        throw StructuralError(path + ": not a checkpoint (bad magic)");
    const uint16_t version = r.u16();
    if (version != 1)
        throw StructuralError(path + ": unsupported checkpoint version " + std::to_string(version));
    const uint64_t mlen = r.u64();
    const uint8_t* mdata = r.raw(mlen);

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mdata, mdata + mlen);
    } catch (const nlohmann::json::parse_error& e) {
        throw StructuralError(path + ": bad manifest: " + e.what());
    }

    Checkpoint ckpt;
    ckpt.config = manifest.value("config", nlohmann::json::object());
    const uint8_t* blob_base = bytes.data() + (bytes.size() - r.remaining());
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name");
        const uint64_t offset = entry.at("offset");
        const uint64_t size = entry.at("size");
        if (offset + size > r.remaining())
            throw StructuralError(path + ": tensor '" + name + "' extends past end of file");
        ckpt.tensors.emplace_back(
            name, tensor_from_bytes(blob_base + offset, size, path + ":" + name));
    }
    return ckpt;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path);
    return bytes;
}

void atomic_write_file(const std::string& path, const uint8_t* data, size_t size) {
    const std::string tmp = path + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp);
        out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
        if (!out) {
            std::remove(tmp.c_str());
            throw IoError("write failed: " + tmp);
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw IoError("rename failed: " + path);
    }
}

void atomic_write_file(const std::string& path, const std::string& text) {
    atomic_write_file(path, reinterpret_cast<const uint8_t*>(text.data()), text.size());
}

}  // namespace smerf::io
