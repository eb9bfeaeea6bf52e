#pragma once

// Binary parameter checkpoints.
//
//   "VRPLAB-CKPT" '\n' u32 version
//   u64 metadata length, metadata (JSON text)
//   u64 parameter count, then per parameter:
//     u32 name length, name, u64 rows, u64 cols, rows*cols f64
//   u8 optimizer flag; when set, per parameter: u64 step, rows*cols f64 (first
//   moment), rows*cols f64 (second moment)
//
// Integers and floats are little-endian.

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrplab/tensor.hpp"

namespace vrplab {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[] = "VRPLAB-CKPT\n";

struct MomentState {
    std::uint64_t step = 0;
    ad::Matrix m, v;
};

struct CheckpointData {
    nlohmann::json metadata;
    std::vector<std::string> names;
    std::vector<ad::Matrix> values;
    std::vector<MomentState> moments;  // empty when no optimizer state was saved
};

namespace detail {

template <typename T>
void put_le(std::ostream& os, T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    U u = std::bit_cast<U>(v);
    char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
    os.write(bytes, sizeof(U));
}

template <typename T>
T get_le(std::istream& is) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
    unsigned char bytes[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw FormatError("checkpoint truncated");
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(bytes[i]) << (8 * i);
    return std::bit_cast<T>(u);
}

inline void put_matrix(std::ostream& os, const ad::Matrix& m) {
    for (ad::Index i = 0; i < m.size(); ++i) put_le<double>(os, m.data()[i]);
}

inline ad::Matrix get_matrix(std::istream& is, std::uint64_t rows, std::uint64_t cols) {
    ad::Matrix m(static_cast<ad::Index>(rows), static_cast<ad::Index>(cols));
    for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = get_le<double>(is);
    return m;
}

inline std::string get_string(std::istream& is, std::uint64_t n) {
    if (n > (1ull << 32)) throw FormatError("checkpoint string too long");
    std::string s(n, '\0');
    if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError("checkpoint truncated");
    return s;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const CheckpointData& data) {
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    detail::put_le<std::uint32_t>(os, kCheckpointVersion);
    const std::string meta = data.metadata.dump();
    detail::put_le<std::uint64_t>(os, meta.size());
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    detail::put_le<std::uint64_t>(os, data.values.size());
    for (std::size_t i = 0; i < data.values.size(); ++i) {
        detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(data.names[i].size()));
        os.write(data.names[i].data(), static_cast<std::streamsize>(data.names[i].size()));
        detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(data.values[i].rows()));
        detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(data.values[i].cols()));
        detail::put_matrix(os, data.values[i]);
    }
    detail::put_le<std::uint8_t>(os, data.moments.empty() ? 0 : 1);
    for (const auto& m : data.moments) {
        detail::put_le<std::uint64_t>(os, m.step);
        detail::put_matrix(os, m.m);
        detail::put_matrix(os, m.v);
    }
}

inline CheckpointData read_checkpoint(std::istream& is) {
    std::string magic(sizeof(kCheckpointMagic) - 1, '\0');
    if (!is.read(magic.data(), static_cast<std::streamsize>(magic.size())) || magic != kCheckpointMagic)
        throw FormatError("not a vrplab checkpoint");
    const auto version = detail::get_le<std::uint32_t>(is);
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    CheckpointData data;
    try {
        data.metadata = nlohmann::json::parse(detail::get_string(is, detail::get_le<std::uint64_t>(is)));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint metadata: ") + e.what());
    }
    const auto count = detail::get_le<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < count; ++i) {
        data.names.push_back(detail::get_string(is, detail::get_le<std::uint32_t>(is)));
        const auto rows = detail::get_le<std::uint64_t>(is);
        const auto cols = detail::get_le<std::uint64_t>(is);
        if (rows * cols > (1ull << 28)) throw FormatError("checkpoint tensor too large");
        data.values.push_back(detail::get_matrix(is, rows, cols));
    }
    if (detail::get_le<std::uint8_t>(is)) {
        for (std::uint64_t i = 0; i < count; ++i) {
            MomentState m;
            m.step = detail::get_le<std::uint64_t>(is);
            const auto r = static_cast<std::uint64_t>(data.values[i].rows());
            const auto c = static_cast<std::uint64_t>(data.values[i].cols());
            m.m = detail::get_matrix(is, r, c);
            m.v = detail::get_matrix(is, r, c);
            data.moments.push_back(std::move(m));
        }
    }
    return data;
}

inline void save_checkpoint(const std::string& path, const CheckpointData& data) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path);
    write_checkpoint(os, data);
    if (!os) throw Error("failed writing " + path);
}

inline CheckpointData load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot read " + path);
    return read_checkpoint(is);
}

/// Copies checkpoint values into parameters, matching by position, name and shape.
inline void restore_parameters(const CheckpointData& data, const std::vector<ad::Parameter*>& params) {
    if (data.values.size() != params.size()) throw FormatError("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (data.names[i] != params[i]->name) throw FormatError("checkpoint parameter name mismatch: " + data.names[i]);
        if (data.values[i].rows() != params[i]->value.rows() || data.values[i].cols() != params[i]->value.cols())
            throw FormatError("checkpoint shape mismatch for " + data.names[i]);
        params[i]->value = data.values[i];
        params[i]->zero_grad();
    }
}

}  // namespace vrplab
