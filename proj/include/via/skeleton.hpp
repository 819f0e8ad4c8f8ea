#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "via/tensor.hpp"

namespace via {

// On-disk sequence format ("VIAS"):
//   bytes 0..3   magic "VIAS"
//   u32 LE       version (1)
//   u32 LE       T, V, C
//   payload      T*V*C little-endian 32-bit floats, row-major [T,V,C]
inline constexpr char kViasMagic[4] = {'V', 'I', 'A', 'S'};
inline constexpr std::uint32_t kViasVersion = 1;

enum class IoCode {
    bad_magic,
    bad_version,
    truncated,
    dim_overflow,
    io_failure,
};

class IoError : public std::runtime_error {
  public:
    IoError(IoCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    IoCode code() const { return code_; }

  private:
    IoCode code_;
};

struct SkeletonSequence {
    Tensor<float> frames;  // [T, V, C], coordinates in [-1, 1]
    int motion_id = -1;    // optional labels, -1 when absent
    int character_id = -1;

    int T() const { return frames.shape[0]; }
    int V() const { return frames.shape[1]; }
    int C() const { return frames.shape[2]; }
};

inline void validate_sequence_dims(std::uint32_t T, std::uint32_t V, std::uint32_t C) {
    constexpr std::uint64_t kMaxElements = 1ULL << 28;
    if (T < 8 || V < 2 || (C != 2 && C != 3))
        throw IoError(IoCode::dim_overflow, "invalid sequence dims T=" + std::to_string(T) + " V=" +
                                                std::to_string(V) + " C=" + std::to_string(C) +
                                                " (need T>=8, V>=2, C in {2,3})");
    if (static_cast<std::uint64_t>(T) * V * C > kMaxElements)
        throw IoError(IoCode::dim_overflow, "sequence dims overflow sanity cap");
}

inline SkeletonSequence make_sequence(Tensor<float> frames, int motion_id = -1, int character_id = -1) {
    if (frames.rank() != 3)
        throw std::invalid_argument("skeleton sequence must be [T,V,C], got " + shape_str(frames.shape));
    validate_sequence_dims(static_cast<std::uint32_t>(frames.shape[0]),
                           static_cast<std::uint32_t>(frames.shape[1]),
                           static_cast<std::uint32_t>(frames.shape[2]));
    if (!frames.all_finite()) throw std::invalid_argument("skeleton sequence contains non-finite values");
    return SkeletonSequence{std::move(frames), motion_id, character_id};
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline bool get_u32(std::istream& is, std::uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
        static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
    return true;
}

inline void put_f32(std::ostream& os, float f) {
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(os, v);
}

inline bool get_f32(std::istream& is, float& f) {
    std::uint32_t v;
    if (!get_u32(is, v)) return false;
    std::memcpy(&f, &v, 4);
    return true;
}

}  // namespace detail

inline void write_sequence_stream(std::ostream& os, const SkeletonSequence& seq) {
    os.write(kViasMagic, 4);
    detail::put_u32(os, kViasVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(seq.T()));
    detail::put_u32(os, static_cast<std::uint32_t>(seq.V()));
    detail::put_u32(os, static_cast<std::uint32_t>(seq.C()));
    for (float f : seq.frames.data) detail::put_f32(os, f);
}

inline SkeletonSequence read_sequence_stream(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4)) throw IoError(IoCode::truncated, "file shorter than header");
    if (std::memcmp(magic, kViasMagic, 4) != 0) throw IoError(IoCode::bad_magic, "bad magic, not a VIAS file");
    std::uint32_t version, T, V, C;
    if (!detail::get_u32(is, version) || !detail::get_u32(is, T) || !detail::get_u32(is, V) ||
        !detail::get_u32(is, C))
        throw IoError(IoCode::truncated, "file shorter than header");
    if (version != kViasVersion)
        throw IoError(IoCode::bad_version, "unsupported VIAS version " + std::to_string(version));
    validate_sequence_dims(T, V, C);
    Tensor<float> frames = Tensor<float>::zeros(
        {static_cast<int>(T), static_cast<int>(V), static_cast<int>(C)});
    for (auto& f : frames.data)
        if (!detail::get_f32(is, f))
            throw IoError(IoCode::truncated, "payload truncated, expected " +
                                                 std::to_string(frames.size() * 4) + " bytes");
    return make_sequence(std::move(frames));
}

inline void write_sequence(const std::filesystem::path& path, const SkeletonSequence& seq) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError(IoCode::io_failure, "cannot open for write: " + path.string());
    write_sequence_stream(os, seq);
    if (!os) throw IoError(IoCode::io_failure, "write failed: " + path.string());
}

inline SkeletonSequence read_sequence(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(IoCode::io_failure, "cannot open: " + path.string());
    return read_sequence_stream(is);
}

// Moves joint 0 of every frame to the origin. Applied before encoding and
// before clustering descriptors.
template <typename S>
Tensor<S> root_center(const Tensor<S>& frames) {
    if (frames.rank() != 3) throw std::invalid_argument("root_center: expected [T,V,C]");
    const int T = frames.shape[0], V = frames.shape[1], C = frames.shape[2];
    Tensor<S> out = frames;
    for (int t = 0; t < T; ++t) {
        const S* root = frames.data.data() + (static_cast<std::size_t>(t) * V) * C;
        for (int v = 0; v < V; ++v) {
            S* row = out.data.data() + (static_cast<std::size_t>(t) * V + v) * C;
            for (int c = 0; c < C; ++c) row[c] -= root[c];
        }
    }
    return out;
}

inline SkeletonSequence root_center(const SkeletonSequence& seq) {
    return SkeletonSequence{root_center(seq.frames), seq.motion_id, seq.character_id};
}

}  // namespace via
