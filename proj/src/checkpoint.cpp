#include "grpolab/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "grpolab/errors.hpp"

namespace grpolab {

namespace {

constexpr std::array<char, 8> kMagic = {'G', 'R', 'P', 'O', 'L', 'A', 'B', '\0'};

template <typename U>
void put_le(std::ostream& out, U value) {
    std::array<unsigned char, sizeof(U)> bytes{};
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFFu);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
    std::array<unsigned char, sizeof(U)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), sizeof(U));
    if (!in) {
        throw FormatError("checkpoint truncated");
    }
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        value |= static_cast<U>(bytes[i]) << (8 * i);
    }
    return value;
}

std::uint32_t narrow32(std::size_t v) {
    if (v > 0xFFFFFFFFu) {
        throw FormatError("architecture field exceeds 32 bits");
    }
    return static_cast<std::uint32_t>(v);
}

}  // namespace

void write_checkpoint(std::ostream& out, const PolicyParameters& params) {
    const auto& a = params.arch;
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(a.kind));
    put_le<std::uint32_t>(out, narrow32(a.vocab_size));
    put_le<std::uint32_t>(out, narrow32(a.order));
    put_le<std::uint32_t>(out, narrow32(a.window));
    put_le<std::uint32_t>(out, narrow32(a.hidden));
    put_le<std::uint64_t>(out, params.values.size());
    for (double v : params.values) {
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out) {
        throw FormatError("failed writing checkpoint");
    }
}

PolicyParameters read_checkpoint(std::istream& in) {
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) {
        throw FormatError("not a checkpoint (bad magic)");
    }
    const auto version = get_le<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto kind = get_le<std::uint32_t>(in);
    if (kind < 1 || kind > 3) {
        throw FormatError("unknown architecture tag " + std::to_string(kind));
    }
    Architecture a;
    a.kind = static_cast<ArchitectureKind>(kind);
    a.vocab_size = get_le<std::uint32_t>(in);
    a.order = get_le<std::uint32_t>(in);
    a.window = get_le<std::uint32_t>(in);
    a.hidden = get_le<std::uint32_t>(in);
    const auto count = get_le<std::uint64_t>(in);
    if (count != a.parameter_count()) {
        throw FormatError("parameter count " + std::to_string(count) +
                          " does not match architecture " + a.tag());
    }
    PolicyParameters p{a, std::vector<double>(count)};
    for (auto& v : p.values) {
        v = std::bit_cast<double>(get_le<std::uint64_t>(in));
    }
    return p;
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParameters& params) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    // Write then rename so readers never observe a partial file.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw FormatError("cannot open " + tmp.string() + " for writing");
        }
        write_checkpoint(out, params);
    }
    std::filesystem::rename(tmp, path);
}

PolicyParameters load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open checkpoint " + path.string());
    }
    return read_checkpoint(in);
}

}  // namespace grpolab
