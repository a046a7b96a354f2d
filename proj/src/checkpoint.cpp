#include "sggec/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace sggec {

namespace {

const char kMagic[4] = {'S', 'G', 'G', 'C'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

void write_f32(std::ostream& out, const float* data, std::size_t count) {
    static_assert(sizeof(float) == 4);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, &data[i], 4);
        write_u32(out, bits);
    }
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    if (!in) throw CheckpointError("unexpected end of file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw CheckpointError("unexpected end of file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw CheckpointError("cannot open '" + path + "' for writing");
    }
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u64(out, checkpoint.config.size());
    out.write(checkpoint.config.data(), static_cast<std::streamsize>(checkpoint.config.size()));
    for (const auto& [name, tensor] : checkpoint.tensors) {
        write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        const auto& shape = tensor.shape();
        write_u32(out, static_cast<std::uint32_t>(shape.size()));
        for (int d : shape) write_u64(out, static_cast<std::uint64_t>(d));
        write_f32(out, tensor.data().data(), tensor.numel());
    }
    if (!out) {
        throw CheckpointError("write to '" + path + "' failed");
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open '" + path + "'");
    }
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw CheckpointError("'" + path + "' is not a checkpoint (bad magic)");
    }
    const std::uint32_t version = read_u32(in);
    if (version != kVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint checkpoint;
    const std::uint64_t config_len = read_u64(in);
    checkpoint.config.resize(config_len);
    in.read(checkpoint.config.data(), static_cast<std::streamsize>(config_len));
    if (!in) throw CheckpointError("unexpected end of file in config block");
    while (true) {
        in.peek();
        if (in.eof()) break;
        const std::uint32_t name_len = read_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw CheckpointError("unexpected end of file in record name");
        const std::uint32_t rank = read_u32(in);
        std::vector<int> shape;
        std::size_t numel = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const std::uint64_t dim = read_u64(in);
            if (dim == 0 || dim > (1ull << 31)) {
                throw CheckpointError("record '" + name + "' has invalid dimension");
            }
            shape.push_back(static_cast<int>(dim));
            numel *= dim;
        }
        std::vector<float> data(numel);
        for (std::size_t i = 0; i < numel; ++i) {
            const std::uint32_t bits = read_u32(in);
            std::memcpy(&data[i], &bits, 4);
        }
        if (checkpoint.tensors.count(name)) {
            throw CheckpointError("duplicate record '" + name + "'");
        }
        checkpoint.tensors.emplace(name, Tensor::from_data(std::move(shape), std::move(data)));
    }
    return checkpoint;
}

Parameters checkpoint_model_parameters(const Checkpoint& checkpoint) {
    Parameters params;
    for (const auto& [name, tensor] : checkpoint.tensors) {
        if (name.rfind("optim.", 0) == 0) continue;
        params.add(name, Tensor::from_data(tensor.shape(), tensor.data()));
    }
    return params;
}

}  // namespace sggec
