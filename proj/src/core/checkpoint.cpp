#include "aprm/checkpoint.hpp"

#include "aprm/errors.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace aprm {

namespace {

constexpr char kMagic[4] = {'A', 'P', 'R', 'M'};

template <class U>
void put_le(std::string& out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
}

void put_block(std::string& out, const std::vector<double>& block) {
    for (double v : block) put_le(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <class U>
    U get() {
        if (pos_ + sizeof(U) > bytes_.size()) throw DataError("checkpoint truncated at byte " + std::to_string(pos_));
        U value = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            value |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return value;
    }

    std::vector<double> block(std::size_t count) {
        // Guard against absurd header sizes before allocating.
        if (count > (bytes_.size() - pos_) / 8) throw DataError("checkpoint truncated: parameter block exceeds file size");
        std::vector<double> out(count);
        for (double& v : out) v = std::bit_cast<double>(get<std::uint64_t>());
        return out;
    }

    bool done() const noexcept { return pos_ == bytes_.size(); }

private:
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::string encode_checkpoint(const EnsembleModel& model) {
    const auto& shape = model.shape();
    std::string out(kMagic, 4);
    out.push_back(static_cast<char>(kCheckpointVersion));
    put_le(out, static_cast<std::uint32_t>(shape.n_heads));
    put_le(out, static_cast<std::uint32_t>(shape.feature_dim));
    put_le(out, static_cast<std::uint32_t>(shape.trunk_dim));
    put_le(out, static_cast<std::uint64_t>(model.step_count()));
    const auto& p = model.params();
    put_block(out, p.trunk_w);
    put_block(out, p.trunk_b);
    put_block(out, p.head_w);
    put_block(out, p.head_b);
    put_block(out, model.init_head_w());
    put_block(out, model.init_head_b());
    return out;
}

EnsembleModel decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 5 || bytes.compare(0, 4, kMagic, 4) != 0) throw DataError("checkpoint: bad magic (expected \"APRM\")");
    const auto version = static_cast<std::uint8_t>(bytes[4]);
    if (version != kCheckpointVersion)
        throw DataError("checkpoint: version mismatch (file " + std::to_string(version) + ", expected " +
                        std::to_string(kCheckpointVersion) + ")");
    Reader r(bytes);
    r.get<std::uint32_t>(); // magic
    r.get<std::uint8_t>();  // version
    ModelShape shape;
    shape.n_heads = r.get<std::uint32_t>();
    shape.feature_dim = r.get<std::uint32_t>();
    shape.trunk_dim = r.get<std::uint32_t>();
    const auto steps = r.get<std::uint64_t>();
    if (shape.n_heads == 0 || shape.feature_dim == 0) throw DataError("checkpoint: zero-sized model in header");
    ParameterSet p;
    p.trunk_w = r.block(shape.trunk_dim * shape.feature_dim);
    p.trunk_b = r.block(shape.trunk_dim);
    p.head_w = r.block(shape.n_heads * shape.head_in());
    p.head_b = r.block(shape.n_heads);
    auto init_w = r.block(shape.n_heads * shape.head_in());
    auto init_b = r.block(shape.n_heads);
    if (!r.done()) throw DataError("checkpoint: trailing bytes after parameter blocks");
    return EnsembleModel(shape, std::move(p), std::move(init_w), std::move(init_b), steps);
}

void save_checkpoint(const EnsembleModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    const auto bytes = encode_checkpoint(model);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

EnsembleModel load_checkpoint(const std::filesystem::path& path, const std::optional<Config>& expect) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    auto model = decode_checkpoint(buf.str());
    if (expect) {
        const auto& s = model.shape();
        if (s.n_heads != expect->n_heads || s.feature_dim != expect->feature_dim || s.trunk_dim != expect->trunk_dim)
            throw ConfigError("checkpoint dimensions (heads " + std::to_string(s.n_heads) + ", d " + std::to_string(s.feature_dim) +
                              ", trunk " + std::to_string(s.trunk_dim) + ") do not match the requested config");
    }
    return model;
}

} // namespace aprm
