#include "tsc/checkpoint.h"

#include "tsc/error.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tsc {

namespace {

constexpr char magic[4] = {'T', 'S', 'C', 'K'};

template <typename T> void put(std::string &out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::uint64_t bits = 0;
    if constexpr (std::is_floating_point_v<T>)
        bits = std::bit_cast<std::uint64_t>(v);
    else
        bits = static_cast<std::uint64_t>(v);
    for (std::size_t k = 0; k < sizeof(T); ++k)
        bytes[k] = static_cast<unsigned char>(bits >> (8 * k));
    out.append(reinterpret_cast<const char *>(bytes), sizeof(T));
}

class Reader {
public:
    explicit Reader(std::string_view b) : bytes_(b) {}

    template <typename T> T get() {
        need(sizeof(T));
        std::uint64_t bits = 0;
        for (std::size_t k = 0; k < sizeof(T); ++k)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + k])) << (8 * k);
        pos_ += sizeof(T);
        if constexpr (std::is_floating_point_v<T>)
            return std::bit_cast<T>(bits);
        else
            return static_cast<T>(bits);
    }

    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n)
            throw SyntaxError("checkpoint truncated", pos_);
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::string encode_checkpoint(const std::string &metadata, const ad::ParamStore &params) {
    std::string out(magic, 4);
    put<std::uint32_t>(out, checkpoint_version);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(metadata.size()));
    out += metadata;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.slots().size()));
    for (const auto &s : params.slots()) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(s.name.size()));
        out += s.name;
        put<std::uint32_t>(out, static_cast<std::uint32_t>(s.value.shape.size()));
        for (std::size_t d : s.value.shape)
            put<std::uint64_t>(out, d);
        for (double v : s.value.values)
            put<double>(out, v);
    }
    return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    Reader in(bytes);
    if (in.take(4) != std::string_view(magic, 4))
        throw SyntaxError("not a checkpoint (bad magic)", 0);
    const auto version = in.get<std::uint32_t>();
    if (version != checkpoint_version)
        throw SyntaxError("unsupported checkpoint version " + std::to_string(version), 4);
    Checkpoint ck;
    ck.metadata = std::string(in.take(in.get<std::uint32_t>()));
    const auto count = in.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::size_t at = in.pos();
        std::string name(in.take(in.get<std::uint32_t>()));
        const auto rank = in.get<std::uint32_t>();
        if (rank > bytes.size() / 8)
            throw SyntaxError("tensor '" + name + "' rank larger than the file", at);
        ad::Shape shape(rank);
        for (auto &d : shape) {
            d = static_cast<std::size_t>(in.get<std::uint64_t>());
            if (d > bytes.size())
                throw SyntaxError("tensor '" + name + "' larger than the file", at);
        }
        const std::size_t n = ad::numel(shape);
        if (n > bytes.size() / 8)
            throw SyntaxError("tensor '" + name + "' larger than the file", at);
        std::vector<double> values(n);
        for (auto &v : values)
            v = in.get<double>();
        if (ck.params.contains(name))
            throw SyntaxError("duplicate tensor '" + name + "'", at);
        ck.params.add(name, ad::Tensor(std::move(shape), std::move(values)));
    }
    if (!in.done())
        throw SyntaxError("trailing bytes after checkpoint", in.pos());
    return ck;
}

void save_checkpoint(const std::string &path, const std::string &metadata, const ad::ParamStore &params) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f)
        throw RuntimeAbort("cannot write " + path);
    const std::string bytes = encode_checkpoint(metadata, params);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f)
        throw RuntimeAbort("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw RuntimeAbort("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_checkpoint(ss.str());
}

} // namespace tsc
