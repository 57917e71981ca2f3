#include "ucl/serialize.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

namespace ucl {

namespace {

constexpr char kMagic[8] = {'U', 'C', 'L', 'T', 'N', 'S', 'R', '1'};

void put_bytes(std::vector<char>& buf, const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf.insert(buf.end(), c, c + n);
}

template <typename T>
void put(std::vector<char>& buf, T v) {
    put_bytes(buf, &v, sizeof(T));
}

void put_str(std::vector<char>& buf, const std::string& s) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(s.size()));
    put_bytes(buf, s.data(), s.size());
}

class Reader {
public:
    Reader(const char* data, std::size_t n) : data_(data), n_(n) {}
    template <typename T>
    T get() {
        T v;
        take(&v, sizeof(T));
        return v;
    }
    std::string get_str() {
        auto len = get<std::uint32_t>();
        std::string s(len, '\0');
        take(s.data(), len);
        return s;
    }
    void take(void* dst, std::size_t n) {
        if (pos_ + n > n_) throw IntegrityError("archive: truncated file");
        std::memcpy(dst, data_ + pos_, n);
        pos_ += n;
    }
    std::size_t pos() const { return pos_; }

private:
    const char* data_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

std::vector<char> serialize_body(const TensorArchive& a) {
    std::vector<char> buf;
    put<std::uint32_t>(buf, TensorArchive::kVersion);

    put<std::uint64_t>(buf, a.strings.size());
    for (const auto& [k, v] : a.strings) {
        put_str(buf, k);
        put_str(buf, v);
    }
    put<std::uint64_t>(buf, a.ints.size());
    for (const auto& [k, v] : a.ints) {
        put_str(buf, k);
        put<std::int64_t>(buf, v);
    }
    put<std::uint64_t>(buf, a.tensors.size());
    for (const auto& [k, t] : a.tensors) {
        put_str(buf, k);
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.rank()));
        for (int d = 0; d < t.rank(); ++d) put<std::int32_t>(buf, t.dim(d));
        put<std::uint64_t>(buf, static_cast<std::uint64_t>(t.size()));
        put_bytes(buf, t.data(), static_cast<std::size_t>(t.size()) * sizeof(double));
    }
    return buf;
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t TensorArchive::content_hash() const {
    auto body = serialize_body(*this);
    return fnv1a64(body.data(), body.size());
}

void TensorArchive::save(const std::string& path) const {
    auto body = serialize_body(*this);
    const std::uint64_t hash = fnv1a64(body.data(), body.size());

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("archive: cannot open " + tmp + " for writing");
        out.write(kMagic, sizeof(kMagic));
        out.write(body.data(), static_cast<std::streamsize>(body.size()));
        out.write(reinterpret_cast<const char*>(&hash), sizeof(hash));
        if (!out) throw std::runtime_error("archive: write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

TensorArchive TensorArchive::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("archive: cannot open " + path);
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (raw.size() < sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t))
        throw IntegrityError("archive: truncated file " + path);
    if (std::memcmp(raw.data(), kMagic, sizeof(kMagic)) != 0)
        throw IntegrityError("archive: bad magic in " + path);

    const std::size_t body_len = raw.size() - sizeof(kMagic) - sizeof(std::uint64_t);
    const char* body = raw.data() + sizeof(kMagic);
    std::uint64_t stored_hash;
    std::memcpy(&stored_hash, raw.data() + raw.size() - sizeof(std::uint64_t), sizeof(stored_hash));
    if (fnv1a64(body, body_len) != stored_hash)
        throw IntegrityError("archive: content hash mismatch in " + path);

    Reader r(body, body_len);
    const auto version = r.get<std::uint32_t>();
    if (version != kVersion)
        throw VersionError("archive: unsupported version " + std::to_string(version) + " in " + path);

    TensorArchive a;
    for (std::uint64_t i = 0, n = r.get<std::uint64_t>(); i < n; ++i) {
        std::string k = r.get_str();
        a.strings[k] = r.get_str();
    }
    for (std::uint64_t i = 0, n = r.get<std::uint64_t>(); i < n; ++i) {
        std::string k = r.get_str();
        a.ints[k] = r.get<std::int64_t>();
    }
    for (std::uint64_t i = 0, n = r.get<std::uint64_t>(); i < n; ++i) {
        std::string k = r.get_str();
        const auto rank = r.get<std::uint32_t>();
        std::vector<int> shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.get<std::int32_t>());
        const auto count = r.get<std::uint64_t>();
        if (static_cast<std::int64_t>(count) != Tensor::count(shape))
            throw IntegrityError("archive: tensor " + k + " size/shape mismatch");
        Tensor t(shape);
        r.take(t.data(), count * sizeof(double));
        a.tensors[k] = std::move(t);
    }
    return a;
}

}  // namespace ucl
