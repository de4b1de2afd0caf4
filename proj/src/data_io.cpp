#include "ttyard/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <unordered_set>

#include "ttyard/random.hpp"

namespace ttyard {
namespace {

constexpr char kMagic[4] = {'T', 'Y', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_le(std::vector<std::byte>& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(const std::byte* p) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(std::to_integer<unsigned>(p[i])) << (8 * i);
    return v;
}

template <typename T>
using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

template <typename T>
constexpr DType dtype_of() {
    return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

class Reader {
public:
    explicit Reader(std::span<const std::byte> bytes) : bytes_(bytes) {}

    const std::byte* take(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(FormatError::Kind::truncated, std::string("container truncated while reading ") + what +
                                                                " at byte " + std::to_string(pos_));
        }
        const std::byte* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    template <typename U>
    U read(const char* what) {
        return get_le<U>(take(sizeof(U), what));
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::span<const std::byte> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::size_t dtype_size(DType d) { return d == DType::f32 ? 4 : 8; }

std::string to_string(DType d) { return d == DType::f32 ? "f32" : "f64"; }

std::string to_string(FormatError::Kind kind) {
    switch (kind) {
        case FormatError::Kind::bad_magic: return "bad_magic";
        case FormatError::Kind::bad_version: return "bad_version";
        case FormatError::Kind::truncated: return "truncated";
        case FormatError::Kind::duplicate_name: return "duplicate_name";
        case FormatError::Kind::bad_dtype: return "bad_dtype";
        case FormatError::Kind::trailing_bytes: return "trailing_bytes";
        case FormatError::Kind::io: return "io";
    }
    return "unknown";
}

std::uint64_t ContainerEntry::element_count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

template <typename T>
ContainerEntry ContainerEntry::from_tensor(std::string name, const Tensor<T>& t) {
    ContainerEntry e;
    e.name = std::move(name);
    e.dtype = dtype_of<T>();
    e.dims.assign(t.dims().begin(), t.dims().end());
    e.data.reserve(t.size() * sizeof(T));
    for (T v : t.values()) put_le(e.data, std::bit_cast<Bits<T>>(v));
    return e;
}

template <typename T>
Tensor<T> ContainerEntry::to_tensor() const {
    Shape shape(dims.begin(), dims.end());
    if (shape.empty()) shape = {1};
    Tensor<T> out(shape);
    const std::size_t n = out.size();
    if (data.size() != n * dtype_size(dtype)) throw std::invalid_argument("container entry '" + name + "' is corrupt");
    for (std::size_t i = 0; i < n; ++i) {
        if (dtype == DType::f32) {
            out[i] = static_cast<T>(std::bit_cast<float>(get_le<std::uint32_t>(data.data() + 4 * i)));
        } else {
            out[i] = static_cast<T>(std::bit_cast<double>(get_le<std::uint64_t>(data.data() + 8 * i)));
        }
    }
    return out;
}

template ContainerEntry ContainerEntry::from_tensor(std::string, const Tensor<float>&);
template ContainerEntry ContainerEntry::from_tensor(std::string, const Tensor<double>&);
template Tensor<float> ContainerEntry::to_tensor<float>() const;
template Tensor<double> ContainerEntry::to_tensor<double>() const;

void WeightContainer::add(ContainerEntry entry) {
    if (find(entry.name)) {
        throw FormatError(FormatError::Kind::duplicate_name, "duplicate container entry name '" + entry.name + "'");
    }
    if (entry.data.size() != entry.element_count() * dtype_size(entry.dtype)) {
        throw std::invalid_argument("container entry '" + entry.name + "': " + std::to_string(entry.data.size()) +
                                    " data bytes for " + std::to_string(entry.element_count()) + " " +
                                    to_string(entry.dtype) + " elements");
    }
    entries_.push_back(std::move(entry));
}

const ContainerEntry* WeightContainer::find(std::string_view name) const {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const ContainerEntry& e) { return e.name == name; });
    return it == entries_.end() ? nullptr : &*it;
}

const ContainerEntry& WeightContainer::at(std::string_view name) const {
    if (const auto* e = find(name)) return *e;
    throw std::out_of_range("no container entry named '" + std::string(name) + "'");
}

std::vector<std::byte> encode_container(const WeightContainer& c) {
    std::vector<std::byte> out;
    for (char ch : kMagic) out.push_back(static_cast<std::byte>(ch));
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.size()));
    for (const auto& e : c.entries()) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
        for (char ch : e.name) out.push_back(static_cast<std::byte>(ch));
        out.push_back(static_cast<std::byte>(e.dtype));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.dims.size()));
        for (auto d : e.dims) put_le<std::uint64_t>(out, d);
        out.insert(out.end(), e.data.begin(), e.data.end());
    }
    return out;
}

WeightContainer decode_container(std::span<const std::byte> bytes) {
    Reader r(bytes);
    const std::byte* magic = r.take(4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError(FormatError::Kind::bad_magic, "not a TYT1 container (bad magic)");
    }
    const auto version = r.read<std::uint32_t>("version");
    if (version != kVersion) {
        throw FormatError(FormatError::Kind::bad_version, "unsupported container version " + std::to_string(version));
    }
    const auto count = r.read<std::uint32_t>("entry count");
    WeightContainer c;
    for (std::uint32_t i = 0; i < count; ++i) {
        ContainerEntry e;
        const auto name_len = r.read<std::uint32_t>("name length");
        const std::byte* name = r.take(name_len, "name");
        e.name.assign(reinterpret_cast<const char*>(name), name_len);
        const auto dtype = std::to_integer<std::uint8_t>(*r.take(1, "dtype"));
        if (dtype > 1) {
            throw FormatError(FormatError::Kind::bad_dtype,
                              "entry '" + e.name + "' has unknown dtype code " + std::to_string(dtype));
        }
        e.dtype = static_cast<DType>(dtype);
        const auto ndim = r.read<std::uint32_t>("ndim");
        if (ndim > r.remaining() / 8) {
            throw FormatError(FormatError::Kind::truncated, "container truncated in dims of '" + e.name + "'");
        }
        for (std::uint32_t k = 0; k < ndim; ++k) e.dims.push_back(r.read<std::uint64_t>("dim"));
        std::uint64_t bytes_needed = dtype_size(e.dtype);
        for (auto d : e.dims) {
            if (d != 0 && bytes_needed > r.remaining() / d) {
                throw FormatError(FormatError::Kind::truncated, "container truncated in data of '" + e.name + "'");
            }
            bytes_needed *= d;
        }
        const std::byte* data = r.take(bytes_needed, "data");
        e.data.assign(data, data + bytes_needed);
        if (c.find(e.name)) {
            throw FormatError(FormatError::Kind::duplicate_name, "duplicate container entry name '" + e.name + "'");
        }
        c.add(std::move(e));
    }
    if (r.remaining() != 0) {
        throw FormatError(FormatError::Kind::trailing_bytes,
                          std::to_string(r.remaining()) + " trailing bytes after the last container entry");
    }
    return c;
}

namespace {

std::vector<std::byte> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::byte> out(raw.size());
    std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

}  // namespace

void write_container(const std::filesystem::path& path, const WeightContainer& c) {
    const auto bytes = encode_container(c);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::io, "cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(FormatError::Kind::io, "write to '" + path.string() + "' failed");
}

WeightContainer read_container(const std::filesystem::path& path) {
    std::vector<std::byte> bytes;
    try {
        bytes = slurp(path);
    } catch (const std::runtime_error& e) {
        throw FormatError(FormatError::Kind::io, e.what());
    }
    return decode_container(bytes);
}

TensorF Dataset::gather(std::span<const std::size_t> indices, std::vector<int>& labels_out) const {
    Shape dims = images.dims();
    const std::size_t per = images.size() / dims[0];
    dims[0] = indices.size();
    TensorF out(dims);
    labels_out.resize(indices.size());
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const std::size_t i = indices[b];
        if (i >= size()) throw std::out_of_range("dataset index " + std::to_string(i));
        std::copy_n(images.raw() + i * per, per, out.raw() + b * per);
        labels_out[b] = labels[i];
    }
    return out;
}

Dataset load_cifar10_batch(const std::filesystem::path& file) {
    const auto bytes = slurp(file);
    if (bytes.empty() || bytes.size() % cifar::kRecordBytes != 0) {
        throw std::runtime_error("'" + file.string() + "': size " + std::to_string(bytes.size()) +
                                 " is not a positive multiple of " + std::to_string(cifar::kRecordBytes));
    }
    const std::size_t n = bytes.size() / cifar::kRecordBytes;
    constexpr std::size_t plane = cifar::kSide * cifar::kSide;
    Dataset ds;
    ds.num_classes = 10;
    ds.images = TensorF({n, 3, cifar::kSide, cifar::kSide});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::byte* rec = bytes.data() + i * cifar::kRecordBytes;
        const int label = std::to_integer<int>(rec[0]);
        if (label > 9) {
            throw std::runtime_error("'" + file.string() + "': record " + std::to_string(i) + " has label " +
                                     std::to_string(label));
        }
        ds.labels[i] = label;
        float* dst = ds.images.raw() + i * 3 * plane;
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t p = 0; p < plane; ++p) {
                const float v = static_cast<float>(std::to_integer<int>(rec[1 + c * plane + p])) / 255.0f;
                dst[c * plane + p] = (v - cifar::kMean[c]) / cifar::kStd[c];
            }
        }
    }
    return ds;
}

namespace {

Dataset concat(std::vector<Dataset> parts) {
    Dataset out;
    out.num_classes = parts.front().num_classes;
    Shape dims = parts.front().images.dims();
    std::size_t n = 0;
    for (const auto& p : parts) n += p.size();
    dims[0] = n;
    out.images = TensorF(dims);
    float* dst = out.images.raw();
    for (const auto& p : parts) {
        dst = std::copy_n(p.images.raw(), p.images.size(), dst);
        out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    }
    return out;
}

}  // namespace

TrainTestSplit load_cifar10(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw std::runtime_error("CIFAR-10 directory '" + dir.string() + "' does not exist");
    }
    std::vector<Dataset> train;
    for (int b = 1; b <= 5; ++b) train.push_back(load_cifar10_batch(dir / ("data_batch_" + std::to_string(b) + ".bin")));
    return {concat(std::move(train)), load_cifar10_batch(dir / "test_batch.bin")};
}

Dataset gen_synthetic(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("gen_synthetic: n must be at least 1");
    using namespace synthetic;
    Rng rng(seed);
    Dataset ds;
    ds.num_classes = kClasses;
    ds.images = TensorF({n, kChannels, kSide, kSide});
    ds.labels.resize(n);
    float* px = ds.images.raw();
    for (std::size_t i = 0; i < n; ++i) {
        const int k = static_cast<int>(i % kClasses);
        ds.labels[i] = k;
        for (std::size_t c = 0; c < kChannels; ++c) {
            const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
            for (std::size_t y = 0; y < kSide; ++y) {
                for (std::size_t x = 0; x < kSide; ++x) {
                    const double arg = 2.0 * std::numbers::pi * (k + 1) * static_cast<double>(x + y) / kSide + phi;
                    *px++ = static_cast<float>(std::sin(arg) + rng.normal(0.0, kNoiseSd));
                }
            }
        }
    }
    return ds;
}

}  // namespace ttyard
