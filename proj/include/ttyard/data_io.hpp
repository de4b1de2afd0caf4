#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttyard/tensor.hpp"

namespace ttyard {

// ---- "TYT1" weight container ----------------------------------------------
//
// magic "TYT1" | u32 version (1) | u32 entry count
// per entry: u32 name length | name bytes | u8 dtype (0 f32, 1 f64) | u32 ndim |
//            ndim x u64 dims | raw row-major data
// All integers and floats little-endian.

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

std::size_t dtype_size(DType d);
std::string to_string(DType d);

struct ContainerEntry {
    std::string name;
    DType dtype = DType::f32;
    std::vector<std::uint64_t> dims;  // empty for a scalar
    std::vector<std::byte> data;      // host byte order of the stored scalars

    std::uint64_t element_count() const;

    template <typename T>
    static ContainerEntry from_tensor(std::string name, const Tensor<T>& t);

    /// Converts to the requested precision; ndim 0 becomes dims {1}.
    template <typename T>
    Tensor<T> to_tensor() const;

    bool operator==(const ContainerEntry&) const = default;
};

class WeightContainer {
public:
    /// Rejects duplicate names and byte lengths inconsistent with dims.
    void add(ContainerEntry entry);

    template <typename T>
    void add_tensor(std::string name, const Tensor<T>& t) {
        add(ContainerEntry::from_tensor(std::move(name), t));
    }

    const std::vector<ContainerEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const ContainerEntry* find(std::string_view name) const;
    const ContainerEntry& at(std::string_view name) const;

    bool operator==(const WeightContainer&) const = default;

private:
    std::vector<ContainerEntry> entries_;
};

class FormatError : public std::runtime_error {
public:
    enum class Kind { bad_magic, bad_version, truncated, duplicate_name, bad_dtype, trailing_bytes, io };

    FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

std::string to_string(FormatError::Kind kind);

std::vector<std::byte> encode_container(const WeightContainer& c);
WeightContainer decode_container(std::span<const std::byte> bytes);

void write_container(const std::filesystem::path& path, const WeightContainer& c);
WeightContainer read_container(const std::filesystem::path& path);

// ---- Datasets ---------------------------------------------------------------

/// Images (N, C, H, W) in f32 with integer labels in [0, num_classes).
struct Dataset {
    TensorF images;
    std::vector<int> labels;
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    /// Copies the listed samples into a contiguous batch.
    TensorF gather(std::span<const std::size_t> indices, std::vector<int>& labels_out) const;
};

struct TrainTestSplit {
    Dataset train;
    Dataset test;
};

namespace cifar {
inline constexpr std::size_t kRecordBytes = 3073;
inline constexpr std::size_t kSide = 32;
inline constexpr float kMean[3] = {0.4914f, 0.4822f, 0.4465f};
inline constexpr float kStd[3] = {0.2470f, 0.2435f, 0.2616f};
}  // namespace cifar

/// Parses one binary batch; throws std::runtime_error on bad length or label.
Dataset load_cifar10_batch(const std::filesystem::path& file);

/// data_batch_1..5.bin and test_batch.bin under dir.
TrainTestSplit load_cifar10(const std::filesystem::path& dir);

namespace synthetic {
inline constexpr std::size_t kClasses = 4;
inline constexpr std::size_t kChannels = 3;
inline constexpr std::size_t kSide = 16;
inline constexpr double kNoiseSd = 0.1;
}  // namespace synthetic

/**
 * Class k image: sin(2 pi (k+1)(x+y)/16 + phi) + noise per pixel, phi uniform in
 * [0, 2 pi) drawn per (image, channel), noise N(0, 0.1^2). Labels round-robin.
 */
Dataset gen_synthetic(std::size_t n, std::uint64_t seed);

}  // namespace ttyard
