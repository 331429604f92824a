#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace histoforge {

/// Deterministic counter-based random stream. Streams are derived by hashing
/// a key (global seed + arbitrary strings/integers) so independent outputs of
/// a run never share state; results are identical across platforms because no
/// standard-library distribution is involved.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(seed) {}

    /// Derive a sub-stream keyed by an extra component.
    RngStream derive(std::string_view key) const;
    RngStream derive(std::uint64_t key) const;

    std::uint64_t next_u64();

    /// Uniform double in [0, 1).
    double next_double();

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi);

    /// Uniform integer in [0, n), n > 0. Rejection-sampled, unbiased.
    std::uint64_t next_below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t state_;
};

/// 64-bit FNV-1a, used for stream derivation and artifact checksums.
std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t basis = 0xcbf29ce484222325ull);
std::uint64_t fnv1a64(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ull);

}  // namespace histoforge
