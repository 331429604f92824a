#include "histoforge/rng.hpp"

namespace histoforge {

namespace {
std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}
}  // namespace

std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t basis) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    std::uint64_t h = basis;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view text, std::uint64_t basis) {
    return fnv1a64(text.data(), text.size(), basis);
}

RngStream RngStream::derive(std::string_view key) const {
    std::uint64_t mixed = fnv1a64(key, state_ ^ 0xcbf29ce484222325ull);
    return RngStream(mixed);
}

RngStream RngStream::derive(std::uint64_t key) const {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(key >> (8 * i));
    return RngStream(fnv1a64(buf, 8, state_ ^ 0xcbf29ce484222325ull));
}

std::uint64_t RngStream::next_u64() { return splitmix64(state_); }

double RngStream::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

std::uint64_t RngStream::next_below(std::uint64_t n) {
    std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
        std::uint64_t x = next_u64();
        if (x >= threshold) return x % n;
    }
}

}  // namespace histoforge
