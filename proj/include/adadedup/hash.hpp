#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace adadedup {

// Streaming FNV-1a (64 bit). Any single-byte change provably changes the
// digest: the xor step is injective in the byte and every later step is a
// bijection of the running state.
class Fnv1a64 {
public:
    void update(const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            state_ ^= p[i];
            state_ *= 1099511628211ull;
        }
    }

    std::uint64_t digest() const { return state_; }

    std::string hex() const {
        static const char* d = "0123456789abcdef";
        std::string out(16, '0');
        std::uint64_t v = state_;
        for (int i = 15; i >= 0; --i) {
            out[static_cast<std::size_t>(i)] = d[v & 0xf];
            v >>= 4;
        }
        return "fnv1a64:" + out;
    }

private:
    std::uint64_t state_ = 1469598103934665603ull;
};

inline std::string fnv1a64_hex(const void* data, std::size_t len) {
    Fnv1a64 h;
    h.update(data, len);
    return h.hex();
}

inline std::string fnv1a64_hex(const std::string& bytes) {
    return fnv1a64_hex(bytes.data(), bytes.size());
}

}  // namespace adadedup
