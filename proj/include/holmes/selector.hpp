#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace holmes {

// Binary indicator over the zoo: bit i set means model i is in the ensemble.
class Selector {
public:
    Selector() = default;
    explicit Selector(std::size_t n) : bits_(n, 0) {}
    explicit Selector(std::vector<std::uint8_t> bits);

    // Parses "0101..." (index 0 first).
    static Selector from_string(std::string_view s);
    static Selector single(std::size_t n, std::size_t index);
    static Selector all(std::size_t n);

    std::size_t size() const { return bits_.size(); }
    bool operator[](std::size_t i) const { return bits_[i] != 0; }
    void set(std::size_t i, bool on = true) { bits_[i] = on ? 1 : 0; }
    void flip(std::size_t i) { bits_[i] ^= 1; }

    std::size_t popcount() const;
    bool empty_ensemble() const { return popcount() == 0; }
    std::vector<std::size_t> indices() const;
    std::span<const std::uint8_t> bits() const { return bits_; }

    std::string to_string() const;

    friend bool operator==(const Selector&, const Selector&) = default;
    friend auto operator<=>(const Selector&, const Selector&) = default;

private:
    std::vector<std::uint8_t> bits_;
};

std::size_t manhattan(const Selector& a, const Selector& b);

// Throws InvalidArgument when b does not index a zoo of size n.
void require_length(const Selector& b, std::size_t n, std::string_view what);

struct SelectorHash {
    std::size_t operator()(const Selector& s) const noexcept;
};

}  // namespace holmes
