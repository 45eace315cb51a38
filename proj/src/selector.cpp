#include "holmes/selector.hpp"

#include <numeric>

#include "holmes/errors.hpp"
#include "holmes/rng.hpp"

namespace holmes {

Selector::Selector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto& b : bits_) b = b ? 1 : 0;
}

Selector Selector::from_string(std::string_view s) {
    Selector out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '1')
            out.bits_[i] = 1;
        else if (s[i] != '0')
            throw ParseError("selector: expected only '0'/'1' characters, got '" + std::string(s) + "'");
    }
    return out;
}

Selector Selector::single(std::size_t n, std::size_t index) {
    Selector out(n);
    out.set(index);
    return out;
}

Selector Selector::all(std::size_t n) { return Selector(std::vector<std::uint8_t>(n, 1)); }

std::size_t Selector::popcount() const {
    return static_cast<std::size_t>(std::accumulate(bits_.begin(), bits_.end(), std::size_t{0}));
}

std::vector<std::size_t> Selector::indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < bits_.size(); ++i)
        if (bits_[i]) out.push_back(i);
    return out;
}

std::string Selector::to_string() const {
    std::string s(bits_.size(), '0');
    for (std::size_t i = 0; i < bits_.size(); ++i)
        if (bits_[i]) s[i] = '1';
    return s;
}

std::size_t manhattan(const Selector& a, const Selector& b) {
    if (a.size() != b.size()) throw InvalidArgument("manhattan: selector length mismatch");
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
}

void require_length(const Selector& b, std::size_t n, std::string_view what) {
    if (b.size() != n)
        throw InvalidArgument(std::string(what) + ": selector length " + std::to_string(b.size()) +
                              " does not match zoo size " + std::to_string(n));
}

std::size_t SelectorHash::operator()(const Selector& s) const noexcept {
    std::uint64_t h = 0x84222325cbf29ce4ULL ^ s.size();
    std::uint64_t word = 0;
    int used = 0;
    for (auto b : s.bits()) {
        word = (word << 1) | b;
        if (++used == 64) {
            h = mix64(h ^ word);
            word = 0;
            used = 0;
        }
    }
    return static_cast<std::size_t>(mix64(h ^ word ^ static_cast<std::uint64_t>(used)));
}

}  // namespace holmes
