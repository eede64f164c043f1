#pragma once

#include <stdexcept>
#include <type_traits>
#include <utility>
#include <variant>

namespace radfleet {

// Minimal value-or-error carrier until std::expected is available on every
// toolchain we build with.
template <class E>
struct Unexpected {
    E error;
};

template <class E>
Unexpected<std::decay_t<E>> fail(E&& e) {
    return {std::forward<E>(e)};
}

class BadExpectedAccess : public std::logic_error {
public:
    BadExpectedAccess() : std::logic_error("Expected: accessed value of an error result") {}
};

template <class T, class E>
class Expected {
public:
    Expected(const T& v) : data_(std::in_place_index<0>, v) {}
    Expected(T&& v) : data_(std::in_place_index<0>, std::move(v)) {}
    template <class G>
    Expected(Unexpected<G> u) : data_(std::in_place_index<1>, E(std::move(u.error))) {}

    bool has_value() const noexcept { return data_.index() == 0; }
    explicit operator bool() const noexcept { return has_value(); }

    T& value() & {
        if (!has_value()) throw BadExpectedAccess();
        return std::get<0>(data_);
    }
    const T& value() const& {
        if (!has_value()) throw BadExpectedAccess();
        return std::get<0>(data_);
    }
    T&& value() && {
        if (!has_value()) throw BadExpectedAccess();
        return std::get<0>(std::move(data_));
    }

    const E& error() const { return std::get<1>(data_); }

    T& operator*() & { return value(); }
    const T& operator*() const& { return value(); }
    T* operator->() { return &value(); }
    const T* operator->() const { return &value(); }

    template <class U>
    T value_or(U&& fallback) const& {
        return has_value() ? std::get<0>(data_) : static_cast<T>(std::forward<U>(fallback));
    }

private:
    std::variant<T, E> data_;
};

// Success-or-error for operations with no payload.
struct Ok {};

}  // namespace radfleet
