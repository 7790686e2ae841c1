// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cassert>
#include <utility>
#include <variant>

namespace tim
{

// Small stand-in for std::expected (C++23); the surface mirrors the standard
// type so call sites can switch over once the toolchain allows it.
template <typename E>
struct Unexpected
{
    E error;
};

template <typename E>
auto unexpected(E error) -> Unexpected<E>
{
    return Unexpected<E> { std::move(error) };
}

template <typename T, typename E>
class Expected
{
  public:
    Expected(T value): _storage(std::in_place_index<0>, std::move(value)) {}

    template <typename G>
    Expected(Unexpected<G> err): _storage(std::in_place_index<1>, E(std::move(err.error)))
    {
    }

    [[nodiscard]] auto has_value() const noexcept -> bool { return _storage.index() == 0; }
    explicit operator bool() const noexcept { return has_value(); }

    auto value() & -> T&
    {
        assert(has_value());
        return std::get<0>(_storage);
    }
    auto value() const& -> const T&
    {
        assert(has_value());
        return std::get<0>(_storage);
    }
    auto value() && -> T&&
    {
        assert(has_value());
        return std::get<0>(std::move(_storage));
    }

    auto error() & -> E&
    {
        assert(!has_value());
        return std::get<1>(_storage);
    }
    auto error() const& -> const E&
    {
        assert(!has_value());
        return std::get<1>(_storage);
    }
    auto error() && -> E&&
    {
        assert(!has_value());
        return std::get<1>(std::move(_storage));
    }

    auto operator*() & -> T& { return value(); }
    auto operator*() const& -> const T& { return value(); }
    auto operator*() && -> T&& { return std::move(*this).value(); }
    auto operator->() -> T* { return &value(); }
    auto operator->() const -> const T* { return &value(); }

  private:
    std::variant<T, E> _storage;
};

} // namespace tim
