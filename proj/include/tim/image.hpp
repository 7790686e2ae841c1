// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tim/expected.hpp>
#include <tim/scene.hpp>

#include <memory>
#include <string>

namespace tim
{

/// Opaque image handle. `source` is a file path, an http(s) URL or a data:
/// URI. Synthetic problems attach a scene instead; it is only ever read by
/// the oracle answerer and rendered to SVG for remote backends.
struct ImageRef
{
    std::string source;
    std::shared_ptr<const Scene> scene;

    static auto from_scene(Scene scene) -> ImageRef;
};

auto operator==(const ImageRef& a, const ImageRef& b) -> bool;

/// Hex SHA-256 over the image payload (file bytes, URL text, data URI or
/// canonical scene JSON). File read failures digest the path instead.
auto content_digest(const ImageRef& image) -> std::string;

/// URL as sent on the wire: http(s) and data: URIs pass through; files are
/// inlined as base64 data URIs; scenes are rendered to SVG.
auto to_wire_url(const ImageRef& image) -> Expected<std::string, std::string>;

namespace crypto
{
    auto sha256_hex(std::string_view data) -> std::string;
    auto base64_encode(std::string_view data) -> std::string;
} // namespace crypto

} // namespace tim
