// SPDX-License-Identifier: Apache-2.0
#include <tim/image.hpp>
#include <tim/text.hpp>

#include <openssl/evp.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

namespace tim
{

namespace crypto
{

    auto sha256_hex(std::string_view data) -> std::string
    {
        auto digest = std::array<unsigned char, EVP_MAX_MD_SIZE> {};
        auto length = 0u;
        EVP_Digest(data.data(), data.size(), digest.data(), &length, EVP_sha256(), nullptr);
        static constexpr auto Hex = std::string_view { "0123456789abcdef" };
        auto out = std::string {};
        out.reserve(length * 2);
        for (auto i = 0u; i < length; ++i)
        {
            out += Hex[digest[i] >> 4];
            out += Hex[digest[i] & 0x0f];
        }
        return out;
    }

    auto base64_encode(std::string_view data) -> std::string
    {
        auto out = std::string(4 * ((data.size() + 2) / 3), '\0');
        auto const written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                             reinterpret_cast<const unsigned char*>(data.data()),
                                             static_cast<int>(data.size()));
        out.resize(static_cast<std::size_t>(written));
        return out;
    }

} // namespace crypto

namespace
{

auto is_inline_or_remote(std::string_view source) -> bool
{
    return text::starts_with(source, "http://") || text::starts_with(source, "https://")
           || text::starts_with(source, "data:");
}

auto read_file(const std::string& path) -> std::optional<std::string>
{
    auto in = std::ifstream(path, std::ios::binary);
    if (!in)
        return std::nullopt;
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

auto mime_for(const std::filesystem::path& path) -> std::string
{
    auto ext = text::to_lower(path.extension().string());
    if (ext == ".png")
        return "image/png";
    if (ext == ".jpg" || ext == ".jpeg")
        return "image/jpeg";
    if (ext == ".gif")
        return "image/gif";
    if (ext == ".webp")
        return "image/webp";
    if (ext == ".svg")
        return "image/svg+xml";
    return "application/octet-stream";
}

} // namespace

auto ImageRef::from_scene(Scene scene) -> ImageRef
{
    return ImageRef { .source = {}, .scene = std::make_shared<const Scene>(std::move(scene)) };
}

auto operator==(const ImageRef& a, const ImageRef& b) -> bool
{
    if (a.source != b.source)
        return false;
    if (!a.scene || !b.scene)
        return !a.scene && !b.scene;
    return *a.scene == *b.scene;
}

auto content_digest(const ImageRef& image) -> std::string
{
    if (image.source.empty() && image.scene)
        return crypto::sha256_hex("scene:" + scene_to_json(*image.scene).dump());
    if (!is_inline_or_remote(image.source))
        if (auto bytes = read_file(image.source))
            return crypto::sha256_hex(*bytes);
    return crypto::sha256_hex(image.source);
}

auto to_wire_url(const ImageRef& image) -> Expected<std::string, std::string>
{
    if (image.source.empty())
    {
        if (!image.scene)
            return unexpected(std::string("image has neither a source nor a scene"));
        return "data:image/svg+xml;base64," + crypto::base64_encode(render_scene_svg(*image.scene));
    }
    if (is_inline_or_remote(image.source))
        return image.source;
    auto bytes = read_file(image.source);
    if (!bytes)
        return unexpected("cannot read image file '" + image.source + "'");
    return "data:" + mime_for(image.source) + ";base64," + crypto::base64_encode(*bytes);
}

} // namespace tim
