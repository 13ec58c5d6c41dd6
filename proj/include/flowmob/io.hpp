#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace flowmob {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Wraps a document as {"format", "version", "body"} and CBOR-encodes it.
std::vector<std::uint8_t> encode_document(std::string_view format, int version,
                                          const nlohmann::json& body);
// Checks format tag and version; throws Error on mismatch.
nlohmann::json decode_document(const std::vector<std::uint8_t>& bytes, std::string_view format,
                               int version, const std::filesystem::path& origin);

/// Shortest representation that parses back to the same double.
std::string format_double(double value);

}  // namespace flowmob
