#include "flowmob/io.hpp"

#include <charconv>
#include <fstream>
#include <iterator>

#include "flowmob/common.hpp"

namespace flowmob {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("write to '" + path.string() + "' failed");
}

std::vector<std::uint8_t> encode_document(std::string_view format, int version,
                                          const nlohmann::json& body) {
  nlohmann::json doc;
  doc["format"] = std::string(format);
  doc["version"] = version;
  doc["body"] = body;
  return nlohmann::json::to_cbor(doc);
}

nlohmann::json decode_document(const std::vector<std::uint8_t>& bytes, std::string_view format,
                               int version, const std::filesystem::path& origin) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::from_cbor(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw Error("'" + origin.string() + "' is not a valid " + std::string(format) +
                " file: " + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != format) {
    throw Error("'" + origin.string() + "' is not a " + std::string(format) + " file");
  }
  const int found = doc.value("version", -1);
  if (found != version) {
    throw Error("'" + origin.string() + "' has " + std::string(format) + " version " +
                std::to_string(found) + ", expected " + std::to_string(version));
  }
  return doc.at("body");
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, end);
}

}  // namespace flowmob
