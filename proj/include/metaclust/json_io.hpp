#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

namespace metaclust {

using json = nlohmann::json;

// Serialises `doc` with every floating-point number written at 17
// significant digits, so values round-trip bit-exactly. indent < 0 gives a
// single line.
std::string dump_json(const json& doc, int indent = 2);

json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// "%.17g" with a trailing ".0" when the result would read back as an integer.
std::string format_double(double v);

// Strict integer readers for config values. Negative or fractional input
// throws ConfigError naming `key`.
std::size_t json_count(const json& v, const std::string& key);
std::uint64_t json_u64(const json& v, const std::string& key);

}  // namespace metaclust
