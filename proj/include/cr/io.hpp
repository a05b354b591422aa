#ifndef CR_IO_HPP
#define CR_IO_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace cr {

// Reads the whole file as bytes. Throws IoError when unreadable.
std::string read_file(const std::string& path);

// Writes via a temp file in the same directory plus rename, so readers never
// observe a half-written file.
void write_file_atomic(const std::string& path, const std::string& content);

// Splits on '\n', dropping one trailing '\r' per line. A trailing newline
// does not produce an empty final element.
std::vector<std::string> split_lines(const std::string& content);

std::vector<std::string> split_fields(const std::string& line, char sep);

// Whole-string numeric parsing; `where` prefixes the ParseError message.
double parse_real(const std::string& s, const std::string& where);
std::int64_t parse_int(const std::string& s, const std::string& where);

}  // namespace cr

#endif
