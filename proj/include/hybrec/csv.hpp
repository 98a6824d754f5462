#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace hybrec::csv {

struct Record {
  std::vector<std::string> fields;
  std::size_t line = 0;  // line the record starts on, 1-based
};

// RFC 4180 style reader: comma-delimited, double-quote escaping, quoted
// fields may span lines.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  std::optional<Record> next();

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

std::string escape(const std::string& field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace hybrec::csv
