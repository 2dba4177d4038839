#pragma once

// Minimal CSV layer shared by panel ingestion and report emission.
// Conventions: UTF-8, comma separator, header row, empty field = missing,
// '.' decimal separator.  Doubles are written with the shortest
// representation that round-trips (std::to_chars).

#include <iosfwd>
#include <string>
#include <vector>

namespace panelfx::csv {

// "" for NaN, shortest round-trip text otherwise.
std::string format_double(double v);
std::string format_double_fixed(double v, int precision);

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 if absent
};

Table parse(std::istream& in);

class Writer {
  public:
    explicit Writer(std::ostream& out) : out_(out) {}
    void row(const std::vector<std::string>& fields);

  private:
    std::ostream& out_;
};

}  // namespace panelfx::csv
