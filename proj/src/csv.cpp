#include "panelfx/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

namespace panelfx::csv {

std::string format_double(double v) {
    if (std::isnan(v)) return "";
    std::array<char, 40> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::string format_double_fixed(double v, int precision) {
    if (std::isnan(v)) return "";
    std::array<char, 64> buf{};
    int n = std::snprintf(buf.data(), buf.size(), "%.*f", precision, v);
    return std::string(buf.data(), static_cast<std::size_t>(n));
}

int Table::column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == name) return static_cast<int>(j);
    return -1;
}

namespace {

// Splits one physical line; quoted fields may contain commas and doubled
// quotes.  Multi-line quoted fields are not supported (none of our data
// contains embedded newlines).
std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"' && field.empty()) {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    out.push_back(std::move(field));
    return out;
}

bool needs_quoting(const std::string& s) {
    return s.find_first_of(",\"\n") != std::string::npos;
}

}  // namespace

Table parse(std::istream& in) {
    Table t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
        auto fields = split_line(line);
        if (first) {
            // Strip a UTF-8 BOM if present.
            if (!fields.empty() && fields[0].size() >= 3 &&
                fields[0].compare(0, 3, "\xEF\xBB\xBF") == 0)
                fields[0].erase(0, 3);
            t.header = std::move(fields);
            first = false;
        } else {
            t.rows.push_back(std::move(fields));
        }
    }
    return t;
}

void Writer::row(const std::vector<std::string>& fields) {
    for (std::size_t j = 0; j < fields.size(); ++j) {
        if (j) out_ << ',';
        if (needs_quoting(fields[j])) {
            out_ << '"';
            for (char c : fields[j]) {
                if (c == '"') out_ << "\"\"";
                else out_ << c;
            }
            out_ << '"';
        } else {
            out_ << fields[j];
        }
    }
    out_ << '\n';
}

}  // namespace panelfx::csv
