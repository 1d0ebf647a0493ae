#include "theta_stationary/csv.hpp"

#include "theta_stationary/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace theta_stationary {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_number(const std::string& s, std::size_t line_no) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    double value = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || s.empty()) {
        throw std::runtime_error("csv line " + std::to_string(line_no) + ": not a number: '" + s + "'");
    }
    return value;
}

}  // namespace

void CsvTable::add_row(std::vector<double> row) {
    if (row.size() != columns.size()) throw ConstraintViolation("csv row width does not match the header");
    rows.push_back(std::move(row));
}

const std::string& CsvTable::meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta) {
        if (k == key) return v;
    }
    throw LookupError("csv metadata has no key '" + key + "'");
}

std::size_t CsvTable::column(const std::string& col) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == col) return i;
    }
    throw LookupError("csv has no column '" + col + "'");
}

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

void write_csv(std::ostream& out, const CsvTable& table) {
    for (const auto& [k, v] : table.meta) out << "# " << k << ": " << v << '\n';
    for (std::size_t i = 0; i < table.columns.size(); ++i) out << (i ? "," : "") << table.columns[i];
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_number(row[i]);
        out << '\n';
    }
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write_csv(out, table);
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!have_header && !line.empty() && line.front() == '#') {
            const std::string body = trim(line.substr(1));
            const auto colon = body.find(':');
            if (colon == std::string::npos) {
                table.meta.emplace_back(body, "");
            } else {
                table.meta.emplace_back(trim(body.substr(0, colon)), trim(body.substr(colon + 1)));
            }
            continue;
        }
        if (line.empty()) continue;
        if (!have_header) {
            table.columns = split(line);
            have_header = true;
            continue;
        }
        const auto fields = split(line);
        if (fields.size() != table.columns.size()) {
            throw std::runtime_error("csv line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(table.columns.size()) + " fields");
        }
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) row.push_back(parse_number(f, line_no));
        table.rows.push_back(std::move(row));
    }
    if (!have_header) throw std::runtime_error("csv has no header row");
    return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    CsvTable table = read_csv(in);
    table.name = path.stem().string();
    return table;
}

}  // namespace theta_stationary
