#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace theta_stationary {

/// A numeric table with '#'-prefixed "key: value" metadata lines before the header row.
struct CsvTable {
    std::string name;  ///< file stem when written into a directory
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void add_row(std::vector<double> row);
    /// Value of a metadata key; throws LookupError if absent.
    const std::string& meta_value(const std::string& key) const;
    /// Index of a column; throws LookupError if absent.
    std::size_t column(const std::string& name) const;
};

/// Shortest round-trip decimal form ("inf", "-inf", "nan" for non-finite values).
std::string format_number(double x);

void write_csv(std::ostream& out, const CsvTable& table);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

/// Parses what write_csv produces. Throws std::runtime_error on malformed input.
CsvTable read_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace theta_stationary
