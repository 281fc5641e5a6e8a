#pragma once

// Tabular exports: comma-separated with '#'-prefixed metadata lines above
// the header, or JSON lines with a leading _meta object. Numbers carry 17
// significant digits so files round-trip and diff bit-exactly.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace l2r {

enum class TableFormat { CSV, JSON_LINES };

inline TableFormat table_format_from_string(const std::string& s) {
    if (s == "csv") return TableFormat::CSV;
    if (s == "json-lines") return TableFormat::JSON_LINES;
    throw std::invalid_argument("unknown table format: '" + s + "' (csv or json-lines)");
}

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

class TableWriter {
public:
    using Cell = std::variant<double, std::int64_t, std::uint64_t, std::string>;

    TableWriter(std::string path, TableFormat fmt, std::vector<std::string> columns)
        : path_(std::move(path)), fmt_(fmt), columns_(std::move(columns)) {}

    void meta(const std::string& key, const std::string& value) { meta_.emplace_back(key, value); }

    void row(std::vector<Cell> cells) {
        if (cells.size() != columns_.size())
            throw std::invalid_argument("TableWriter: row width " + std::to_string(cells.size()) +
                                        " != header width " + std::to_string(columns_.size()));
        rows_.push_back(std::move(cells));
    }

    /// Writes the whole table; returns the path for manifest bookkeeping.
    std::string write() const {
        std::ofstream out(path_, std::ios::binary);
        if (!out) throw std::runtime_error("TableWriter: cannot open '" + path_ + "'");
        if (fmt_ == TableFormat::CSV) {
            for (const auto& [k, v] : meta_) out << "# " << k << ": " << v << "\n";
            for (std::size_t i = 0; i < columns_.size(); ++i)
                out << columns_[i] << (i + 1 < columns_.size() ? "," : "\n");
            for (const auto& r : rows_) {
                for (std::size_t i = 0; i < r.size(); ++i)
                    out << cell_text(r[i]) << (i + 1 < r.size() ? "," : "\n");
            }
        } else {
            out << "{\"_meta\":{";
            for (std::size_t i = 0; i < meta_.size(); ++i)
                out << "\"" << meta_[i].first << "\":\"" << meta_[i].second << "\""
                    << (i + 1 < meta_.size() ? "," : "");
            out << "}}\n";
            for (const auto& r : rows_) {
                out << "{";
                for (std::size_t i = 0; i < r.size(); ++i) {
                    out << "\"" << columns_[i] << "\":" << cell_json(r[i])
                        << (i + 1 < r.size() ? "," : "");
                }
                out << "}\n";
            }
        }
        if (!out) throw std::runtime_error("TableWriter: write failed for '" + path_ + "'");
        return path_;
    }

private:
    static std::string cell_text(const Cell& c) {
        if (const auto* d = std::get_if<double>(&c)) return format_g17(*d);
        if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
        if (const auto* u = std::get_if<std::uint64_t>(&c)) return std::to_string(*u);
        return std::get<std::string>(c);
    }
    static std::string cell_json(const Cell& c) {
        if (std::holds_alternative<std::string>(c)) return "\"" + std::get<std::string>(c) + "\"";
        return cell_text(c);
    }

    std::string path_;
    TableFormat fmt_;
    std::vector<std::string> columns_;
    std::vector<std::pair<std::string, std::string>> meta_;
    std::vector<std::vector<Cell>> rows_;
};

}  // namespace l2r
