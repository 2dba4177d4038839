#include "panelfx/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "panelfx/csv.hpp"
#include "panelfx/error.hpp"

namespace panelfx {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int raw_column_index(const std::string& name) {
    for (std::size_t j = 0; j < kRawColumns.size(); ++j)
        if (name == kRawColumns[j]) return static_cast<int>(j);
    return -1;
}

// Keeps warning lists readable when a file is systematically broken.
void push_warning(std::vector<std::string>& warnings, std::string msg) {
    constexpr std::size_t kMaxWarnings = 20;
    if (warnings.size() < kMaxWarnings) {
        warnings.push_back(std::move(msg));
    } else if (warnings.size() == kMaxWarnings) {
        warnings.push_back("... further warnings suppressed");
    }
}

}  // namespace

FirmYear::FirmYear() { values.fill(kNaN); }

double& FirmYear::value(const std::string& column) {
    int j = raw_column_index(column);
    if (j < 0) throw config_error("unknown panel column '" + column + "'");
    return values[static_cast<std::size_t>(j)];
}

PanelDataset PanelDataset::build(std::vector<FirmYear> rows, PanelConfig config) {
    std::sort(rows.begin(), rows.end(), [](const FirmYear& a, const FirmYear& b) {
        if (a.firm_id != b.firm_id) return a.firm_id < b.firm_id;
        return a.year < b.year;
    });

    // Duplicate (firm, year) pairs are unrecoverable: aggregation choice
    // would silently change every downstream estimate.
    std::vector<std::string> duplicates;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].firm_id == rows[r - 1].firm_id && rows[r].year == rows[r - 1].year)
            duplicates.push_back(rows[r].firm_id + "/" + std::to_string(rows[r].year));
    }
    if (!duplicates.empty()) {
        std::string msg = "duplicate firm-year rows:";
        for (std::size_t i = 0; i < duplicates.size() && i < 10; ++i)
            msg += " " + duplicates[i];
        if (duplicates.size() > 10)
            msg += " (+" + std::to_string(duplicates.size() - 10) + " more)";
        throw data_error(msg);
    }

    PanelDataset p;
    p.config_ = config;
    for (auto& col : p.raw_) col.reserve(rows.size());
    p.row_firm_.reserve(rows.size());
    p.row_year_.reserve(rows.size());

    for (std::size_t r = 0; r < rows.size(); ++r) {
        const FirmYear& row = rows[r];
        if (row.year < config.year_min || row.year > config.year_max)
            throw data_error("firm " + row.firm_id + " year " +
                             std::to_string(row.year) + " outside panel window " +
                             std::to_string(config.year_min) + "-" +
                             std::to_string(config.year_max));
        bool new_firm = p.firm_ids_.empty() || p.firm_ids_.back() != row.firm_id;
        if (new_firm) {
            p.firm_ids_.push_back(row.firm_id);
            p.treated_.push_back(row.treated ? 1 : 0);
            p.industry_.push_back(row.industry);
            p.firm_start_.push_back(r);
        } else {
            std::uint32_t f = static_cast<std::uint32_t>(p.firm_ids_.size() - 1);
            if ((p.treated_[f] != 0) != row.treated)
                throw data_error("treatment flag varies over time for firm " +
                                 row.firm_id);
            if (p.industry_[f] != row.industry)
                throw data_error("industry code varies over time for firm " +
                                 row.firm_id);
        }
        p.row_firm_.push_back(static_cast<std::uint32_t>(p.firm_ids_.size() - 1));
        p.row_year_.push_back(row.year);
        for (std::size_t j = 0; j < kRawColumns.size(); ++j)
            p.raw_[j].push_back(row.values[j]);
    }
    p.firm_start_.push_back(rows.size());
    return p;
}

std::optional<std::uint32_t> PanelDataset::find_firm(const std::string& firm_id) const {
    auto it = std::lower_bound(firm_ids_.begin(), firm_ids_.end(), firm_id);
    if (it == firm_ids_.end() || *it != firm_id) return std::nullopt;
    return static_cast<std::uint32_t>(it - firm_ids_.begin());
}

std::vector<int> PanelDataset::distinct_industries() const {
    std::vector<int> out(industry_);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::optional<std::size_t> PanelDataset::find_row(std::uint32_t firm, int year) const {
    auto [lo, hi] = firm_rows(firm);
    auto first = row_year_.begin() + static_cast<std::ptrdiff_t>(lo);
    auto last = row_year_.begin() + static_cast<std::ptrdiff_t>(hi);
    auto it = std::lower_bound(first, last, year);
    if (it == last || *it != year) return std::nullopt;
    return static_cast<std::size_t>(it - row_year_.begin());
}

bool PanelDataset::has_column(const std::string& name) const {
    if (raw_column_index(name) >= 0) return true;
    for (const auto& [n, _] : derived_)
        if (n == name) return true;
    return false;
}

std::span<const double> PanelDataset::column(const std::string& name) const {
    int j = raw_column_index(name);
    if (j >= 0) return raw_[static_cast<std::size_t>(j)];
    for (const auto& [n, col] : derived_)
        if (n == name) return col;
    throw config_error("unknown panel column '" + name + "'");
}

double PanelDataset::value(std::size_t row, const std::string& name) const {
    return column(name)[row];
}

std::vector<std::string> PanelDataset::column_names() const {
    std::vector<std::string> out(kRawColumns.begin(), kRawColumns.end());
    for (const auto& [n, _] : derived_) out.push_back(n);
    return out;
}

PanelDataset derive_variables(const PanelDataset& panel, DeriveReport* report) {
    DeriveReport local;
    DeriveReport& rep = report ? *report : local;
    rep = DeriveReport{};

    PanelDataset out = panel;
    out.derived_.clear();
    const std::size_t n = panel.n_rows();
    auto output = panel.column("output");
    auto exports = panel.column("exports");
    auto co2 = panel.column("co2");
    auto energy = panel.column("energy_total");
    auto elec = panel.column("electricity");

    std::vector<double> intensity(n, kNaN), share(n, kNaN), eprim(n, kNaN);
    for (std::size_t r = 0; r < n; ++r) {
        if (std::isfinite(output[r]) && output[r] > 0.0) {
            if (std::isfinite(co2[r]))
                intensity[r] = co2[r] * 1e6 / output[r];
            if (std::isfinite(exports[r])) {
                share[r] = exports[r] / output[r];
                if (share[r] > 1.0) ++rep.share_above_one;
            }
        } else if (std::isfinite(co2[r]) || std::isfinite(exports[r])) {
            ++rep.intensity_undefined;
        }
        if (std::isfinite(energy[r]) && std::isfinite(elec[r])) {
            double v = energy[r] - elec[r];
            if (v >= 0.0) {
                eprim[r] = v;
            } else {
                ++rep.eprimary_negative;
            }
        }
    }
    out.derived_.emplace_back(kDerivedColumns[0], std::move(intensity));
    out.derived_.emplace_back(kDerivedColumns[1], std::move(share));
    out.derived_.emplace_back(kDerivedColumns[2], std::move(eprim));
    return out;
}

std::vector<FirmYear> to_rows(const PanelDataset& panel) {
    std::vector<FirmYear> rows(panel.n_rows());
    for (std::size_t r = 0; r < panel.n_rows(); ++r) {
        FirmYear& row = rows[r];
        std::uint32_t f = panel.row_firm(r);
        row.firm_id = panel.firm_id(f);
        row.year = panel.row_year(r);
        row.industry = panel.firm_industry(f);
        row.treated = panel.firm_treated(f);
        for (std::size_t j = 0; j < kRawColumns.size(); ++j)
            row.values[j] = panel.column(kRawColumns[j])[r];
    }
    return rows;
}

// --- CSV --------------------------------------------------------------------

namespace {

std::string mapped_name(const std::map<std::string, std::string>& mapping,
                        const std::string& canonical) {
    auto it = mapping.find(canonical);
    return it == mapping.end() ? canonical : it->second;
}

bool parse_double_field(const std::string& text, double& out) {
    const char* begin = text.data();
    const char* end = begin + text.size();
    while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end != begin && (end[-1] == ' ' || end[-1] == '\t')) --end;
    if (begin == end) {
        out = kNaN;
        return true;  // empty = missing, not an error
    }
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end;
}

bool parse_int_field(const std::string& text, long& out) {
    const char* begin = text.data();
    const char* end = begin + text.size();
    while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end != begin && (end[-1] == ' ' || end[-1] == '\t')) --end;
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return begin != end && ec == std::errc() && ptr == end;
}

}  // namespace

PanelDataset ingest_csv(std::istream& in, PanelConfig config,
                        const std::map<std::string, std::string>& column_mapping,
                        IngestReport* report) {
    IngestReport local;
    IngestReport& rep = report ? *report : local;
    rep = IngestReport{};

    csv::Table table = csv::parse(in);
    if (table.header.empty()) throw data_error("input CSV is empty");

    const int c_firm = table.column(mapped_name(column_mapping, "firm_id"));
    const int c_year = table.column(mapped_name(column_mapping, "year"));
    const int c_treated = table.column(mapped_name(column_mapping, "treated"));
    const int c_industry = table.column(mapped_name(column_mapping, "industry"));
    if (c_firm < 0) throw data_error("mandatory column 'firm_id' not found");
    if (c_year < 0) throw data_error("mandatory column 'year' not found");
    if (c_treated < 0) throw data_error("mandatory column 'treated' not found");

    std::array<int, kRawColumns.size()> c_raw;
    for (std::size_t j = 0; j < kRawColumns.size(); ++j) {
        c_raw[j] = table.column(mapped_name(column_mapping, kRawColumns[j]));
        if (c_raw[j] < 0)
            push_warning(rep.warnings, std::string("column '") + kRawColumns[j] +
                                           "' not found; treated as all-missing");
    }

    std::vector<FirmYear> rows;
    rows.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& fields = table.rows[r];
        ++rep.rows_read;
        auto field = [&](int c) -> const std::string& {
            static const std::string empty;
            return (c >= 0 && static_cast<std::size_t>(c) < fields.size())
                       ? fields[static_cast<std::size_t>(c)]
                       : empty;
        };

        FirmYear row;
        row.firm_id = field(c_firm);
        if (row.firm_id.empty())
            throw data_error("row " + std::to_string(r + 2) + ": empty firm_id");

        long year = 0;
        if (!parse_int_field(field(c_year), year))
            throw data_error("row " + std::to_string(r + 2) + ": bad year '" +
                             field(c_year) + "'");
        row.year = static_cast<int>(year);
        if (row.year < config.year_min || row.year > config.year_max) {
            ++rep.rows_outside_window;
            continue;
        }

        const std::string& treat_text = field(c_treated);
        if (treat_text == "1") {
            row.treated = true;
        } else if (treat_text == "0") {
            row.treated = false;
        } else {
            throw data_error("row " + std::to_string(r + 2) +
                             ": treated flag must be 0 or 1, got '" + treat_text +
                             "'");
        }

        if (c_industry >= 0 && !field(c_industry).empty()) {
            long ind = 0;
            if (!parse_int_field(field(c_industry), ind))
                throw data_error("row " + std::to_string(r + 2) +
                                 ": bad industry '" + field(c_industry) + "'");
            row.industry = static_cast<int>(ind);
        }

        for (std::size_t j = 0; j < kRawColumns.size(); ++j) {
            if (c_raw[j] < 0) continue;
            double v = kNaN;
            if (!parse_double_field(field(c_raw[j]), v)) {
                ++rep.bad_numeric_fields;
                push_warning(rep.warnings,
                             "row " + std::to_string(r + 2) + ": unparseable " +
                                 kRawColumns[j] + " '" + field(c_raw[j]) +
                                 "' treated as missing");
                v = kNaN;
            } else if (std::isfinite(v) && v < 0.0) {
                // All raw variables are magnitudes; negatives are recorder
                // artifacts and would corrupt logs downstream.
                ++rep.negative_fields;
                push_warning(rep.warnings,
                             "row " + std::to_string(r + 2) + ": negative " +
                                 kRawColumns[j] + " treated as missing");
                v = kNaN;
            }
            row.values[j] = v;
        }

        // Energy mix should not exceed the reported total.
        double mix = 0.0;
        bool any_mix = false;
        for (const char* part : {"electricity", "gas", "oil", "other_primary"}) {
            double v = row.values[static_cast<std::size_t>(raw_column_index(part))];
            if (std::isfinite(v)) {
                mix += v;
                any_mix = true;
            }
        }
        double total = row.values[static_cast<std::size_t>(raw_column_index("energy_total"))];
        if (any_mix && std::isfinite(total) &&
            mix > total * (1.0 + config.energy_sum_tolerance) + 1e-9) {
            ++rep.energy_mix_violations;
            push_warning(rep.warnings, "row " + std::to_string(r + 2) +
                                           ": energy mix exceeds energy_total");
        }

        rows.push_back(std::move(row));
        ++rep.rows_kept;
    }

    return PanelDataset::build(std::move(rows), config);
}

PanelDataset ingest_csv_file(const std::string& path, PanelConfig config,
                             const std::map<std::string, std::string>& column_mapping,
                             IngestReport* report) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open input file '" + path + "'");
    return ingest_csv(in, config, column_mapping, report);
}

void write_csv(const PanelDataset& panel, std::ostream& out) {
    csv::Writer w(out);
    std::vector<std::string> header = {"firm_id", "year", "industry", "treated"};
    for (const char* name : kRawColumns) header.emplace_back(name);
    w.row(header);

    std::vector<std::string> fields(header.size());
    for (std::size_t r = 0; r < panel.n_rows(); ++r) {
        std::uint32_t f = panel.row_firm(r);
        fields[0] = panel.firm_id(f);
        fields[1] = std::to_string(panel.row_year(r));
        fields[2] = panel.firm_industry(f) < 0
                        ? std::string()
                        : std::to_string(panel.firm_industry(f));
        fields[3] = panel.firm_treated(f) ? "1" : "0";
        for (std::size_t j = 0; j < kRawColumns.size(); ++j)
            fields[4 + j] = csv::format_double(panel.column(kRawColumns[j])[r]);
        w.row(fields);
    }
}

void write_csv_file(const PanelDataset& panel, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open output file '" + path + "'");
    write_csv(panel, out);
    out.flush();
    if (!out) throw data_error("error writing output file '" + path + "'");
}

// --- log-scale helpers --------------------------------------------------------

double log_value(const PanelDataset& panel, std::size_t row,
                 const std::string& column) {
    double v = panel.value(row, column);
    return (std::isfinite(v) && v > 0.0) ? std::log(v) : kNaN;
}

double log_diff(const PanelDataset& panel, std::uint32_t firm,
                const std::string& column, int year, int base_year) {
    auto r1 = panel.find_row(firm, year);
    auto r0 = panel.find_row(firm, base_year);
    if (!r1 || !r0) return kNaN;
    return log_value(panel, *r1, column) - log_value(panel, *r0, column);
}

double phase_mean_log(const PanelDataset& panel, std::uint32_t firm,
                      const std::string& column, const PhaseWindow& window) {
    auto [lo, hi] = panel.firm_rows(firm);
    double sum = 0.0;
    int n = 0;
    for (std::size_t r = lo; r < hi; ++r) {
        if (!window.contains(panel.row_year(r))) continue;
        double lv = log_value(panel, r, column);
        if (std::isfinite(lv)) {
            sum += lv;
            ++n;
        }
    }
    return n ? sum / n : kNaN;
}

double phase_log_diff(const PanelDataset& panel, std::uint32_t firm,
                      const std::string& column, const PhaseWindow& window,
                      int base_year) {
    auto r0 = panel.find_row(firm, base_year);
    if (!r0) return kNaN;
    double base = log_value(panel, *r0, column);
    double post = phase_mean_log(panel, firm, column, window);
    return post - base;  // NaN propagates
}

}  // namespace panelfx
