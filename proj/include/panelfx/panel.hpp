#pragma once

// Firm-year panel container.
//
// Storage is column-major: one contiguous double vector per variable, rows
// sorted by (firm_id, year) so each firm occupies a contiguous row range.
// Missing values are quiet NaN.  Treatment status and industry code are
// firm-level attributes (validated to be time-invariant at construction).

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace panelfx {

struct PhaseWindow {
    std::string label;
    int first = 0;
    int last = 0;

    bool contains(int year) const { return year >= first && year <= last; }
    int n_years() const { return last - first + 1; }
};

struct PanelConfig {
    int year_min = 2002;
    int year_max = 2012;
    int base_year = 2004;  // pre-treatment reference year t'
    PhaseWindow pretreatment{"pretreatment", 2003, 2004};
    PhaseWindow phase1{"phase1", 2005, 2007};
    PhaseWindow phase2{"phase2", 2008, 2010};
    // The efficiency analysis extends the second phase to the panel end.
    PhaseWindow phase2_extended{"phase2", 2008, 2012};
    // Relative slack allowed when checking that the energy mix does not
    // exceed the reported total.
    double energy_sum_tolerance = 1e-6;
};

// Raw numeric columns, in canonical order.  Monetary values are thousands
// of EUR, energy in MWh, co2 in tonnes.
inline constexpr std::array<const char*, 11> kRawColumns = {
    "output",      "exports", "employees",     "avg_wage",
    "capital",     "energy_total", "electricity", "gas",
    "oil",         "other_primary", "co2",
};

// Derived columns appended by derive_variables, in canonical order:
//   co2_intensity  = co2 * 1e6 / output      (grams per EUR of output)
//   export_share   = exports / output
//   eprimary       = energy_total - electricity (non-electric energy, MWh)
inline constexpr std::array<const char*, 3> kDerivedColumns = {
    "co2_intensity",
    "export_share",
    "eprimary",
};

struct FirmYear {
    std::string firm_id;
    int year = 0;
    int industry = -1;  // 2-digit code; -1 when not reported
    bool treated = false;
    // Raw variables in kRawColumns order; NaN = missing.
    std::array<double, kRawColumns.size()> values;

    FirmYear();
    double& value(const std::string& column);
};

struct IngestReport {
    std::size_t rows_read = 0;
    std::size_t rows_kept = 0;
    std::size_t rows_outside_window = 0;   // dropped, counted here
    std::size_t bad_numeric_fields = 0;    // unparseable -> missing
    std::size_t negative_fields = 0;       // negative magnitude -> missing
    std::size_t energy_mix_violations = 0; // mix sum exceeds reported total
    std::vector<std::string> warnings;     // human-readable, bounded
};

class PanelDataset {
  public:
    // Validates and indexes the rows.  Throws ErrorKind::data on duplicate
    // (firm, year) pairs or treatment/industry flags varying within a firm.
    static PanelDataset build(std::vector<FirmYear> rows, PanelConfig config);

    const PanelConfig& config() const { return config_; }

    // --- firm-level view ------------------------------------------------
    std::size_t n_firms() const { return firm_ids_.size(); }
    const std::string& firm_id(std::uint32_t f) const { return firm_ids_[f]; }
    bool firm_treated(std::uint32_t f) const { return treated_[f] != 0; }
    int firm_industry(std::uint32_t f) const { return industry_[f]; }
    // Contiguous row range [first, last) of firm f.
    std::pair<std::size_t, std::size_t> firm_rows(std::uint32_t f) const {
        return {firm_start_[f], firm_start_[f + 1]};
    }
    // Index of the firm with this id, if present.
    std::optional<std::uint32_t> find_firm(const std::string& firm_id) const;
    std::vector<int> distinct_industries() const;  // sorted ascending

    // --- row-level view -------------------------------------------------
    std::size_t n_rows() const { return row_year_.size(); }
    std::uint32_t row_firm(std::size_t r) const { return row_firm_[r]; }
    int row_year(std::size_t r) const { return row_year_[r]; }
    int row_industry(std::size_t r) const { return industry_[row_firm_[r]]; }
    bool row_treated(std::size_t r) const { return treated_[row_firm_[r]] != 0; }
    std::optional<std::size_t> find_row(std::uint32_t firm, int year) const;

    // --- columns ----------------------------------------------------------
    bool has_column(const std::string& name) const;
    std::span<const double> column(const std::string& name) const;
    double value(std::size_t row, const std::string& column) const;
    // Raw columns, then any derived columns present.
    std::vector<std::string> column_names() const;

    bool has_derived() const { return !derived_.empty(); }

  private:
    friend PanelDataset derive_variables(const PanelDataset&,
                                         struct DeriveReport*);
    PanelDataset() = default;

    PanelConfig config_;
    // firm-level
    std::vector<std::string> firm_ids_;
    std::vector<std::uint8_t> treated_;
    std::vector<int> industry_;
    std::vector<std::size_t> firm_start_;  // n_firms + 1 offsets
    // row-level
    std::vector<std::uint32_t> row_firm_;
    std::vector<int> row_year_;
    std::array<std::vector<double>, kRawColumns.size()> raw_;
    std::vector<std::pair<std::string, std::vector<double>>> derived_;
};

struct DeriveReport {
    std::size_t intensity_undefined = 0;  // output missing or <= 0
    std::size_t share_above_one = 0;      // exports exceed output
    std::size_t eprimary_negative = 0;    // electricity above total -> missing
};

// Returns a copy with co2_intensity, export_share and eprimary columns
// recomputed from the raw columns.  Idempotent.
PanelDataset derive_variables(const PanelDataset& panel,
                              DeriveReport* report = nullptr);

// Raw rows in storage order; build(to_rows(p), p.config()) reproduces the
// raw part of p exactly.
std::vector<FirmYear> to_rows(const PanelDataset& panel);

// --- CSV ------------------------------------------------------------------

// Reads a firm-year CSV.  `column_mapping` renames dataset headers to
// canonical names (key = canonical, value = header in the file); canonical
// names are used directly when no mapping entry is present.  Mandatory
// columns: firm_id, year, treated.  Throws ErrorKind::data on structural
// problems; soft issues land in the report.
PanelDataset ingest_csv(std::istream& in, PanelConfig config,
                        const std::map<std::string, std::string>& column_mapping,
                        IngestReport* report = nullptr);
PanelDataset ingest_csv_file(const std::string& path, PanelConfig config,
                             const std::map<std::string, std::string>& column_mapping,
                             IngestReport* report = nullptr);

// Writes firm_id, year, industry, treated and the raw columns.  Derived
// columns are omitted (they are recomputable).  Ingesting the output
// reproduces the raw dataset exactly.
void write_csv(const PanelDataset& panel, std::ostream& out);
void write_csv_file(const PanelDataset& panel, const std::string& path);

// --- log-scale helpers ------------------------------------------------------

// ln of the value when present and strictly positive, else NaN.
double log_value(const PanelDataset& panel, std::size_t row,
                 const std::string& column);

// ln X_{f,year} - ln X_{f,base_year}; NaN when either log is undefined.
double log_diff(const PanelDataset& panel, std::uint32_t firm,
                const std::string& column, int year, int base_year);

// Mean of ln X over the firm's rows inside the window (years with an
// undefined log are skipped); NaN when no year contributes.
double phase_mean_log(const PanelDataset& panel, std::uint32_t firm,
                      const std::string& column, const PhaseWindow& window);

// phase_mean_log(window) - ln X_{f,base_year}; the outcome contrast used by
// the difference-in-differences estimators.  NaN when either part is
// undefined.
double phase_log_diff(const PanelDataset& panel, std::uint32_t firm,
                      const std::string& column, const PhaseWindow& window,
                      int base_year);

}  // namespace panelfx
