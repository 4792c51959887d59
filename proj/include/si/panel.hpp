#pragma once

// Observed panel data under the pre/post single-intervention layout: every
// unit is under control (intervention 0) for t < t0 and under its assigned
// intervention for t >= t0. Rows are time, columns are units.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "error.hpp"
#include "types.hpp"

namespace si {

class ObservedPanel {
public:
    ObservedPanel(Matrix outcomes, Index t0, std::vector<int> assignments, int num_interventions,
                  std::vector<std::string> unit_labels = {}, std::vector<std::string> time_labels = {})
        : outcomes_(std::move(outcomes)),
          t0_(t0),
          assignments_(std::move(assignments)),
          num_interventions_(num_interventions),
          unit_labels_(std::move(unit_labels)),
          time_labels_(std::move(time_labels)) {
        const Index periods = outcomes_.rows();
        const Index units = outcomes_.cols();
        detail::require(units >= 1, "panel needs at least one unit");
        detail::require(t0_ >= 1 && t0_ < periods, "t0 out of range: need 1 <= t0 < T (t0=" + std::to_string(t0_) +
                                                       ", T=" + std::to_string(periods) + ")");
        detail::require(num_interventions_ >= 1, "number of interventions must be >= 1");
        detail::require(static_cast<Index>(assignments_.size()) == units,
                        "dimension mismatch: " + std::to_string(assignments_.size()) + " assignments for " +
                            std::to_string(units) + " units");
        for (int a : assignments_)
            detail::require(a >= 0 && a < num_interventions_, "assignment id out of range: " + std::to_string(a) +
                                                                  " not in [0, " + std::to_string(num_interventions_) +
                                                                  ")");
        detail::require(outcomes_.allFinite(), "outcomes contain non-finite values");
        if (unit_labels_.empty())
            for (Index n = 0; n < units; ++n) unit_labels_.push_back("unit" + std::to_string(n));
        if (time_labels_.empty())
            for (Index t = 0; t < periods; ++t) time_labels_.push_back(std::to_string(t));
        detail::require(static_cast<Index>(unit_labels_.size()) == units, "unit label count mismatch");
        detail::require(static_cast<Index>(time_labels_.size()) == periods, "time label count mismatch");
    }

    const Matrix& outcomes() const noexcept { return outcomes_; }
    Index num_periods() const noexcept { return outcomes_.rows(); }
    Index num_units() const noexcept { return outcomes_.cols(); }
    Index t0() const noexcept { return t0_; }
    Index t1() const noexcept { return outcomes_.rows() - t0_; }
    int num_interventions() const noexcept { return num_interventions_; }
    int assignment(Index unit) const { return assignments_.at(static_cast<std::size_t>(unit)); }
    const std::vector<int>& assignments() const noexcept { return assignments_; }
    const std::vector<std::string>& unit_labels() const noexcept { return unit_labels_; }
    const std::vector<std::string>& time_labels() const noexcept { return time_labels_; }

    /// Units receiving intervention `d` in the post period, ascending.
    std::vector<Index> donor_group(int d) const {
        std::vector<Index> out;
        for (Index n = 0; n < num_units(); ++n)
            if (assignments_[static_cast<std::size_t>(n)] == d) out.push_back(n);
        return out;
    }

    std::vector<Index> group_sizes() const {
        std::vector<Index> sizes(static_cast<std::size_t>(num_interventions_), 0);
        for (int a : assignments_) ++sizes[static_cast<std::size_t>(a)];
        return sizes;
    }

    Vector pre_column(Index unit) const { return outcomes_.col(unit).head(t0_); }
    Vector post_column(Index unit) const { return outcomes_.col(unit).tail(t1()); }

private:
    Matrix outcomes_;
    Index t0_;
    std::vector<int> assignments_;
    int num_interventions_;
    std::vector<std::string> unit_labels_;
    std::vector<std::string> time_labels_;
};

/// Pre- and post-period outcomes of one donor group; column j of both blocks is unit donor_indices[j].
struct DonorView {
    Matrix pre;
    Matrix post;
    std::vector<Index> donor_indices;

    Index size() const noexcept { return static_cast<Index>(donor_indices.size()); }
};

inline DonorView make_donor_view(const ObservedPanel& panel, std::vector<Index> donors) {
    detail::require(!donors.empty(), "empty donor group");
    DonorView view;
    view.pre.resize(panel.t0(), static_cast<Index>(donors.size()));
    view.post.resize(panel.t1(), static_cast<Index>(donors.size()));
    for (Index j = 0; j < static_cast<Index>(donors.size()); ++j) {
        view.pre.col(j) = panel.outcomes().col(donors[j]).head(panel.t0());
        view.post.col(j) = panel.outcomes().col(donors[j]).tail(panel.t1());
    }
    view.donor_indices = std::move(donors);
    return view;
}

inline DonorView donor_view(const ObservedPanel& panel, int d) {
    detail::require(d >= 0 && d < panel.num_interventions(),
                    "empty donor group: intervention " + std::to_string(d) + " does not exist");
    auto donors = panel.donor_group(d);
    detail::require(!donors.empty(), "empty donor group for intervention " + std::to_string(d));
    return make_donor_view(panel, std::move(donors));
}

/// Donor group of `d` with `excluded` removed (leave-one-out for observed pairs).
inline DonorView donor_view_excluding(const ObservedPanel& panel, int d, Index excluded) {
    auto donors = panel.donor_group(d);
    std::erase(donors, excluded);
    detail::require(!donors.empty(), "empty donor group for intervention " + std::to_string(d) + " after excluding unit " +
                                         std::to_string(excluded));
    return make_donor_view(panel, std::move(donors));
}

enum class SparsityPattern { pre_post_single_intervention, subset_of_interventions };

inline const char* to_string(SparsityPattern p) {
    return p == SparsityPattern::pre_post_single_intervention ? "pre_post_single_intervention"
                                                              : "subset_of_interventions";
}

/// Observed-cell mask over the periods x units x interventions tensor.
struct SparsityLayout {
    SparsityPattern pattern = SparsityPattern::pre_post_single_intervention;
    Index periods = 0;
    Index units = 0;
    int interventions = 0;
    std::vector<std::uint8_t> mask;  // index (d * units + n) * periods + t

    std::size_t offset(Index t, Index n, int d) const {
        return static_cast<std::size_t>((static_cast<Index>(d) * units + n) * periods + t);
    }
    bool observed(Index t, Index n, int d) const { return mask[offset(t, n, d)] != 0; }

    Index observed_count() const {
        return static_cast<Index>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
    }

    double slice_density(int d) const {
        Index count = 0;
        for (Index n = 0; n < units; ++n)
            for (Index t = 0; t < periods; ++t) count += observed(t, n, d);
        return static_cast<double>(count) / static_cast<double>(periods * units);
    }

    /// Unobserved cells of unit n at periods t >= from (from = t0 counts post cells only).
    Index missing_for_unit(Index n, Index from = 0) const {
        Index count = 0;
        for (int d = 0; d < interventions; ++d)
            for (Index t = from; t < periods; ++t) count += !observed(t, n, d);
        return count;
    }
};

/// Pattern 1: (t, n, d) observed iff (t < t0 and d = 0) or (t >= t0 and d = assignment(n)).
inline SparsityLayout layout_mask(const ObservedPanel& panel) {
    SparsityLayout layout;
    layout.pattern = SparsityPattern::pre_post_single_intervention;
    layout.periods = panel.num_periods();
    layout.units = panel.num_units();
    layout.interventions = panel.num_interventions();
    layout.mask.assign(static_cast<std::size_t>(layout.periods * layout.units * layout.interventions), 0);
    for (Index n = 0; n < layout.units; ++n)
        for (Index t = 0; t < layout.periods; ++t) {
            const int d = t < panel.t0() ? 0 : panel.assignment(n);
            layout.mask[layout.offset(t, n, d)] = 1;
        }
    return layout;
}

/// Pattern 2: no pre/post split; unit n is observed over all periods under each intervention in received[n].
inline SparsityLayout subset_layout(Index periods, int interventions, const std::vector<std::vector<int>>& received) {
    SparsityLayout layout;
    layout.pattern = SparsityPattern::subset_of_interventions;
    layout.periods = periods;
    layout.units = static_cast<Index>(received.size());
    layout.interventions = interventions;
    layout.mask.assign(static_cast<std::size_t>(periods * layout.units * interventions), 0);
    for (Index n = 0; n < layout.units; ++n)
        for (int d : received[static_cast<std::size_t>(n)]) {
            detail::require(d >= 0 && d < interventions, "assignment id out of range");
            for (Index t = 0; t < periods; ++t) layout.mask[layout.offset(t, n, d)] = 1;
        }
    return layout;
}

namespace detail {

inline bool is_time_header(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s.empty() || s == "time" || s == "t" || s == "period";
}

struct Table {
    Matrix values;
    std::vector<std::string> unit_labels;
    std::vector<std::string> time_labels;
};

inline Table read_outcome_table(const std::filesystem::path& path) {
    const auto rows = csv::read_rows(path);
    detail::require(!rows.empty(), "outcome file is empty: " + path.string());

    const auto& first = rows.front();
    const bool has_header = !std::all_of(first.begin(), first.end(), [](const std::string& f) { return csv::is_number(f); });
    const bool has_time_column = has_header && is_time_header(first.front());
    const std::size_t col0 = has_time_column ? 1 : 0;
    const std::size_t width = first.size() - col0;
    detail::require(width >= 1, "outcome file has no unit columns: " + path.string());

    Table table;
    if (has_header) table.unit_labels.assign(first.begin() + static_cast<std::ptrdiff_t>(col0), first.end());
    const std::size_t body = has_header ? 1 : 0;
    const auto periods = static_cast<Index>(rows.size() - body);
    detail::require(periods >= 1, "outcome file has no data rows: " + path.string());
    table.values.resize(periods, static_cast<Index>(width));
    for (std::size_t r = body; r < rows.size(); ++r) {
        const auto& row = rows[r];
        detail::require(row.size() == first.size(), "dimension mismatch in " + path.string() + " line " +
                                                       std::to_string(r + 1) + ": expected " +
                                                       std::to_string(first.size()) + " fields, got " +
                                                       std::to_string(row.size()));
        if (has_time_column) table.time_labels.push_back(row.front());
        for (std::size_t c = 0; c < width; ++c) {
            const std::string where = path.filename().string() + ":" + std::to_string(r + 1) + ":" + std::to_string(c + col0 + 1);
            table.values(static_cast<Index>(r - body), static_cast<Index>(c)) = csv::parse_double(row[c + col0], where);
        }
    }
    return table;
}

}  // namespace detail

/// Read a panel. `post_path`, when given, holds the post-period rows with the
/// same unit columns; it is appended below the outcome table, and t0 must then
/// equal the outcome table's row count. `num_interventions` defaults to
/// 1 + the largest assignment id.
inline ObservedPanel load_panel(const std::filesystem::path& outcome_path, const std::filesystem::path& assignment_path,
                                Index t0, const std::optional<std::filesystem::path>& post_path = std::nullopt,
                                std::optional<int> num_interventions = std::nullopt) {
    auto table = detail::read_outcome_table(outcome_path);
    if (post_path) {
        auto post = detail::read_outcome_table(*post_path);
        detail::require(post.values.cols() == table.values.cols(),
                        "dimension mismatch: post table has " + std::to_string(post.values.cols()) + " units, pre table " +
                            std::to_string(table.values.cols()));
        detail::require(t0 == table.values.rows(), "t0 must equal the pre table's row count when a post table is given");
        Matrix joined(table.values.rows() + post.values.rows(), table.values.cols());
        joined << table.values, post.values;
        table.values = std::move(joined);
        if (!table.time_labels.empty() && !post.time_labels.empty())
            table.time_labels.insert(table.time_labels.end(), post.time_labels.begin(), post.time_labels.end());
        else
            table.time_labels.clear();
    }
    const Index units = table.values.cols();
    if (table.unit_labels.empty())
        for (Index n = 0; n < units; ++n) table.unit_labels.push_back("unit" + std::to_string(n));

    std::unordered_map<std::string, Index> by_label;
    for (Index n = 0; n < units; ++n) by_label.emplace(table.unit_labels[static_cast<std::size_t>(n)], n);

    const auto rows = csv::read_rows(assignment_path);
    detail::require(!rows.empty(), "assignment file is empty: " + assignment_path.string());
    std::size_t start = 0;
    if (rows.front().size() >= 2 && !csv::is_number(rows.front()[1])) start = 1;

    std::vector<int> assignments(static_cast<std::size_t>(units), -1);
    int max_id = 0;
    for (std::size_t r = start; r < rows.size(); ++r) {
        const auto& row = rows[r];
        detail::require(row.size() == 2, "assignment file line " + std::to_string(r + 1) + ": expected unit,intervention");
        Index unit = -1;
        if (auto it = by_label.find(row[0]); it != by_label.end()) {
            unit = it->second;
        } else if (csv::is_number(row[0])) {
            const double v = csv::parse_double(row[0], "assignment unit");
            if (v >= 0 && v < static_cast<double>(units) && v == static_cast<double>(static_cast<Index>(v)))
                unit = static_cast<Index>(v);
        }
        detail::require(unit >= 0, "assignment file line " + std::to_string(r + 1) + ": unknown unit '" + row[0] + "'");
        const double id = csv::parse_double(row[1], "assignment file line " + std::to_string(r + 1));
        detail::require(id >= 0 && id == static_cast<double>(static_cast<int>(id)),
                        "assignment id out of range: '" + row[1] + "' is not a non-negative integer");
        auto& slot = assignments[static_cast<std::size_t>(unit)];
        detail::require(slot == -1, "unit '" + row[0] + "' assigned twice");
        slot = static_cast<int>(id);
        max_id = std::max(max_id, slot);
    }
    for (Index n = 0; n < units; ++n)
        detail::require(assignments[static_cast<std::size_t>(n)] >= 0,
                        "dimension mismatch: unit '" + table.unit_labels[static_cast<std::size_t>(n)] + "' has no assignment");

    const int d = num_interventions.value_or(max_id + 1);
    return ObservedPanel(std::move(table.values), t0, std::move(assignments), d, std::move(table.unit_labels),
                         std::move(table.time_labels));
}

inline void write_panel(const ObservedPanel& panel, const std::filesystem::path& outcome_path,
                        const std::filesystem::path& assignment_path) {
    std::vector<csv::Row> rows;
    csv::Row header{"time"};
    header.insert(header.end(), panel.unit_labels().begin(), panel.unit_labels().end());
    rows.push_back(std::move(header));
    for (Index t = 0; t < panel.num_periods(); ++t) {
        csv::Row row{panel.time_labels()[static_cast<std::size_t>(t)]};
        for (Index n = 0; n < panel.num_units(); ++n) row.push_back(csv::format_double(panel.outcomes()(t, n)));
        rows.push_back(std::move(row));
    }
    csv::write_rows(outcome_path, rows);

    std::vector<csv::Row> assign{{"unit", "intervention"}};
    for (Index n = 0; n < panel.num_units(); ++n)
        assign.push_back({panel.unit_labels()[static_cast<std::size_t>(n)], std::to_string(panel.assignment(n))});
    csv::write_rows(assignment_path, assign);
}

inline nlohmann::json panel_metadata(const ObservedPanel& panel) {
    return {{"T", panel.num_periods()},
            {"T0", panel.t0()},
            {"T1", panel.t1()},
            {"N", panel.num_units()},
            {"D", panel.num_interventions()},
            {"group_sizes", panel.group_sizes()}};
}

}  // namespace si
