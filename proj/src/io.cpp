#include "glf/io.hpp"

#include "glf/error.hpp"

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace glf {
namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

class CsvReader {
public:
    explicit CsvReader(const fs::path& file) : file_(file), in_(file)
    {
        if (!in_) {
            throw DataError("cannot open " + file.string());
        }
        std::string line;
        if (!std::getline(in_, line)) {
            throw DataError(file.string() + ": missing header row");
        }
        if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
            line.erase(0, 3);
        }
        header_ = split_csv_line(line);
        for (auto& h : header_) {
            h = std::string(trim(h));
        }
    }

    const std::vector<std::string>& header() const { return header_; }

    std::size_t column(std::string_view name) const
    {
        for (std::size_t j = 0; j < header_.size(); ++j) {
            if (lower(header_[j]) == name) {
                return j;
            }
        }
        throw DataError(fmt::format("{}: missing column '{}'", file_.string(), name));
    }

    /// False at end of file; skips blank lines.
    bool next(std::vector<std::string>& fields)
    {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (trim(line).empty()) {
                continue;
            }
            fields = split_csv_line(line);
            if (fields.size() != header_.size()) {
                throw DataError(fmt::format("{}:{}: expected {} fields, found {}", file_.string(), line_no_ + 1,
                                            header_.size(), fields.size()));
            }
            return true;
        }
        return false;
    }

    std::string where() const { return fmt::format("{}:{}", file_.string(), line_no_ + 1); }

private:
    fs::path file_;
    std::ifstream in_;
    std::vector<std::string> header_;
    std::size_t line_no_ = 0;
};

std::ofstream open_out(const fs::path& file)
{
    std::ofstream out(file, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + file.string());
    }
    return out;
}

void flush_buffer(std::ofstream& out, fmt::memory_buffer& buf)
{
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    buf.clear();
}

}  // namespace

std::vector<std::string> split_csv_line(std::string_view line)
{
    if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
    }
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

std::string format_double(double v)
{
    return fmt::format("{}", v);
}

double parse_double(std::string_view text, std::string_view what)
{
    text = trim(text);
    if (!text.empty() && text.front() == '+') {
        text.remove_prefix(1);
    }
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        const std::string t = lower(text);
        if (t == "nan" || t == "inf" || t == "-inf") {
            return t == "nan" ? std::numeric_limits<double>::quiet_NaN()
                              : (t[0] == '-' ? -std::numeric_limits<double>::infinity()
                                             : std::numeric_limits<double>::infinity());
        }
        throw DataError(fmt::format("{}: '{}' is not a number", what, text));
    }
    return v;
}

// ---------------------------------------------------------------- config

KeyValueConfig KeyValueConfig::parse(std::string_view text)
{
    std::map<std::string, std::string> values;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = line;
        if (const auto hash = view.find('#'); hash != std::string_view::npos) {
            view = view.substr(0, hash);
        }
        view = trim(view);
        if (view.empty()) {
            continue;
        }
        const auto eq = view.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(fmt::format("config line {}: expected 'key = value'", line_no));
        }
        const std::string key(trim(view.substr(0, eq)));
        const std::string value(trim(view.substr(eq + 1)));
        if (key.empty()) {
            throw ConfigError(fmt::format("config line {}: empty key", line_no));
        }
        if (!values.emplace(key, value).second) {
            throw ConfigError(fmt::format("config line {}: key '{}' given twice", line_no, key));
        }
    }
    return KeyValueConfig(std::move(values));
}

KeyValueConfig KeyValueConfig::load(const fs::path& file)
{
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot read config file " + file.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const std::string* KeyValueConfig::find(const std::string& key) const
{
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return nullptr;
    }
    used_.insert(key);
    return &it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const
{
    const auto* v = find(key);
    return v ? *v : fallback;
}

long long KeyValueConfig::get_int(const std::string& key, long long fallback) const
{
    const auto* v = find(key);
    if (!v) {
        return fallback;
    }
    long long out = 0;
    const auto res = std::from_chars(v->data(), v->data() + v->size(), out);
    if (v->empty() || res.ec != std::errc() || res.ptr != v->data() + v->size()) {
        throw ConfigError(fmt::format("config key '{}': '{}' is not an integer", key, *v));
    }
    return out;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const
{
    const auto* v = find(key);
    if (!v) {
        return fallback;
    }
    try {
        return parse_double(*v, key);
    } catch (const DataError&) {
        throw ConfigError(fmt::format("config key '{}': '{}' is not a number", key, *v));
    }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const
{
    const auto* v = find(key);
    if (!v) {
        return fallback;
    }
    const std::string t = lower(*v);
    if (t == "true" || t == "yes" || t == "1" || t == "on") {
        return true;
    }
    if (t == "false" || t == "no" || t == "0" || t == "off") {
        return false;
    }
    throw ConfigError(fmt::format("config key '{}': '{}' is not a boolean", key, *v));
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key,
                                                  const std::vector<std::string>& fallback) const
{
    const auto* v = find(key);
    if (!v) {
        return fallback;
    }
    std::vector<std::string> out;
    if (trim(*v).empty()) {
        return out;
    }
    for (const auto& item : split_csv_line(*v)) {
        out.emplace_back(trim(item));
    }
    return out;
}

void KeyValueConfig::reject_unknown() const
{
    for (const auto& [key, value] : values_) {
        if (used_.count(key) == 0) {
            throw ConfigError(fmt::format("unknown config key '{}'", key));
        }
    }
}

SimConfig sim_config_from(const KeyValueConfig& cfg)
{
    SimConfig c = cfg.get_bool("preset_cimmyt_like", false) ? preset_cimmyt_like() : SimConfig{};
    c.g = cfg.get_int("g", c.g);
    c.s = cfg.get_int("s", c.s);
    c.r = cfg.get_int("r", c.r);
    c.tau = cfg.get_int("tau", c.tau);
    c.p = cfg.get_int("p", c.p);
    c.identity_kinship = cfg.get_bool("identity_kinship", c.identity_kinship);
    if (cfg.has("seed")) {
        c.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
    }
    c.n_factors = cfg.get_int("n_factors", c.n_factors);
    if (cfg.has("block_starts")) {
        c.block_starts.clear();
        for (const auto& v : cfg.get_list("block_starts", {})) {
            c.block_starts.push_back(static_cast<Index>(parse_double(v, "block_starts")));
        }
    } else if (cfg.has("n_factors")) {
        c.block_starts.clear();
    }
    c.communality = cfg.get_double("communality", c.communality);
    c.h2_secondary = cfg.get_double("h2_secondary", c.h2_secondary);
    c.h2_focal = cfg.get_double("h2_focal", c.h2_focal);
    if (cfg.has("focal_factor_corr")) {
        c.focal_factor_corr.clear();
        for (const auto& v : cfg.get_list("focal_factor_corr", {})) {
            c.focal_factor_corr.push_back(parse_double(v, "focal_factor_corr"));
        }
    }
    c.persistence = cfg.get_double("persistence", c.persistence);
    c.residual_ar = cfg.get_double("residual_ar", c.residual_ar);
    if (cfg.has("label_switches")) {
        // "timepoint:perm" items, perm written as signed 1-based columns, e.g. 5:2/1 or 3:-1/2
        c.label_switches.clear();
        for (const auto& item : cfg.get_list("label_switches", {})) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) {
                throw ConfigError("label_switches: expected 'timepoint:c1/c2/...'");
            }
            const auto tp = static_cast<Index>(parse_double(item.substr(0, colon), "label_switches"));
            std::vector<Index> cols;
            std::vector<int> signs;
            std::stringstream ss(item.substr(colon + 1));
            std::string tok;
            while (std::getline(ss, tok, '/')) {
                const auto v = static_cast<long long>(parse_double(tok, "label_switches"));
                if (v == 0) {
                    throw ConfigError("label_switches: columns are 1-based");
                }
                cols.push_back(static_cast<Index>(std::llabs(v) - 1));
                signs.push_back(v < 0 ? -1 : 1);
            }
            try {
                c.label_switches.emplace_back(tp - 1, SignedPermutation(cols, signs));
            } catch (const DataError& e) {
                throw ConfigError(std::string("label_switches: ") + e.what());
            }
        }
    }
    c.wavelength_start = cfg.get_double("wavelength_start", c.wavelength_start);
    c.wavelength_step = cfg.get_double("wavelength_step", c.wavelength_step);
    c.day_start = cfg.get_double("day_start", c.day_start);
    c.day_step = cfg.get_double("day_step", c.day_step);
    return c;
}

// ---------------------------------------------------------------- dataset

void write_dataset(const TrialDataset& data, const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw DataError("cannot create " + dir.string() + ": " + ec.message());
    }
    const auto& design = data.design;
    const auto& ids = design.genotype_ids();
    const auto& plots = design.plots();
    auto plot_id = [&](Index i) {
        return data.plot_ids.empty() ? fmt::format("P{:05d}", i + 1) : data.plot_ids[static_cast<std::size_t>(i)];
    };

    {
        auto out = open_out(dir / "phenotypes.csv");
        fmt::memory_buffer buf;
        fmt::format_to(std::back_inserter(buf), "plot_id,genotype,replicate,timepoint,trait,value\n");
        for (Index i = 0; i < design.n_plots(); ++i) {
            const auto& pa = plots[static_cast<std::size_t>(i)];
            const std::string prefix = fmt::format("{},{},{},", plot_id(i), ids[static_cast<std::size_t>(pa.genotype)],
                                                   pa.replicate + 1);
            for (Index l = 0; l < design.n_timepoints(); ++l) {
                const auto& tl = design.timepoint_labels()[static_cast<std::size_t>(l)];
                for (Index j = 0; j < data.n_traits(); ++j) {
                    fmt::format_to(std::back_inserter(buf), "{}{},{},{}\n", prefix, tl,
                                   data.trait_labels[static_cast<std::size_t>(j)],
                                   data.secondary[static_cast<std::size_t>(l)](i, j));
                }
            }
            fmt::format_to(std::back_inserter(buf), "{},yield,{}\n", prefix, data.focal(i));
            if (buf.size() > (1U << 20)) {
                flush_buffer(out, buf);
            }
        }
        flush_buffer(out, buf);
    }
    {
        auto out = open_out(dir / "timepoints.csv");
        out << "timepoint,day,stage\n";
        for (Index l = 0; l < design.n_timepoints(); ++l) {
            out << design.timepoint_labels()[static_cast<std::size_t>(l)] << ','
                << format_double(design.timepoints()[static_cast<std::size_t>(l)]) << ','
                << to_string(design.stages()[static_cast<std::size_t>(l)]) << '\n';
        }
    }
    if (data.markers.size() > 0) {
        auto out = open_out(dir / "markers.csv");
        fmt::memory_buffer buf;
        fmt::format_to(std::back_inserter(buf), "genotype");
        for (Index k = 0; k < data.markers.cols(); ++k) {
            fmt::format_to(std::back_inserter(buf), ",m{}", k + 1);
        }
        buf.push_back('\n');
        for (Index c = 0; c < data.markers.rows(); ++c) {
            fmt::format_to(std::back_inserter(buf), "{}", ids[static_cast<std::size_t>(c)]);
            for (Index k = 0; k < data.markers.cols(); ++k) {
                buf.push_back(',');
                buf.push_back(static_cast<char>('0' + static_cast<int>(data.markers(c, k))));
            }
            buf.push_back('\n');
            if (buf.size() > (1U << 20)) {
                flush_buffer(out, buf);
            }
        }
        flush_buffer(out, buf);
    }
    if (data.kinship.size() > 0) {
        std::vector<std::string> header{"genotype"};
        header.insert(header.end(), ids.begin(), ids.end());
        auto out = open_out(dir / "kinship.csv");
        fmt::memory_buffer buf;
        fmt::format_to(std::back_inserter(buf), "{}\n", fmt::join(header, ","));
        for (Index c = 0; c < data.kinship.rows(); ++c) {
            fmt::format_to(std::back_inserter(buf), "{}", ids[static_cast<std::size_t>(c)]);
            for (Index k = 0; k < data.kinship.cols(); ++k) {
                fmt::format_to(std::back_inserter(buf), ",{}", data.kinship(c, k));
            }
            buf.push_back('\n');
        }
        flush_buffer(out, buf);
    }
}

namespace {

struct Cell {
    Index plot;
    Index timepoint;  ///< -1 for the focal trait
    Index trait;
    double value;
};

template <typename Map>
Index intern(Map& map, std::vector<std::string>& order, const std::string& key)
{
    const auto [it, inserted] = map.emplace(key, static_cast<Index>(order.size()));
    if (inserted) {
        order.push_back(key);
    }
    return it->second;
}

}  // namespace

TrialDataset read_dataset(const fs::path& dir)
{
    const fs::path pheno_file = dir / "phenotypes.csv";
    if (!fs::exists(pheno_file)) {
        throw DataError("missing " + pheno_file.string());
    }

    // Marker order, when present, fixes the genotype order.
    std::vector<std::string> geno_order;
    std::unordered_map<std::string, Index> geno_index;
    Matrix markers;
    if (fs::exists(dir / "markers.csv")) {
        CsvReader rd(dir / "markers.csv");
        const std::size_t p = rd.header().size() - 1;
        std::vector<std::vector<double>> rows;
        std::vector<std::string> f;
        while (rd.next(f)) {
            const std::string id(trim(f[0]));
            if (!geno_index.emplace(id, static_cast<Index>(geno_order.size())).second) {
                throw DataError(rd.where() + ": genotype '" + id + "' listed twice in markers");
            }
            geno_order.push_back(id);
            std::vector<double> row(p);
            for (std::size_t k = 0; k < p; ++k) {
                row[k] = parse_double(f[k + 1], rd.where());
            }
            rows.push_back(std::move(row));
        }
        markers.resize(static_cast<Index>(rows.size()), static_cast<Index>(p));
        for (std::size_t c = 0; c < rows.size(); ++c) {
            for (std::size_t k = 0; k < p; ++k) {
                markers(static_cast<Index>(c), static_cast<Index>(k)) = rows[c][k];
            }
        }
    }
    const bool genotypes_fixed = !geno_order.empty();

    // Timepoints.
    std::vector<std::string> tp_labels;
    std::vector<double> tp_days;
    std::vector<Stage> tp_stages;
    bool have_timepoint_file = false;
    if (fs::exists(dir / "timepoints.csv")) {
        have_timepoint_file = true;
        CsvReader rd(dir / "timepoints.csv");
        const auto c_tp = rd.column("timepoint");
        const auto c_day = rd.column("day");
        const auto c_stage = rd.column("stage");
        std::vector<std::string> f;
        while (rd.next(f)) {
            tp_labels.emplace_back(trim(f[c_tp]));
            tp_days.push_back(parse_double(f[c_day], rd.where()));
            try {
                tp_stages.push_back(parse_stage(trim(f[c_stage])));
            } catch (const Error& e) {
                throw DataError(rd.where() + ": " + e.what());
            }
        }
    }

    CsvReader rd(pheno_file);
    const auto c_plot = rd.column("plot_id");
    const auto c_geno = rd.column("genotype");
    const auto c_rep = rd.column("replicate");
    const auto c_tp = rd.column("timepoint");
    const auto c_trait = rd.column("trait");
    const auto c_value = rd.column("value");

    std::unordered_map<std::string, Index> plot_index;
    std::vector<std::string> plot_ids;
    std::vector<PlotAssignment> plots;
    std::unordered_map<std::string, Index> rep_index;
    std::vector<std::string> rep_order;
    std::unordered_map<std::string, Index> tp_index;
    std::vector<std::string> tp_seen;
    std::unordered_map<std::string, Index> trait_index;
    std::vector<std::string> trait_order;
    std::vector<Cell> cells;
    std::vector<std::string> f;
    while (rd.next(f)) {
        const std::string plot(trim(f[c_plot]));
        const std::string geno(trim(f[c_geno]));
        const std::string rep(trim(f[c_rep]));
        const std::string tp(trim(f[c_tp]));
        const std::string trait(trim(f[c_trait]));
        if (plot.empty() || geno.empty() || trait.empty()) {
            throw DataError(rd.where() + ": empty plot, genotype or trait");
        }
        Index c = 0;
        if (genotypes_fixed) {
            const auto it = geno_index.find(geno);
            if (it == geno_index.end()) {
                throw DataError(rd.where() + ": genotype '" + geno + "' has no marker row");
            }
            c = it->second;
        } else {
            c = intern(geno_index, geno_order, geno);
        }
        const Index q = intern(rep_index, rep_order, rep);
        const auto [pit, new_plot] = plot_index.emplace(plot, static_cast<Index>(plots.size()));
        if (new_plot) {
            plots.push_back({c, q});
            plot_ids.push_back(plot);
        } else if (plots[static_cast<std::size_t>(pit->second)].genotype != c ||
                   plots[static_cast<std::size_t>(pit->second)].replicate != q) {
            throw DataError(rd.where() + ": plot '" + plot + "' changes genotype or replicate");
        }
        const double value = parse_double(f[c_value], rd.where());
        if (!std::isfinite(value)) {
            throw DataError(rd.where() + ": missing or non-finite value");
        }
        if (lower(trait) == "yield") {
            if (!tp.empty()) {
                throw DataError(rd.where() + ": the focal trait 'yield' takes an empty timepoint");
            }
            cells.push_back({pit->second, -1, 0, value});
            continue;
        }
        if (tp.empty()) {
            throw DataError(rd.where() + ": secondary trait '" + trait + "' without timepoint");
        }
        cells.push_back({pit->second, intern(tp_index, tp_seen, tp), intern(trait_index, trait_order, trait), value});
    }

    // Timepoint order: file order when given, otherwise numeric labels sorted.
    std::vector<Index> tp_map(tp_seen.size(), -1);
    if (have_timepoint_file) {
        for (std::size_t k = 0; k < tp_seen.size(); ++k) {
            const auto it = std::find(tp_labels.begin(), tp_labels.end(), tp_seen[k]);
            if (it == tp_labels.end()) {
                throw DataError("timepoint '" + tp_seen[k] + "' missing from timepoints.csv");
            }
            tp_map[k] = static_cast<Index>(it - tp_labels.begin());
        }
        if (tp_labels.size() != tp_seen.size()) {
            throw DataError("timepoints.csv lists timepoints without phenotype rows");
        }
        std::vector<std::size_t> order(tp_labels.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return tp_days[a] < tp_days[b]; });
        std::vector<Index> rank(order.size());
        std::vector<std::string> labels2;
        std::vector<double> days2;
        std::vector<Stage> stages2;
        for (std::size_t k = 0; k < order.size(); ++k) {
            rank[order[k]] = static_cast<Index>(k);
            labels2.push_back(tp_labels[order[k]]);
            days2.push_back(tp_days[order[k]]);
            stages2.push_back(tp_stages[order[k]]);
        }
        for (auto& v : tp_map) {
            v = rank[static_cast<std::size_t>(v)];
        }
        tp_labels = std::move(labels2);
        tp_days = std::move(days2);
        tp_stages = std::move(stages2);
    } else {
        std::vector<std::pair<double, std::size_t>> days;
        for (std::size_t k = 0; k < tp_seen.size(); ++k) {
            days.emplace_back(parse_double(tp_seen[k], "timepoint label (add timepoints.csv for non-numeric labels)"), k);
        }
        std::sort(days.begin(), days.end());
        for (std::size_t k = 0; k < days.size(); ++k) {
            tp_map[days[k].second] = static_cast<Index>(k);
            tp_labels.push_back(tp_seen[days[k].second]);
            tp_days.push_back(days[k].first);
        }
        tp_stages = default_stage_labels(static_cast<Index>(tp_labels.size()));
    }

    // Replicate labels: numeric order when all are numbers.
    std::vector<Index> rep_map(rep_order.size());
    {
        std::vector<std::pair<double, std::size_t>> keyed;
        bool numeric = true;
        for (std::size_t k = 0; k < rep_order.size(); ++k) {
            try {
                keyed.emplace_back(parse_double(rep_order[k], "replicate"), k);
            } catch (const DataError&) {
                numeric = false;
                break;
            }
        }
        if (numeric) {
            std::sort(keyed.begin(), keyed.end());
            for (std::size_t k = 0; k < keyed.size(); ++k) {
                rep_map[keyed[k].second] = static_cast<Index>(k);
            }
        } else {
            std::iota(rep_map.begin(), rep_map.end(), 0);
        }
    }
    for (auto& pa : plots) {
        pa.replicate = rep_map[static_cast<std::size_t>(pa.replicate)];
    }

    // Drop marker genotypes without phenotypes.
    std::vector<Index> plot_count(geno_order.size(), 0);
    for (const auto& pa : plots) {
        ++plot_count[static_cast<std::size_t>(pa.genotype)];
    }
    std::vector<Index> keep;
    for (std::size_t c = 0; c < geno_order.size(); ++c) {
        if (plot_count[c] > 0) {
            keep.push_back(static_cast<Index>(c));
        }
    }
    if (keep.size() != geno_order.size()) {
        spdlog::warn("{} genotype(s) in markers.csv have no phenotype rows and are ignored",
                     geno_order.size() - keep.size());
    }

    const auto n = static_cast<Index>(plots.size());
    const auto s = static_cast<Index>(trait_order.size());
    const auto tau = static_cast<Index>(tp_labels.size());
    TrialDataset data;
    data.design = TrialDesign(geno_order, plots, tp_days, tp_labels, tp_stages);
    data.trait_labels = trait_order;
    data.plot_ids = plot_ids;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    data.secondary.assign(static_cast<std::size_t>(tau), Matrix::Constant(n, s, nan));
    data.focal = Vector::Constant(n, nan);
    for (const auto& cell : cells) {
        double& slot = cell.timepoint < 0
                           ? data.focal(cell.plot)
                           : data.secondary[static_cast<std::size_t>(tp_map[static_cast<std::size_t>(cell.timepoint)])](
                                 cell.plot, cell.trait);
        if (!std::isnan(slot)) {
            throw DataError(fmt::format("duplicate cell: plot '{}', {} ", plot_ids[static_cast<std::size_t>(cell.plot)],
                                        cell.timepoint < 0 ? std::string("yield")
                                                           : "timepoint '" + tp_seen[static_cast<std::size_t>(cell.timepoint)] +
                                                                 "', trait '" + trait_order[static_cast<std::size_t>(cell.trait)] + "'"));
        }
        slot = cell.value;
    }
    for (Index l = 0; l < tau; ++l) {
        const auto& y = data.secondary[static_cast<std::size_t>(l)];
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < s; ++j) {
                if (std::isnan(y(i, j))) {
                    throw DataError(fmt::format("missing cell: plot '{}', timepoint '{}', trait '{}'",
                                                plot_ids[static_cast<std::size_t>(i)], tp_labels[static_cast<std::size_t>(l)],
                                                trait_order[static_cast<std::size_t>(j)]));
                }
            }
        }
    }
    for (Index i = 0; i < n; ++i) {
        if (std::isnan(data.focal(i))) {
            throw DataError("missing yield value for plot '" + plot_ids[static_cast<std::size_t>(i)] + "'");
        }
    }
    data.markers = std::move(markers);
    if (keep.size() != geno_order.size()) {
        data = data.restrict_genotypes(keep);
    }

    if (fs::exists(dir / "kinship.csv")) {
        CsvReader kr(dir / "kinship.csv");
        const auto& header = kr.header();
        const Index g = data.design.n_genotypes();
        std::vector<Index> col_of(header.size(), -1);
        std::unordered_map<std::string, Index> final_index;
        for (Index c = 0; c < g; ++c) {
            final_index.emplace(data.design.genotype_ids()[static_cast<std::size_t>(c)], c);
        }
        for (std::size_t k = 1; k < header.size(); ++k) {
            const auto it = final_index.find(header[k]);
            if (it != final_index.end()) {
                col_of[k] = it->second;
            }
        }
        Matrix k_mat = Matrix::Constant(g, g, nan);
        while (kr.next(f)) {
            const auto it = final_index.find(std::string(trim(f[0])));
            if (it == final_index.end()) {
                continue;
            }
            for (std::size_t k = 1; k < f.size(); ++k) {
                if (col_of[k] >= 0) {
                    k_mat(it->second, col_of[k]) = parse_double(f[k], kr.where());
                }
            }
        }
        if (k_mat.hasNaN()) {
            throw DataError("kinship.csv does not cover every phenotyped genotype pair");
        }
        data.kinship = std::move(k_mat);
    }
    data.validate();
    return data;
}

void write_matrix_csv(const fs::path& file, const std::vector<std::string>& header, const Matrix& values)
{
    auto out = open_out(file);
    fmt::memory_buffer buf;
    fmt::format_to(std::back_inserter(buf), "{}\n", fmt::join(header, ","));
    for (Index i = 0; i < values.rows(); ++i) {
        for (Index j = 0; j < values.cols(); ++j) {
            if (j > 0) {
                buf.push_back(',');
            }
            fmt::format_to(std::back_inserter(buf), "{}", values(i, j));
        }
        buf.push_back('\n');
    }
    flush_buffer(out, buf);
}

}  // namespace glf
