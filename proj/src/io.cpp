#include "qss/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>

#include "qss/config.hpp"
#include "qss/error.hpp"

namespace qss {

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("cannot open '" + path + "' for hashing");
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("SHA-256 initialisation failed");
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        const auto got = in.gcount();
        if (got > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(got));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md, &len);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return hex.str();
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << content;
    if (!out) throw Error("write to '" + path + "' failed");
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("missing file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_json(const std::string& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

json read_json(const std::string& path) {
    const auto text = read_text(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError("'" + path + "' is not valid JSON: " + e.what());
    }
}

std::string csv_number(double x) {
    return format_double(x);
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    return out;
}

std::vector<std::string> split(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, sep)) {
        const auto b = item.find_first_not_of(" \t\r");
        const auto e = item.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : item.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

bool parse_number(const std::string& s, double& out) {
    if (s == "nan" || s == "NaN" || s.empty()) {
        out = std::numeric_limits<double>::quiet_NaN();
        return true;
    }
    const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

// Reads "key=value" pairs from a schema comment line.
std::map<std::string, std::string> comment_metadata(const std::string& line) {
    std::map<std::string, std::string> meta;
    std::stringstream ss(line.substr(1));
    std::string tok;
    while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq != std::string::npos) meta[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return meta;
}

}  // namespace

void write_conservation_csv(const std::string& path, const ConservationLog& log) {
    auto out = open_out(path);
    const std::size_t D = log.records.empty() ? 0 : log.records.front().momentum.size();
    out << "# qss conservation_log schema v1\n";
    out << "t,E";
    for (std::size_t d = 0; d < D; ++d) out << ",P_total_" << d;
    out << ",virial\n";
    for (const auto& r : log.records) {
        out << csv_number(r.t) << ',' << csv_number(r.energy);
        for (double p : r.momentum) out << ',' << csv_number(p);
        out << ',' << csv_number(r.virial) << '\n';
    }
}

void write_energy_table_csv(const std::string& path, const EnergyTable& table) {
    auto out = open_out(path);
    out << "# qss energy_table schema v1 lo=" << csv_number(table.lo) << " width=" << csv_number(table.width) << "\n";
    out << "epsilon,f_mean,shell_volume,n_bins\n";
    for (const auto& r : table.rows)
        out << csv_number(r.epsilon) << ',' << csv_number(r.f_mean) << ',' << csv_number(r.shell_volume) << ','
            << r.n_bins << '\n';
}

EnergyTable read_energy_table_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("missing energy table '" + path + "'");
    return parse_energy_table_csv(in);
}

EnergyTable parse_energy_table_csv(std::istream& in) {
    const std::vector<std::string> expected = {"epsilon", "f_mean", "shell_volume", "n_bins"};
    std::string line;
    int lineno = 0;
    std::map<std::string, std::string> meta;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto m = comment_metadata(line);
            meta.insert(m.begin(), m.end());
            continue;
        }
        header = split(line);
        break;
    }
    if (header.empty()) throw SchemaError("energy table is empty: expected header epsilon,f_mean,shell_volume,n_bins");
    std::vector<int> column(expected.size(), -1);
    for (std::size_t c = 0; c < header.size(); ++c)
        for (std::size_t k = 0; k < expected.size(); ++k)
            if (header[c] == expected[k]) column[k] = static_cast<int>(c);
    for (std::size_t k = 0; k < expected.size(); ++k)
        if (column[k] < 0) throw SchemaError("line " + std::to_string(lineno) + ": missing column '" + expected[k] + "'");

    EnergyTable table;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw SchemaError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                              " columns, found " + std::to_string(cells.size()));
        double v[4];
        for (std::size_t k = 0; k < 4; ++k)
            if (!parse_number(cells[static_cast<std::size_t>(column[k])], v[k]))
                throw SchemaError("line " + std::to_string(lineno) + ": column '" + expected[k] + "' is not a number: '" +
                                  cells[static_cast<std::size_t>(column[k])] + "'");
        if (!std::isfinite(v[0])) throw SchemaError("line " + std::to_string(lineno) + ": column 'epsilon' must be finite");
        if (!(v[3] >= 0.0) || v[3] != std::floor(v[3]))
            throw SchemaError("line " + std::to_string(lineno) + ": column 'n_bins' must be a non-negative integer");
        EnergyShell row;
        row.epsilon = v[0];
        row.f_mean = v[1];
        row.shell_volume = std::isfinite(v[2]) ? v[2] : 0.0;
        row.n_bins = static_cast<std::size_t>(v[3]);
        if (row.n_bins > 0 && !(row.f_mean >= 0.0))
            throw SchemaError("line " + std::to_string(lineno) + ": column 'f_mean' must be non-negative");
        table.rows.push_back(row);
    }
    if (table.rows.empty()) throw SchemaError("energy table has a header but no rows");

    double lo = 0.0, width = 0.0;
    if (meta.count("lo") && meta.count("width") && parse_number(meta["lo"], lo) && parse_number(meta["width"], width) &&
        std::isfinite(lo) && width > 0.0) {
        // exact binning recorded by the writer
    } else {
        if (table.rows.size() < 2) throw SchemaError("energy table needs at least two rows to infer its binning");
        width = (table.rows.back().epsilon - table.rows.front().epsilon) / static_cast<double>(table.rows.size() - 1);
        lo = table.rows.front().epsilon - 0.5 * width;
    }
    if (!(width > 0.0)) throw SchemaError("column 'epsilon' must be strictly increasing");
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const double want = lo + width * (static_cast<double>(i) + 0.5);
        if (std::abs(table.rows[i].epsilon - want) > 1e-6 * width)
            throw SchemaError("column 'epsilon' is not uniformly spaced at row " + std::to_string(i + 1));
    }
    table.lo = lo;
    table.width = width;
    return table;
}

void write_mean_field_csv(const std::string& path, const MeanFieldPotential& mf) {
    auto out = open_out(path);
    out << "# qss mean_field schema v1";
    for (std::size_t d = 0; d < mf.dim(); ++d) {
        const auto& ax = mf.axes()[d];
        out << " origin" << d << '=' << csv_number(ax.origin) << " spacing" << d << '=' << csv_number(ax.spacing)
            << " count" << d << '=' << ax.count;
    }
    out << "\n";
    for (std::size_t d = 0; d < mf.dim(); ++d) out << "q_" << d << ',';
    out << "phi\n";
    for (std::size_t k = 0; k < mf.node_count(); ++k) {
        for (double x : mf.node_position(k)) out << csv_number(x) << ',';
        out << csv_number(mf.values()[k]) << '\n';
    }
}

MeanFieldPotential read_mean_field_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("missing mean-field table '" + path + "'");
    std::string line;
    std::map<std::string, std::string> meta;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto m = comment_metadata(line);
            meta.insert(m.begin(), m.end());
            continue;
        }
        header = split(line);
        break;
    }
    if (header.size() < 2 || header.back() != "phi") throw SchemaError("mean-field table needs columns q_0..., phi");
    const std::size_t D = header.size() - 1;
    std::vector<NodeAxis> axes(D);
    for (std::size_t d = 0; d < D; ++d) {
        const auto k = std::to_string(d);
        double origin = 0, spacing = 0, count = 0;
        if (!parse_number(meta["origin" + k], origin) || !parse_number(meta["spacing" + k], spacing) ||
            !parse_number(meta["count" + k], count) || !std::isfinite(origin))
            throw SchemaError("mean-field table lacks lattice metadata for axis " + k);
        axes[d] = NodeAxis{origin, spacing, static_cast<std::size_t>(count)};
    }
    std::vector<double> values;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto cells = split(line);
        double v = 0;
        if (cells.size() != D + 1 || !parse_number(cells.back(), v))
            throw SchemaError("malformed mean-field row: '" + line + "'");
        values.push_back(v);
    }
    return MeanFieldPotential(std::move(axes), std::move(values));
}

void write_distribution_csv(const std::string& path, const CoarseGrainedDistribution& dist) {
    auto out = open_out(path);
    const std::size_t D = dist.grid.dim();
    out << "# qss distribution schema v1 t=" << csv_number(dist.t) << " omega=" << csv_number(dist.grid.omega()) << "\n";
    for (std::size_t d = 0; d < D; ++d) out << "q_index_" << d << ',';
    for (std::size_t d = 0; d < D; ++d) out << "p_index_" << d << ',';
    out << "f\n";
    for (std::size_t b = 0; b < dist.f.size(); ++b) {
        if (!(dist.f[b] > 0.0)) continue;
        for (auto i : dist.grid.unflatten(b)) out << i << ',';
        out << csv_number(dist.f[b]) << '\n';
    }
}

void write_discrepancy_csv(const std::string& path, const DilutedTimeReport& report,
                           const ComponentDecomposition& decomp) {
    auto out = open_out(path);
    const std::size_t D = decomp.grid.dim();
    out << "# qss discrepancy_field schema v1\n";
    out << "bin";
    for (std::size_t d = 0; d < D; ++d) out << ",q_" << d;
    for (std::size_t d = 0; d < D; ++d) out << ",p_" << d;
    out << ",epsilon,nu1,nu2,lapse,lapse_spread,dl1,dl2,D,D_relative,overlap,tick_ratio\n";
    for (const auto& r : report.bins) {
        out << r.bin;
        for (double c : decomp.grid.center(r.bin)) out << ',' << csv_number(c);
        out << ',' << csv_number(decomp.epsilon[r.bin]) << ',' << r.nu1 << ',' << r.nu2 << ',' << csv_number(r.lapse)
            << ',' << csv_number(r.lapse_spread) << ',' << csv_number(r.dl1) << ',' << csv_number(r.dl2) << ','
            << csv_number(r.discrepancy) << ',' << csv_number(r.relative_discrepancy) << ',' << (r.overlap ? 1 : 0)
            << ',' << csv_number(r.tick_ratio) << '\n';
    }
}

void write_snapshot_csv(std::ostream& out, const CanonicalState& state, bool header) {
    const std::size_t D = state.dim;
    if (header) {
        out << "# qss snapshot schema v1\n";
        out << "t,particle_id";
        for (std::size_t d = 0; d < D; ++d) out << ",Q_" << d;
        for (std::size_t d = 0; d < D; ++d) out << ",P_" << d;
        out << '\n';
    }
    const std::string t = csv_number(state.t);
    for (std::size_t i = 0; i < state.size(); ++i) {
        out << t << ',' << i;
        for (double x : state.position(i)) out << ',' << csv_number(x);
        for (double x : state.momentum(i)) out << ',' << csv_number(x);
        out << '\n';
    }
}

std::vector<CanonicalState> read_snapshot_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("missing snapshot file '" + path + "'");
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        header = split(line);
        break;
    }
    if (header.size() < 4 || header[0] != "t" || header[1] != "particle_id" || (header.size() - 2) % 2 != 0)
        throw SchemaError("snapshot CSV needs columns t, particle_id, Q_..., P_...");
    const std::size_t D = (header.size() - 2) / 2;
    std::vector<CanonicalState> out;
    double current_t = std::numeric_limits<double>::quiet_NaN();
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto cells = split(line);
        if (cells.size() != header.size()) throw SchemaError("snapshot row " + std::to_string(lineno) + " has wrong width");
        std::vector<double> v(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c)
            if (!parse_number(cells[c], v[c]) || !std::isfinite(v[c]))
                throw SchemaError("snapshot row " + std::to_string(lineno) + ": bad value in column '" + header[c] + "'");
        if (out.empty() || v[0] != current_t) {
            out.emplace_back();
            out.back().dim = D;
            out.back().t = v[0];
            current_t = v[0];
        }
        auto& s = out.back();
        for (std::size_t d = 0; d < D; ++d) s.q.push_back(v[2 + d]);
        for (std::size_t d = 0; d < D; ++d) s.p.push_back(v[2 + D + d]);
    }
    return out;
}

namespace {

constexpr char kSnapMagic[8] = {'Q', 'S', 'S', 'S', 'N', 'A', 'P', '1'};

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw SchemaError("truncated binary snapshot");
    return v;
}

}  // namespace

void write_snapshot_binary(std::ostream& out, const CanonicalState& state) {
    out.write(kSnapMagic, sizeof kSnapMagic);
    put<std::uint64_t>(out, state.dim);
    put<std::uint64_t>(out, state.size());
    put<double>(out, state.t);
    out.write(reinterpret_cast<const char*>(state.q.data()), static_cast<std::streamsize>(state.q.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(state.p.data()), static_cast<std::streamsize>(state.p.size() * sizeof(double)));
}

CanonicalState read_snapshot_binary(std::istream& in) {
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kSnapMagic, sizeof magic) != 0) throw SchemaError("not a binary snapshot record");
    CanonicalState s;
    s.dim = get<std::uint64_t>(in);
    const auto n = get<std::uint64_t>(in);
    if (s.dim == 0 || s.dim > 3 || n > (std::uint64_t{1} << 34)) throw SchemaError("implausible snapshot header");
    s.t = get<double>(in);
    s.q.resize(s.dim * n);
    s.p.resize(s.dim * n);
    in.read(reinterpret_cast<char*>(s.q.data()), static_cast<std::streamsize>(s.q.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(s.p.data()), static_cast<std::streamsize>(s.p.size() * sizeof(double)));
    if (!in) throw SchemaError("truncated binary snapshot");
    return s;
}

std::vector<CanonicalState> read_snapshot_binary_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("missing snapshot file '" + path + "'");
    std::vector<CanonicalState> out;
    while (in.peek() != std::char_traits<char>::eof()) out.push_back(read_snapshot_binary(in));
    return out;
}

// ---------------------------------------------------------------------------

json to_json(const MuGrid& grid) {
    auto axes = [](const std::vector<UniformAxis>& v) {
        json arr = json::array();
        for (const auto& a : v) arr.push_back({{"lo", a.lo}, {"width", a.width}, {"bins", a.bins}});
        return arr;
    };
    return json{{"omega", grid.omega()}, {"q", axes(grid.q_axes())}, {"p", axes(grid.p_axes())}};
}

MuGrid grid_from_json(const json& j) {
    try {
        auto axes = [](const json& arr) {
            std::vector<UniformAxis> v;
            for (const auto& a : arr)
                v.push_back(UniformAxis{a.at("lo").get<double>(), a.at("width").get<double>(), a.at("bins").get<std::size_t>()});
            return v;
        };
        return MuGrid(axes(j.at("q")), axes(j.at("p")));
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed grid record: ") + e.what());
    }
}

json to_json(const StepFit& fit) {
    return json{{"eta", fit.eta}, {"ef", fit.ef}, {"residual", fit.residual}};
}

json to_json(const TwoStepFit& fit) {
    return json{{"eta1", fit.eta1},
                {"eta2", fit.eta2},
                {"ef1", fit.ef1},
                {"ef2", fit.ef2},
                {"residual", fit.residual},
                {"constrained", fit.constrained},
                {"model_selection_margin", fit.margin},
                {"verdict", to_string(fit.verdict)},
                {"single_step", to_json(fit.single)}};
}

TwoStepFit two_step_from_json(const json& j) {
    try {
        TwoStepFit f;
        f.eta1 = j.at("eta1").get<double>();
        f.eta2 = j.at("eta2").get<double>();
        f.ef1 = j.at("ef1").get<double>();
        f.ef2 = j.at("ef2").get<double>();
        f.residual = j.at("residual").get<double>();
        f.constrained = j.at("constrained").get<bool>();
        f.margin = j.value("model_selection_margin", 0.5);
        f.verdict = j.at("verdict").get<std::string>() == "two-step" ? StepVerdict::two_step : StepVerdict::single;
        const auto& s = j.at("single_step");
        f.single = StepFit{s.at("eta").get<double>(), s.at("ef").get<double>(), s.at("residual").get<double>()};
        return f;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed fit record: ") + e.what());
    }
}

json to_json(const DilutedTimeReport& report) {
    std::size_t overlap = 0;
    std::int64_t nu1 = 0, nu2 = 0;
    double ratio_min = std::numeric_limits<double>::infinity(), ratio_max = -ratio_min, spread = 0.0;
    for (const auto& b : report.bins) {
        nu1 += b.nu1;
        nu2 += b.nu2;
        spread = std::max(spread, b.lapse_spread);
        if (!b.overlap) continue;
        ++overlap;
        ratio_min = std::min(ratio_min, b.tick_ratio);
        ratio_max = std::max(ratio_max, b.tick_ratio);
    }
    json j{{"verdict", report.inequivalent ? "inequivalent" : "equivalent"},
           {"discrepancy_tol", report.tolerance},
           {"omega", report.omega},
           {"occupied_bins", report.bins.size()},
           {"overlap_bins", overlap},
           {"overlap_fraction", report.overlap_fraction},
           {"max_discrepancy", report.max_discrepancy},
           {"max_relative_discrepancy", report.max_relative_discrepancy},
           {"total_nu1", nu1},
           {"total_nu2", nu2},
           {"max_lapse_spread", spread}};
    if (overlap > 0) {
        j["tick_ratio_min"] = ratio_min;
        j["tick_ratio_max"] = ratio_max;
    } else {
        j["tick_ratio_min"] = nullptr;
        j["tick_ratio_max"] = nullptr;
        j["note"] = "no overlap region; time-reparametrization obstruction absent";
    }
    return j;
}

}  // namespace qss
