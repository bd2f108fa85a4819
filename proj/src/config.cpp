#include "qss/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "qss/error.hpp"

namespace qss {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------

IniDocument IniDocument::parse(const std::string& text) {
    IniDocument doc;
    std::istringstream in(text);
    std::string raw, section;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = raw;
        const auto hash = s.find_first_of("#;");
        if (hash != std::string::npos) s = s.substr(0, hash);
        s = trim(s);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError("", "unterminated section header '" + s + "'", line);
            section = lower(trim(s.substr(1, s.size() - 2)));
            if (section.empty()) throw ConfigError("", "empty section name", line);
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("", "expected 'key = value', got '" + s + "'", line);
        const std::string key = lower(trim(s.substr(0, eq)));
        if (key.empty()) throw ConfigError("", "missing key before '='", line);
        const std::string full = section.empty() ? key : section + "." + key;
        if (doc.entries_.count(full)) throw ConfigError(full, "duplicate key", line);
        doc.entries_[full] = Entry{trim(s.substr(eq + 1)), line};
    }
    return doc;
}

IniDocument IniDocument::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void IniDocument::set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("", "override '" + assignment + "' is not of the form section.key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void IniDocument::set(const std::string& key, const std::string& value) {
    entries_[lower(key)] = Entry{value, 0};
}

// ---------------------------------------------------------------------------

std::string to_string(GaugeKind k) {
    switch (k) {
        case GaugeKind::trivial: return "trivial";
        case GaugeKind::constant: return "constant";
        case GaugeKind::sinusoidal: return "sinusoidal";
    }
    return "trivial";
}

std::string to_string(SnapshotFormat f) {
    switch (f) {
        case SnapshotFormat::none: return "none";
        case SnapshotFormat::csv: return "csv";
        case SnapshotFormat::binary: return "binary";
    }
    return "none";
}

namespace {

class Reader {
public:
    explicit Reader(const IniDocument& doc) : doc_(doc) {}

    const IniDocument::Entry* find(const std::string& key) {
        used_.insert(key);
        const auto it = doc_.entries().find(key);
        return it == doc_.entries().end() ? nullptr : &it->second;
    }

    void real(const std::string& key, double& out) {
        if (const auto* e = find(key)) out = to_real(key, *e);
    }
    void real(const std::string& key, std::optional<double>& out) {
        if (const auto* e = find(key)) {
            if (lower(e->value) == "none" || e->value.empty()) {
                out.reset();
            } else {
                out = to_real(key, *e);
            }
        }
    }
    template <class Int>
    void integer(const std::string& key, Int& out) {
        if (const auto* e = find(key)) out = static_cast<Int>(to_unsigned(key, *e));
    }
    void integer(const std::string& key, std::optional<std::size_t>& out) {
        if (const auto* e = find(key)) {
            if (lower(e->value) == "none" || e->value.empty()) {
                out.reset();
            } else {
                out = static_cast<std::size_t>(to_unsigned(key, *e));
            }
        }
    }
    void boolean(const std::string& key, bool& out) {
        if (const auto* e = find(key)) {
            const auto v = lower(e->value);
            if (v == "true" || v == "yes" || v == "on" || v == "1") {
                out = true;
            } else if (v == "false" || v == "no" || v == "off" || v == "0") {
                out = false;
            } else {
                throw ConfigError(key, "expected a boolean, got '" + e->value + "'", e->line);
            }
        }
    }
    void text(const std::string& key, std::string& out) {
        if (const auto* e = find(key)) out = e->value;
    }
    void list(const std::string& key, std::vector<double>& out) {
        const auto* e = find(key);
        if (!e) return;
        out.clear();
        std::stringstream ss(e->value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            out.push_back(to_real(key, IniDocument::Entry{item, e->line}));
        }
    }
    template <class Enum>
    void choice(const std::string& key, Enum& out, const std::function<Enum(const std::string&)>& conv) {
        const auto* e = find(key);
        if (!e) return;
        try {
            out = conv(lower(e->value));
        } catch (const ConfigError& err) {
            throw ConfigError(key, "invalid value '" + e->value + "'", e->line);
        }
    }
    int line(const std::string& key) const {
        const auto it = doc_.entries().find(key);
        return it == doc_.entries().end() ? 0 : it->second.line;
    }

    void reject_unknown() const {
        for (const auto& [key, entry] : doc_.entries())
            if (!used_.count(key)) throw ConfigError(key, "unknown configuration key", entry.line);
    }

private:
    static double to_real(const std::string& key, const IniDocument::Entry& e) {
        double v = 0.0;
        const char* first = e.value.data();
        const char* last = first + e.value.size();
        const auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc() || res.ptr != last)
            throw ConfigError(key, "expected a number, got '" + e.value + "'", e.line);
        if (!std::isfinite(v)) throw ConfigError(key, "value must be finite", e.line);
        return v;
    }
    static std::uint64_t to_unsigned(const std::string& key, const IniDocument::Entry& e) {
        std::uint64_t v = 0;
        const char* first = e.value.data();
        const char* last = first + e.value.size();
        const auto res = std::from_chars(first, last, v);
        if (res.ec != std::errc() || res.ptr != last)
            throw ConfigError(key, "expected a non-negative integer, got '" + e.value + "'", e.line);
        return v;
    }

    const IniDocument& doc_;
    std::set<std::string> used_;
};

}  // namespace

ExperimentConfig ExperimentConfig::from_document(const IniDocument& doc) {
    ExperimentConfig c;
    Reader r(doc);
    r.integer("seed", c.seed);

    r.choice<PotentialKind>("model.potential", c.model.potential, potential_kind_from_string);
    r.real("model.coupling", c.model.coupling);
    r.boolean("model.kac_scaling", c.model.kac_scaling);
    r.real("model.softening", c.model.softening);
    r.real("model.mass", c.model.mass);
    r.integer("model.dim", c.model.dim);

    r.integer("init.n_particles", c.init.n_particles);
    r.real("init.position_extent", c.init.position_extent);
    r.real("init.velocity_extent", c.init.velocity_extent);
    r.real("init.virial_ratio", c.init.virial_ratio);
    r.choice<WaterbagSampling>("init.sampling", c.init.sampling, waterbag_sampling_from_string);
    r.boolean("init.symmetric", c.init.symmetric);

    r.choice<Scheme>("integrator.scheme", c.integrator.scheme, [](const std::string& s) {
        if (s != "leapfrog") throw ConfigError("integrator.scheme", "only leapfrog is available");
        return Scheme::leapfrog;
    });
    r.real("integrator.dt", c.integrator.dt);
    r.real("integrator.dt_fraction", c.integrator.dt_fraction);
    r.real("integrator.duration", c.integrator.duration);
    r.integer("integrator.n_steps", c.integrator.n_steps);
    r.real("integrator.snapshot_interval", c.integrator.snapshot_interval);
    r.integer("integrator.snapshot_stride", c.integrator.snapshot_stride);
    r.integer("integrator.threads", c.integrator.threads);

    r.real("grid.omega_factor", c.grid.omega_factor);
    r.real("grid.omega", c.grid.omega);
    r.real("grid.aspect", c.grid.aspect);
    r.real("grid.q_extent", c.grid.q_extent);
    r.real("grid.p_extent", c.grid.p_extent);

    r.boolean("fit.constrain", c.fit.constrain);
    r.real("fit.model_selection_margin", c.fit.model_selection_margin);
    r.integer("fit.n_energy_bins", c.fit.n_energy_bins);

    r.choice<GaugeKind>("gauge.kind", c.gauge.kind, [](const std::string& s) {
        if (s == "trivial") return GaugeKind::trivial;
        if (s == "constant") return GaugeKind::constant;
        if (s == "sinusoidal") return GaugeKind::sinusoidal;
        throw ConfigError("gauge.kind", "unknown gauge");
    });
    r.real("gauge.lapse", c.gauge.lapse);
    r.list("gauge.shift", c.gauge.shift);
    r.real("gauge.amplitude", c.gauge.amplitude);
    r.real("gauge.frequency", c.gauge.frequency);
    r.real("gauge.wavenumber", c.gauge.wavenumber);
    r.real("gauge.sample_time", c.gauge.sample_time);
    r.integer("gauge.samples_per_axis", c.gauge.samples_per_axis);

    r.real("analysis.discrepancy_tol", c.analysis.discrepancy_tol);
    r.real("analysis.qss_threshold", c.analysis.qss_threshold);
    r.integer("analysis.qss_window", c.analysis.qss_window);
    r.integer("analysis.qss_consecutive", c.analysis.qss_consecutive);

    r.text("output.directory", c.output.directory);
    r.choice<SnapshotFormat>("output.snapshots", c.output.snapshots, [](const std::string& s) {
        if (s == "none") return SnapshotFormat::none;
        if (s == "csv") return SnapshotFormat::csv;
        if (s == "binary") return SnapshotFormat::binary;
        throw ConfigError("output.snapshots", "unknown format");
    });
    r.boolean("output.record_wall_clock", c.output.record_wall_clock);

    r.reject_unknown();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(e.field(), e.message(), r.line(e.field()));
    }
    return c;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
    return from_document(IniDocument::parse(text));
}

ExperimentConfig ExperimentConfig::load(const std::string& path, const std::vector<std::string>& overrides) {
    auto doc = IniDocument::load(path);
    for (const auto& o : overrides) doc.set(o);
    return from_document(doc);
}

void ExperimentConfig::validate() const {
    auto positive = [](double v, const char* field) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(field, "must be positive");
    };
    auto fail = [](const char* field, const char* msg) { throw ConfigError(field, msg); };

    if (model.dim < 1 || model.dim > 3) fail("model.dim", "must be 1, 2 or 3");
    if (!(model.coupling >= 0.0)) fail("model.coupling", "must be non-negative");
    if (!(model.softening >= 0.0)) fail("model.softening", "must be non-negative");
    if (model.softening > 0.0 && model.potential != PotentialKind::newtonian3d)
        fail("model.softening", "softening applies to newtonian3d only");
    positive(model.mass, "model.mass");

    if (init.n_particles < 2) fail("init.n_particles", "need at least two particles");
    positive(init.position_extent, "init.position_extent");
    if (!(init.velocity_extent >= 0.0)) fail("init.velocity_extent", "must be non-negative");
    if (init.virial_ratio) positive(*init.virial_ratio, "init.virial_ratio");

    if (integrator.dt) positive(*integrator.dt, "integrator.dt");
    positive(integrator.dt_fraction, "integrator.dt_fraction");
    positive(integrator.duration, "integrator.duration");
    if (integrator.n_steps && *integrator.n_steps == 0) fail("integrator.n_steps", "must be positive");
    positive(integrator.snapshot_interval, "integrator.snapshot_interval");
    if (integrator.snapshot_stride && *integrator.snapshot_stride == 0)
        fail("integrator.snapshot_stride", "must be positive");
    if (integrator.snapshot_stride && integrator.n_steps && *integrator.snapshot_stride > *integrator.n_steps)
        fail("integrator.snapshot_stride", "must not exceed n_steps");
    if (integrator.threads == 0) fail("integrator.threads", "must be positive");

    positive(grid.omega_factor, "grid.omega_factor");
    if (grid.omega) positive(*grid.omega, "grid.omega");
    if (grid.aspect) positive(*grid.aspect, "grid.aspect");
    positive(grid.q_extent, "grid.q_extent");
    positive(grid.p_extent, "grid.p_extent");

    if (!(fit.model_selection_margin > 0.0) || fit.model_selection_margin > 1.0)
        fail("fit.model_selection_margin", "must lie in (0, 1]");
    if (fit.n_energy_bins < 5) fail("fit.n_energy_bins", "need at least five energy bins");

    positive(gauge.lapse, "gauge.lapse");
    if (!gauge.shift.empty() && gauge.shift.size() != model.dim)
        fail("gauge.shift", "needs one component per spatial dimension");
    if (gauge.kind == GaugeKind::sinusoidal && !(std::abs(gauge.amplitude) < gauge.lapse))
        fail("gauge.amplitude", "amplitude must be smaller than the base lapse to keep N > 0");
    if (gauge.samples_per_axis == 0) fail("gauge.samples_per_axis", "must be positive");

    positive(analysis.discrepancy_tol, "analysis.discrepancy_tol");
    positive(analysis.qss_threshold, "analysis.qss_threshold");
    if (analysis.qss_window < 2) fail("analysis.qss_window", "window must hold at least two snapshots");
    if (analysis.qss_consecutive < 1) fail("analysis.qss_consecutive", "must be at least 1");

    if (output.directory.empty()) fail("output.directory", "must not be empty");
}

std::string ExperimentConfig::serialize() const {
    std::ostringstream o;
    auto opt = [](const auto& v) -> std::string {
        if (!v) return "none";
        if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, double>) {
            return format_double(*v);
        } else {
            return std::to_string(*v);
        }
    };
    auto b = [](bool v) { return v ? "true" : "false"; };
    o << "seed = " << seed << "\n";
    o << "\n[model]\n";
    o << "potential = " << to_string(model.potential) << "\n";
    o << "coupling = " << format_double(model.coupling) << "\n";
    o << "kac_scaling = " << b(model.kac_scaling) << "\n";
    o << "softening = " << format_double(model.softening) << "\n";
    o << "mass = " << format_double(model.mass) << "\n";
    o << "dim = " << model.dim << "\n";
    o << "\n[init]\n";
    o << "n_particles = " << init.n_particles << "\n";
    o << "position_extent = " << format_double(init.position_extent) << "\n";
    o << "velocity_extent = " << format_double(init.velocity_extent) << "\n";
    o << "virial_ratio = " << opt(init.virial_ratio) << "\n";
    o << "sampling = " << to_string(init.sampling) << "\n";
    o << "symmetric = " << b(init.symmetric) << "\n";
    o << "\n[integrator]\n";
    o << "scheme = leapfrog\n";
    o << "dt = " << opt(integrator.dt) << "\n";
    o << "dt_fraction = " << format_double(integrator.dt_fraction) << "\n";
    o << "duration = " << format_double(integrator.duration) << "\n";
    o << "n_steps = " << opt(integrator.n_steps) << "\n";
    o << "snapshot_interval = " << format_double(integrator.snapshot_interval) << "\n";
    o << "snapshot_stride = " << opt(integrator.snapshot_stride) << "\n";
    o << "threads = " << integrator.threads << "\n";
    o << "\n[grid]\n";
    o << "omega_factor = " << format_double(grid.omega_factor) << "\n";
    o << "omega = " << opt(grid.omega) << "\n";
    o << "aspect = " << opt(grid.aspect) << "\n";
    o << "q_extent = " << format_double(grid.q_extent) << "\n";
    o << "p_extent = " << format_double(grid.p_extent) << "\n";
    o << "\n[fit]\n";
    o << "constrain = " << b(fit.constrain) << "\n";
    o << "model_selection_margin = " << format_double(fit.model_selection_margin) << "\n";
    o << "n_energy_bins = " << fit.n_energy_bins << "\n";
    o << "\n[gauge]\n";
    o << "kind = " << to_string(gauge.kind) << "\n";
    o << "lapse = " << format_double(gauge.lapse) << "\n";
    o << "shift = ";
    for (std::size_t i = 0; i < gauge.shift.size(); ++i) o << (i ? ", " : "") << format_double(gauge.shift[i]);
    o << "\n";
    o << "amplitude = " << format_double(gauge.amplitude) << "\n";
    o << "frequency = " << format_double(gauge.frequency) << "\n";
    o << "wavenumber = " << format_double(gauge.wavenumber) << "\n";
    o << "sample_time = " << format_double(gauge.sample_time) << "\n";
    o << "samples_per_axis = " << gauge.samples_per_axis << "\n";
    o << "\n[analysis]\n";
    o << "discrepancy_tol = " << format_double(analysis.discrepancy_tol) << "\n";
    o << "qss_threshold = " << format_double(analysis.qss_threshold) << "\n";
    o << "qss_window = " << analysis.qss_window << "\n";
    o << "qss_consecutive = " << analysis.qss_consecutive << "\n";
    o << "\n[output]\n";
    o << "directory = " << output.directory << "\n";
    o << "snapshots = " << to_string(output.snapshots) << "\n";
    o << "record_wall_clock = " << b(output.record_wall_clock) << "\n";
    return o.str();
}

PairPotential ExperimentConfig::pair_potential() const {
    PairPotential pot;
    pot.kind = model.potential;
    pot.softening = model.softening;
    pot.coupling = model.kac_scaling ? model.coupling / static_cast<double>(init.n_particles) : model.coupling;
    pot.validate();
    return pot;
}

WaterbagInit ExperimentConfig::waterbag() const {
    WaterbagInit w;
    w.n_particles = init.n_particles;
    w.dim = model.dim;
    w.position_extent = init.position_extent;
    w.velocity_extent = init.velocity_extent;
    w.virial_ratio_target = init.virial_ratio;
    w.seed = seed;
    w.sampling = init.sampling;
    w.symmetric = init.symmetric;
    return w;
}

GaugeField ExperimentConfig::gauge_field() const {
    std::vector<double> shift = gauge.shift.empty() ? std::vector<double>(model.dim, 0.0) : gauge.shift;
    switch (gauge.kind) {
        case GaugeKind::trivial: return GaugeField::trivial(model.dim);
        case GaugeKind::constant: return GaugeField::constant(gauge.lapse, shift);
        case GaugeKind::sinusoidal:
            return GaugeField::sinusoidal(model.dim, gauge.lapse, gauge.amplitude, gauge.frequency, gauge.wavenumber);
    }
    return GaugeField::trivial(model.dim);
}

}  // namespace qss
