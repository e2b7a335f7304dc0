#include "emtbo/study.hpp"

#include "emtbo/csv.hpp"
#include "emtbo/error.hpp"
#include "emtbo/parallel.hpp"
#include "emtbo/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>

namespace emtbo {

using nlohmann::json;

std::string_view to_string(StudyKind kind) noexcept {
    switch (kind) {
        case StudyKind::BoGrid: return "bo-grid";
        case StudyKind::BoContinuous: return "bo-continuous";
        case StudyKind::BaselineSuite: return "baseline-suite";
        case StudyKind::Exceedance: return "exceedance";
        case StudyKind::MonteCarlo: return "monte-carlo";
        case StudyKind::ImpedanceScan: return "impedance-scan";
    }
    return "unknown";
}

StudyKind study_kind_from_string(std::string_view name) {
    for (auto k : {StudyKind::BoGrid, StudyKind::BoContinuous, StudyKind::BaselineSuite, StudyKind::Exceedance,
                   StudyKind::MonteCarlo, StudyKind::ImpedanceScan}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    throw Error(Errc::config_error, "unknown study kind '" + std::string(name) + "'");
}

namespace {

// Read-only view of one JSON object with its path, for field-path errors.
class Node {
public:
    Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            fail("expected an object");
        }
    }

    [[noreturn]] void fail(const std::string& msg) const { throw Error(Errc::config_error, path_ + ": " + msg); }
    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        throw Error(Errc::config_error, at(key) + ": " + msg);
    }

    [[nodiscard]] std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    [[nodiscard]] Node child(const std::string& key) const {
        if (!has(key)) {
            fail(key, "missing required field");
        }
        return Node(j_.at(key), at(key));
    }
    [[nodiscard]] std::optional<Node> maybe_child(const std::string& key) const {
        return has(key) ? std::optional<Node>(child(key)) : std::nullopt;
    }

    [[nodiscard]] double number(const std::string& key) const {
        if (!has(key)) {
            fail(key, "missing required field");
        }
        const json& v = j_.at(key);
        if (!v.is_number()) {
            fail(key, "expected a number");
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) {
            fail(key, "expected a finite number");
        }
        return d;
    }
    [[nodiscard]] double number(const std::string& key, double fallback) const {
        return has(key) ? number(key) : fallback;
    }

    [[nodiscard]] long integer(const std::string& key, long fallback, long min_value) const {
        if (!has(key)) {
            return fallback;
        }
        const json& v = j_.at(key);
        if (!v.is_number_integer()) {
            fail(key, "expected an integer");
        }
        const long n = v.get<long>();
        if (n < min_value) {
            fail(key, "must be >= " + std::to_string(min_value));
        }
        return n;
    }

    [[nodiscard]] std::uint64_t seed(const std::string& key) const {
        if (!has(key)) {
            return 0;
        }
        const json& v = j_.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            fail(key, "expected a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }

    [[nodiscard]] bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) {
            return fallback;
        }
        if (!j_.at(key).is_boolean()) {
            fail(key, "expected true or false");
        }
        return j_.at(key).get<bool>();
    }

    [[nodiscard]] std::string string(const std::string& key) const {
        if (!has(key)) {
            fail(key, "missing required field");
        }
        if (!j_.at(key).is_string()) {
            fail(key, "expected a string");
        }
        return j_.at(key).get<std::string>();
    }
    [[nodiscard]] std::string string(const std::string& key, const std::string& fallback) const {
        return has(key) ? string(key) : fallback;
    }

    [[nodiscard]] std::vector<double> numbers(const std::string& key) const {
        const json& v = j_.at(key);
        if (!v.is_array()) {
            fail(key, "expected an array of numbers");
        }
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
                fail(key, "element " + std::to_string(i) + " is not a finite number");
            }
            out.push_back(v[i].get<double>());
        }
        return out;
    }

    [[nodiscard]] Eigen::VectorXd vector(const std::string& key) const {
        const auto v = numbers(key);
        return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }

    [[nodiscard]] UniformBound bound(const std::string& key, UniformBound fallback) const {
        if (!has(key)) {
            return fallback;
        }
        const auto v = numbers(key);
        if (v.size() != 2 || !(v[0] > 0.0 && v[0] < v[1])) {
            fail(key, "expected [lower, upper] with 0 < lower < upper");
        }
        return UniformBound{v[0], v[1]};
    }

    // Rejects unknown keys so typos surface as validation errors.
    void only(std::initializer_list<const char*> keys) const {
        for (const auto& item : j_.items()) {
            if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; })) {
                fail(item.key(), "unknown field");
            }
        }
    }

    [[nodiscard]] const json& raw() const noexcept { return j_; }
    [[nodiscard]] const std::string& path() const noexcept { return path_; }

private:
    const json& j_;
    std::string path_;
};

// Runs `fn`, converting any library error into a config error at `path`.
template <typename Fn>
auto checked(const std::string& path, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        if (e.code() == Errc::config_error) {
            throw;
        }
        throw Error(Errc::config_error, path + ": " + e.what());
    }
}

emt::CircuitParams parse_circuit(const std::optional<Node>& n) {
    auto p = emt::CircuitParams::defaults();
    if (!n) {
        return p;
    }
    n->only({"resistance", "inductance", "capacitance", "frequency"});
    p.resistance = n->number("resistance", p.resistance);
    p.inductance = n->number("inductance", p.inductance);
    p.capacitance = n->number("capacitance", p.capacitance);
    p.frequency = n->number("frequency", p.frequency);
    checked(n->path(), [&] {
        p.validate();
        return 0;
    });
    return p;
}

ObjectiveSpec parse_objective(const Node& n, const std::filesystem::path& base_dir) {
    const std::string kind = n.string("kind");
    if (kind == "grid-file") {
        n.only({"kind", "path"});
        std::filesystem::path p = n.string("path");
        if (p.is_relative() && !base_dir.empty()) {
            p = base_dir / p;
        }
        if (!std::filesystem::exists(p)) {
            n.fail("path", "grid file not found: " + p.string());
        }
        checked(n.at("path"), [&] { return load_grid_objective(p).minimum().value; });
        return ObjectiveSpec{GridFileSource{p}};
    }
    if (kind == "synthetic-risk") {
        n.only({"kind", "k_count", "k_max", "phi_count", "phi_max", "k_min_at", "phi_min_at", "minimum", "maximum"});
        SyntheticRiskSpec s;
        s.k_count = static_cast<std::size_t>(n.integer("k_count", static_cast<long>(s.k_count), 2));
        s.k_max = n.number("k_max", s.k_max);
        s.phi_count = static_cast<std::size_t>(n.integer("phi_count", static_cast<long>(s.phi_count), 2));
        s.phi_max = n.number("phi_max", s.phi_max);
        s.k_min_at = n.number("k_min_at", s.k_min_at);
        s.phi_min_at = n.number("phi_min_at", s.phi_min_at);
        s.minimum = n.number("minimum", s.minimum);
        s.maximum = n.number("maximum", s.maximum);
        checked(n.path(), [&] { return make_synthetic_risk_grid(s).minimum().value; });
        return ObjectiveSpec{s};
    }
    if (kind == "energization") {
        n.only({"kind", "inputs", "timestep", "duration", "circuit"});
        EnergizationProblem p;
        const std::string inputs = n.string("inputs", "switching-time");
        if (inputs == "switching-time") {
            p.inputs = EnergizationInputs::SwitchingTime;
        } else if (inputs == "full") {
            p.inputs = EnergizationInputs::Full;
        } else {
            n.fail("inputs", "expected 'switching-time' or 'full'");
        }
        p.simulation.timestep = n.number("timestep", p.simulation.timestep);
        p.simulation.duration = n.number("duration", p.simulation.duration);
        if (!(p.simulation.timestep > 0.0) || !(p.simulation.duration > p.simulation.timestep)) {
            n.fail("timestep and duration must satisfy 0 < timestep < duration");
        }
        p.circuit = parse_circuit(n.maybe_child("circuit"));
        return ObjectiveSpec{p};
    }
    n.fail("kind", "unknown objective kind '" + kind + "'");
}

// Shared, thread-safe view of the objective in natural coordinates.
struct ObjectiveHandle {
    ObjectiveFn fn;
    std::optional<GridObjective> grid;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
};

ObjectiveHandle make_handle(const ObjectiveSpec& spec) {
    ObjectiveHandle h;
    if (const auto* file = std::get_if<GridFileSource>(&spec.source)) {
        h.grid = load_grid_objective(file->path);
    } else if (const auto* synth = std::get_if<SyntheticRiskSpec>(&spec.source)) {
        h.grid = make_synthetic_risk_grid(*synth);
    }
    if (h.grid) {
        auto g = std::make_shared<GridObjective>(*h.grid);
        h.fn = [g](std::span<const double> x) { return (*g)(x); };
        h.lower = Eigen::Vector2d(g->k_axis().front(), g->phi_axis().front());
        h.upper = Eigen::Vector2d(g->k_axis().back(), g->phi_axis().back());
        return h;
    }
    auto p = std::make_shared<EnergizationProblem>(std::get<EnergizationProblem>(spec.source));
    h.fn = [p](std::span<const double> x) { return (*p)(x); };
    h.lower = p->lower();
    h.upper = p->upper();
    return h;
}

Domain parse_domain(const Node& n, const ObjectiveHandle& h) {
    const std::string type = n.string("type");
    if (type == "grid") {
        n.only({"type", "axes"});
        if (!h.grid) {
            n.fail("type", "grid domains need a lookup-table objective");
        }
        std::vector<std::vector<double>> axes{h.grid->k_axis(), h.grid->phi_axis()};
        if (n.has("axes")) {
            const json& a = n.raw().at("axes");
            if (!a.is_array() || a.size() != 2) {
                n.fail("axes", "expected two axes");
            }
            axes.clear();
            for (std::size_t i = 0; i < 2; ++i) {
                if (!a[i].is_array()) {
                    n.fail("axes", "axis " + std::to_string(i) + " is not an array");
                }
                axes.push_back(a[i].get<std::vector<double>>());
            }
            for (double k : axes[0]) {
                for (double phi : axes[1]) {
                    checked(n.at("axes"), [&] { return h.grid->lookup(k, phi); });
                }
            }
        }
        return checked(n.path(), [&] { return Domain::grid(std::move(axes)); });
    }
    if (type == "box") {
        n.only({"type", "lower", "upper"});
        if (h.grid) {
            n.fail("type", "lookup-table objectives only support grid domains");
        }
        const Eigen::VectorXd lower = n.has("lower") ? n.vector("lower") : h.lower;
        const Eigen::VectorXd upper = n.has("upper") ? n.vector("upper") : h.upper;
        if (lower.size() != h.lower.size() || upper.size() != h.upper.size()) {
            n.fail("box dimension must be " + std::to_string(h.lower.size()));
        }
        constexpr double slack = 1e-12;
        if ((lower.array() < h.lower.array() - slack).any() || (upper.array() > h.upper.array() + slack).any()) {
            n.fail("box must lie inside the objective's input ranges");
        }
        return checked(n.path(), [&] { return Domain::box(lower, upper); });
    }
    n.fail("type", "expected 'grid' or 'box'");
}

void parse_surrogate(const std::optional<Node>& n, BoConfig& cfg) {
    if (!n) {
        return;
    }
    n->only({"kernel", "backend", "priors", "gradient", "mcmc", "standardize_outputs"});
    if (n->has("kernel")) {
        cfg.kernel = checked(n->at("kernel"), [&] { return kernel_kind_from_string(n->string("kernel")); });
    }
    if (n->has("backend")) {
        cfg.backend = checked(n->at("backend"), [&] { return inference_backend_from_string(n->string("backend")); });
    }
    cfg.standardize_outputs = n->boolean("standardize_outputs", cfg.standardize_outputs);
    if (auto p = n->maybe_child("priors")) {
        p->only({"amplitude", "lengthscale", "lengthscale_count", "noise_variance"});
        cfg.priors.amplitude = p->bound("amplitude", cfg.priors.amplitude);
        cfg.priors.lengthscale = p->bound("lengthscale", cfg.priors.lengthscale);
        cfg.priors.lengthscale_count = p->integer("lengthscale_count", cfg.priors.lengthscale_count, 1);
        cfg.priors.noise_variance = p->number("noise_variance", cfg.priors.noise_variance);
    }
    if (auto g = n->maybe_child("gradient")) {
        g->only({"steps", "step_size", "log_space"});
        cfg.grad.steps = static_cast<int>(g->integer("steps", cfg.grad.steps, 1));
        cfg.grad.step_size = g->number("step_size", cfg.grad.step_size);
        cfg.grad.log_space = g->boolean("log_space", cfg.grad.log_space);
    }
    if (auto m = n->maybe_child("mcmc")) {
        m->only({"samples", "burn_in", "thinning", "proposal_scale"});
        cfg.mcmc.sample_count = static_cast<int>(m->integer("samples", cfg.mcmc.sample_count, 1));
        cfg.mcmc.burn_in = static_cast<int>(m->integer("burn_in", cfg.mcmc.burn_in, 0));
        cfg.mcmc.thinning = static_cast<int>(m->integer("thinning", cfg.mcmc.thinning, 1));
        if (m->has("proposal_scale")) {
            cfg.mcmc.proposal_scale = m->numbers("proposal_scale");
        }
    }
}

void parse_acquisition(const std::optional<Node>& n, BoConfig& cfg) {
    if (!n) {
        return;
    }
    n->only({"kind", "threshold", "delta", "alpha"});
    const std::string kind = n->string("kind", "ei");
    if (kind == "ei") {
        cfg.acquisition = AcquisitionKind::ExpectedImprovement;
    } else if (kind == "bichon") {
        cfg.acquisition = AcquisitionKind::Bichon;
        cfg.threshold.threshold = n->number("threshold");
        cfg.threshold.delta = n->number("delta", cfg.threshold.delta);
        cfg.threshold.alpha = n->number("alpha", cfg.threshold.alpha);
    } else {
        n->fail("kind", "expected 'ei' or 'bichon'");
    }
}

OracleSpec parse_oracle(const std::optional<Node>& n, const ObjectiveHandle& h, const Domain& domain) {
    OracleSpec o;
    if (!n) {
        return o;
    }
    n->only({"kind", "value", "points", "tolerance_percent"});
    const std::string kind = n->string("kind");
    o.tolerance_percent = n->number("tolerance_percent", o.tolerance_percent);
    if (o.tolerance_percent < 0.0) {
        n->fail("tolerance_percent", "must be >= 0");
    }
    if (kind == "value") {
        o.kind = OracleSpec::Kind::Value;
        o.value = n->number("value");
        if (o.value == 0.0) {
            n->fail("value", "oracle must be nonzero");
        }
    } else if (kind == "dense-sweep") {
        o.kind = OracleSpec::Kind::DenseSweep;
        o.points = static_cast<int>(n->integer("points", o.points, 2));
        if (domain.is_grid() || domain.dimension() != 1) {
            n->fail("kind", "dense sweeps need a one-dimensional box domain");
        }
    } else if (kind == "grid-optimum") {
        o.kind = OracleSpec::Kind::GridOptimum;
        if (!h.grid) {
            n->fail("kind", "grid-optimum needs a lookup-table objective");
        }
    } else {
        n->fail("kind", "expected 'value', 'dense-sweep' or 'grid-optimum'");
    }
    return o;
}

std::vector<MethodSpec> parse_methods(const Node& root, const Domain& domain) {
    std::vector<MethodSpec> out;
    if (!root.has("methods")) {
        return out;
    }
    const json& arr = root.raw().at("methods");
    if (!arr.is_array() || arr.empty()) {
        root.fail("methods", "expected a non-empty array");
    }
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const Node m(arr[i], "methods[" + std::to_string(i) + "]");
        m.only({"method", "start", "label"});
        MethodSpec s;
        s.method = m.string("method");
        if (s.method != "bo" && s.method != "random" && s.method != "nelder-mead" && s.method != "dual-annealing") {
            m.fail("method", "expected bo, random, nelder-mead or dual-annealing");
        }
        if (s.method != "bo" && domain.is_grid()) {
            m.fail("method", "baselines need a box domain");
        }
        if (m.has("start")) {
            if (s.method != "nelder-mead") {
                m.fail("start", "only nelder-mead takes a start point");
            }
            s.start = m.vector("start");
            const Eigen::VectorXd& x = *s.start;
            if (x.size() != domain.dimension() || (x.array() < domain.lower().array()).any() ||
                (x.array() > domain.upper().array()).any()) {
                m.fail("start", "start point must lie in the domain");
            }
        } else if (s.method == "nelder-mead") {
            m.fail("start", "missing required field");
        }
        s.label = m.string("label", "");
        if (s.label.empty()) {
            s.label = s.method;
            if (s.start) {
                for (Eigen::Index j = 0; j < s.start->size(); ++j) {
                    s.label += (j == 0 ? "@" : ":") + format_number((*s.start)[j]);
                }
            }
        }
        if (s.label.find_first_of(",\n/") != std::string::npos) {
            m.fail("label", "labels may not contain ',', '/' or newlines");
        }
        for (const auto& prev : out) {
            if (prev.label == s.label) {
                m.fail("label", "duplicate method label '" + s.label + "'");
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

StudySpec parse_study(const json& doc, const std::filesystem::path& base_dir) {
    const Node root(doc, "");
    root.only({"id", "study", "seed", "objective", "domain", "sense", "output_divisor", "surrogate", "acquisition",
               "init_count", "max_iterations", "restarts", "search", "oracle", "methods", "budget", "exceedance",
               "monte_carlo", "impedance", "circuit"});
    StudySpec s;
    s.echo = doc;
    s.id = root.string("id", s.id);
    s.kind = checked("study", [&] { return study_kind_from_string(root.string("study")); });
    s.seed = root.seed("seed");

    if (s.kind == StudyKind::ImpedanceScan) {
        EnergizationProblem p;
        p.circuit = parse_circuit(root.maybe_child("circuit"));
        s.objective.source = p;
        const auto n = root.maybe_child("impedance");
        if (n) {
            n->only({"fmin", "fmax", "points", "simulate", "timestep"});
            s.impedance.fmin = n->number("fmin", s.impedance.fmin);
            s.impedance.fmax = n->number("fmax", s.impedance.fmax);
            s.impedance.points = static_cast<int>(n->integer("points", s.impedance.points, 1));
            s.impedance.simulate = n->boolean("simulate", s.impedance.simulate);
            s.impedance.timestep = n->number("timestep", s.impedance.timestep);
        }
        if (!(s.impedance.fmin > 0.0 && s.impedance.fmin <= s.impedance.fmax) || !(s.impedance.timestep > 0.0)) {
            root.fail("impedance", "need 0 < fmin <= fmax and a positive timestep");
        }
        return s;
    }

    s.objective = parse_objective(root.child("objective"), base_dir);
    const ObjectiveHandle h = checked("objective", [&] { return make_handle(s.objective); });
    s.bo.domain = parse_domain(root.child("domain"), h);

    const std::string sense = root.string("sense", "minimize");
    if (sense == "minimize") {
        s.sense = Sense::Minimize;
    } else if (sense == "maximize") {
        s.sense = Sense::Maximize;
    } else {
        root.fail("sense", "expected 'minimize' or 'maximize'");
    }
    s.output_divisor = root.number("output_divisor", s.kind == StudyKind::Exceedance ? 800.0 : 1.0);
    if (!(s.output_divisor > 0.0)) {
        root.fail("output_divisor", "must be positive");
    }

    parse_surrogate(root.maybe_child("surrogate"), s.bo);
    parse_acquisition(root.maybe_child("acquisition"), s.bo);
    s.bo.init_count = static_cast<int>(root.integer("init_count", s.bo.init_count, 1));
    s.bo.max_iterations = static_cast<int>(root.integer("max_iterations", s.bo.max_iterations, 0));
    s.bo.seed = s.seed;
    if (auto n = root.maybe_child("search")) {
        n->only({"probes", "local_starts", "initial_step", "min_step"});
        s.bo.search.probe_count = static_cast<int>(n->integer("probes", s.bo.search.probe_count, 1));
        s.bo.search.local_starts = static_cast<int>(n->integer("local_starts", s.bo.search.local_starts, 0));
        s.bo.search.initial_step = n->number("initial_step", s.bo.search.initial_step);
        s.bo.search.min_step = n->number("min_step", s.bo.search.min_step);
    }
    if (s.bo.priors.lengthscale_count != 1 && s.bo.priors.lengthscale_count != s.bo.domain.dimension()) {
        root.fail("surrogate.priors.lengthscale_count", "must be 1 or the domain dimension");
    }
    checked("surrogate", [&] {
        s.bo.validate();
        return 0;
    });
    s.restarts = static_cast<int>(root.integer("restarts", 1, 1));
    s.budget = root.integer("budget", s.budget, 1);
    s.methods = parse_methods(root, s.bo.domain);
    s.oracle = parse_oracle(root.maybe_child("oracle"), h, s.bo.domain);

    switch (s.kind) {
        case StudyKind::BoGrid:
            if (!s.bo.domain.is_grid()) {
                root.fail("domain.type", "bo-grid studies need a grid domain");
            }
            break;
        case StudyKind::BoContinuous:
            if (s.bo.domain.is_grid()) {
                root.fail("domain.type", "bo-continuous studies need a box domain");
            }
            break;
        case StudyKind::BaselineSuite:
            if (s.oracle.kind == OracleSpec::Kind::None) {
                root.fail("oracle", "missing required field");
            }
            break;
        case StudyKind::Exceedance: {
            if (h.grid) {
                root.fail("objective.kind", "exceedance studies need the energization objective");
            }
            auto& e = s.exceedance;
            e.study.output_divisor = s.output_divisor;
            e.study.priors = s.bo.priors;
            e.study.grad = s.bo.grad;
            e.study.search = s.bo.search;
            if (root.has("surrogate") && root.child("surrogate").has("kernel")) {
                e.study.kernel = s.bo.kernel;
            }
            if (auto n = root.maybe_child("exceedance")) {
                n->only({"threshold_kv", "threshold_quantile", "n_init", "n_acquire", "estimator_samples",
                         "oracle_samples", "delta", "alpha", "bins"});
                e.study.threshold_kv = n->number("threshold_kv", e.study.threshold_kv);
                if (n->has("threshold_quantile")) {
                    if (n->has("threshold_kv")) {
                        n->fail("give either threshold_kv or threshold_quantile, not both");
                    }
                    e.threshold_quantile = n->number("threshold_quantile");
                    if (!(*e.threshold_quantile > 0.0 && *e.threshold_quantile < 1.0)) {
                        n->fail("threshold_quantile", "must lie in (0, 1)");
                    }
                }
                e.study.n_init = static_cast<int>(n->integer("n_init", e.study.n_init, 2));
                e.study.n_acquire = static_cast<int>(n->integer("n_acquire", e.study.n_acquire, 0));
                e.study.estimator_samples = n->integer("estimator_samples", e.study.estimator_samples, 1);
                e.oracle_samples = n->integer("oracle_samples", e.oracle_samples, 0);
                e.study.delta = n->number("delta", e.study.delta);
                e.study.alpha = n->number("alpha", e.study.alpha);
                e.bins = static_cast<int>(n->integer("bins", e.bins, 1));
            }
            if (e.threshold_quantile && e.oracle_samples < 1) {
                root.fail("exceedance.oracle_samples", "a quantile threshold needs oracle samples");
            }
            e.study.seed = s.seed;
            checked("exceedance", [&] {
                e.study.validate();
                return 0;
            });
            break;
        }
        case StudyKind::MonteCarlo: {
            if (h.grid) {
                root.fail("objective.kind", "monte-carlo studies need the energization objective");
            }
            if (auto n = root.maybe_child("monte_carlo")) {
                n->only({"samples", "threshold_kv", "bins"});
                s.monte_carlo.samples = n->integer("samples", s.monte_carlo.samples, 1);
                s.monte_carlo.threshold_kv = n->number("threshold_kv", s.monte_carlo.threshold_kv);
                s.monte_carlo.bins = static_cast<int>(n->integer("bins", s.monte_carlo.bins, 1));
            }
            break;
        }
        case StudyKind::ImpedanceScan:
            break;
    }
    return s;
}

StudySpec load_study(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw Error(Errc::config_error, file.string() + ": cannot open config");
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(Errc::config_error, file.string() + ": " + e.what());
    }
    return parse_study(doc, file.parent_path());
}

void override_seed(StudySpec& spec, std::uint64_t seed) {
    spec.seed = seed;
    spec.bo.seed = seed;
    spec.exceedance.study.seed = seed;
    spec.echo["seed"] = seed;
}

namespace {

class Outputs {
public:
    explicit Outputs(const RunOptions& o) : dir_(o.out_dir) {
        if (dir_) {
            std::filesystem::create_directories(*dir_);
        }
    }

    template <typename Writer>
    void write(const std::string& name, Writer&& writer) {
        if (!dir_) {
            return;
        }
        const auto path = *dir_ / name;
        std::ofstream out(path);
        writer(out);
        out.close();
        if (!out) {
            throw Error(Errc::io_error, "cannot write " + path.string());
        }
        manifest.push_back(path);
    }

    std::vector<std::filesystem::path> manifest;

private:
    std::optional<std::filesystem::path> dir_;
};

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

double grid_optimum(const GridObjective& g, Sense sense) {
    return sense == Sense::Minimize ? g.risk().minCoeff() : g.risk().maxCoeff();
}

double dense_sweep(const ObjectiveHandle& h, const Domain& domain, int points, Sense sense, unsigned jobs) {
    const double lo = domain.lower()[0];
    const double hi = domain.upper()[0];
    std::vector<double> values(static_cast<std::size_t>(points));
    parallel_for(values.size(), jobs, [&](std::size_t i) {
        const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
        values[i] = h.fn(std::span<const double>(&x, 1));
    });
    return sense == Sense::Minimize ? *std::min_element(values.begin(), values.end())
                                    : *std::max_element(values.begin(), values.end());
}

double oracle_value(const StudySpec& spec, const ObjectiveHandle& h, unsigned jobs) {
    switch (spec.oracle.kind) {
        case OracleSpec::Kind::Value: return spec.oracle.value;
        case OracleSpec::Kind::GridOptimum: return grid_optimum(*h.grid, spec.sense);
        case OracleSpec::Kind::DenseSweep: return dense_sweep(h, spec.bo.domain, spec.oracle.points, spec.sense, jobs);
        case OracleSpec::Kind::None: break;
    }
    throw Error(Errc::config_error, "oracle: missing required field");
}

ScaledObjective scaled(const StudySpec& spec, const ObjectiveHandle& h) {
    return ScaledObjective(h.fn, spec.bo.domain.lower(), spec.bo.domain.upper(), spec.output_divisor, spec.sense);
}

std::string restart_name(int r, int restarts) {
    if (restarts == 1) {
        return "trace.csv";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "trace_r%02d.csv", r);
    return buf;
}

bool reached(double value, double oracle, const OracleSpec& o, bool grid) {
    const double gap = optimality_gap_percent(value, oracle);
    return grid ? value == oracle : gap <= o.tolerance_percent;
}

void run_bo_study(const StudySpec& spec, const RunOptions& opt, const ObjectiveHandle& h, Outputs& out,
                  json& summary) {
    const int n = spec.restarts;
    std::vector<BoTrace> traces(static_cast<std::size_t>(n));
    std::vector<long> counters(static_cast<std::size_t>(n));
    parallel_for(traces.size(), opt.jobs, [&](std::size_t r) {
        BoConfig cfg = spec.bo;
        cfg.seed = n == 1 ? spec.seed : derive_seed(spec.seed, "restart-" + std::to_string(r));
        ScaledObjective obj = scaled(spec, h);
        traces[r] = run_bo(cfg, obj);
        counters[r] = obj.evaluations();
    });

    std::optional<double> oracle;
    if (spec.oracle.kind != OracleSpec::Kind::None) {
        oracle = oracle_value(spec, h, opt.jobs);
        summary["oracle"] = *oracle;
    }
    json runs = json::array();
    int converged = 0;
    for (int r = 0; r < n; ++r) {
        const BoTrace& t = traces[static_cast<std::size_t>(r)];
        json run;
        run["restart"] = r;
        run["seed"] = n == 1 ? spec.seed : derive_seed(spec.seed, "restart-" + std::to_string(r));
        run["evaluations"] = t.evaluation_count;
        run["objective_calls"] = counters[static_cast<std::size_t>(r)];
        run["aborted"] = t.aborted;
        run["failures"] = t.failures;
        run["warnings"] = t.warnings.size();
        if (!t.records.empty()) {
            run["best_y"] = t.best().y;
            run["best_x"] = vector_json(t.best().x);
            const Hyperparams& th = t.records.back().theta;
            run["final_theta"] = {{"signal_amplitude", th.signal_amplitude},
                                  {"lengthscales", vector_json(th.lengthscales)},
                                  {"noise_variance", th.noise_variance}};
        }
        if (oracle && !t.records.empty()) {
            const bool grid = spec.bo.domain.is_grid();
            run["gap_percent"] = optimality_gap_percent(t.best().y, *oracle);
            json hit = nullptr;
            for (const auto& rec : t.records) {
                if (reached(rec.incumbent, *oracle, spec.oracle, grid)) {
                    hit = rec.iteration;
                    break;
                }
            }
            run["first_hit_iteration"] = hit;
            run["converged"] = !hit.is_null();
            converged += hit.is_null() ? 0 : 1;
        }
        runs.push_back(std::move(run));
        out.write(restart_name(r, n), [&](std::ostream& os) { write_trace_csv(os, trace_rows(t)); });
    }
    summary["restarts"] = n;
    summary["runs"] = std::move(runs);
    if (oracle) {
        summary["restarts_converged"] = converged;
    }
}

struct MethodOutcome {
    ComparisonRow row;
    std::vector<TraceRow> trace;
    double best = 0.0;
};

std::vector<MethodOutcome> run_methods(const StudySpec& spec, const ObjectiveHandle& h, double oracle,
                                       unsigned jobs) {
    std::vector<MethodSpec> methods = spec.methods;
    if (methods.empty()) {
        methods.push_back(MethodSpec{"bo", std::nullopt, "bo"});
    }
    std::vector<MethodOutcome> out(methods.size());
    parallel_for(methods.size(), jobs, [&](std::size_t i) {
        const MethodSpec& m = methods[i];
        const std::uint64_t seed = derive_seed(spec.seed, "method-" + m.label);
        ScaledObjective obj = scaled(spec, h);
        MethodOutcome& o = out[i];
        o.row.method = m.label;
        if (m.method == "bo") {
            BoConfig cfg = spec.bo;
            cfg.seed = seed;
            const BoTrace t = run_bo(cfg, obj);
            if (t.records.empty()) {
                throw Error(Errc::objective_failure, "method " + m.label + " produced no evaluations");
            }
            o.trace = trace_rows(t);
            o.best = t.best().y;
            o.row.evaluations = t.evaluation_count;
            o.row.converged = !t.aborted;
        } else {
            obj.set_budget(spec.budget);
            BaselineResult r;
            if (m.method == "random") {
                r = random_search(obj, spec.budget, seed);
            } else if (m.method == "nelder-mead") {
                r = nelder_mead(obj, obj.to_unit(*m.start), spec.budget);
            } else {
                r = dual_annealing(obj, spec.budget, seed);
            }
            o.trace = trace_rows(r, obj);
            o.best = obj.unscale_output(r.best_y);
            o.row.evaluations = r.evaluations;
            o.row.converged = r.converged;
        }
        o.row.gap_percent = optimality_gap_percent(o.best, oracle);
    });
    return out;
}

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const std::size_t j = std::min(i + 1, v.size() - 1);
    return v[i] + (pos - static_cast<double>(i)) * (v[j] - v[i]);
}

void run_exceedance_study(const StudySpec& spec, const RunOptions& opt, const ObjectiveHandle& h, Outputs& out,
                          json& summary) {
    ExceedanceStudy study = spec.exceedance.study;
    const Eigen::VectorXd lower = spec.bo.domain.lower();
    const Eigen::VectorXd upper = spec.bo.domain.upper();

    std::optional<OracleResult> oracle;
    if (spec.exceedance.oracle_samples > 0) {
        oracle = monte_carlo_oracle(h.fn, lower, upper, study.threshold_kv, spec.exceedance.oracle_samples,
                                    derive_seed(spec.seed, "oracle"), opt.jobs);
        if (spec.exceedance.threshold_quantile) {
            study.threshold_kv = quantile(oracle->values, *spec.exceedance.threshold_quantile);
            const auto above = std::count_if(oracle->values.begin(), oracle->values.end(),
                                             [&](double v) { return v > study.threshold_kv; });
            const auto used = static_cast<double>(oracle->values.size());
            oracle->probability = static_cast<double>(above) / used;
            oracle->ci_half_width = 1.96 * std::sqrt(oracle->probability * (1.0 - oracle->probability) / used);
        }
    }

    ScaledObjective obj(h.fn, lower, upper, study.output_divisor);
    const ClassificationResult result = run_classification(study, obj);
    const ExceedanceEstimate est = estimate_exceedance_probability(result, study, derive_seed(spec.seed, "estimator"));

    summary["threshold_kv"] = study.threshold_kv;
    summary["evaluations"] = result.trace.evaluation_count;
    summary["estimate"] = est.hard;
    summary["estimate_soft"] = est.soft;
    if (oracle) {
        summary["oracle_probability"] = oracle->probability;
        summary["oracle_ci_half_width"] = oracle->ci_half_width;
        summary["oracle_samples"] = oracle->samples;
        summary["oracle_failures"] = oracle->failures;
        summary["difference"] = std::abs(est.hard - oracle->probability);
        out.write("histogram.csv", [&](std::ostream& os) {
            write_histogram_csv(os, histogram(oracle->values, spec.exceedance.bins));
        });
    }
    const auto rows = trace_rows(result.trace);
    out.write("trace.csv", [&](std::ostream& os) { write_trace_csv(os, rows); });
    std::vector<TraceRow> acquired;
    std::copy_if(rows.begin(), rows.end(), std::back_inserter(acquired), [](const TraceRow& r) { return r.iter > 0; });
    out.write("acquired.csv", [&](std::ostream& os) { write_trace_csv(os, acquired); });
}

void run_monte_carlo_study(const StudySpec& spec, const RunOptions& opt, const ObjectiveHandle& h, Outputs& out,
                           json& summary) {
    const MonteCarloSpec& mc = spec.monte_carlo;
    const OracleResult r = monte_carlo_oracle(h.fn, spec.bo.domain.lower(), spec.bo.domain.upper(), mc.threshold_kv,
                                              mc.samples, derive_seed(spec.seed, "oracle"), opt.jobs);
    summary["threshold_kv"] = mc.threshold_kv;
    summary["probability"] = r.probability;
    summary["ci_half_width"] = r.ci_half_width;
    summary["samples"] = r.samples;
    summary["failures"] = r.failures;
    if (!r.values.empty()) {
        summary["quantiles"] = {{"p05", quantile(r.values, 0.05)},
                                {"p50", quantile(r.values, 0.50)},
                                {"p95", quantile(r.values, 0.95)},
                                {"max", *std::max_element(r.values.begin(), r.values.end())}};
    }
    out.write("histogram.csv", [&](std::ostream& os) { write_histogram_csv(os, histogram(r.values, mc.bins)); });
}

}  // namespace

std::vector<ImpedanceRow> impedance_scan(const emt::CircuitParams& circuit, const ImpedanceSpec& spec, unsigned jobs) {
    if (spec.points < 1 || !(spec.fmin > 0.0) || spec.fmax < spec.fmin) {
        throw Error(Errc::invalid_argument, "impedance scan needs points >= 1 and 0 < fmin <= fmax");
    }
    std::vector<ImpedanceRow> rows(static_cast<std::size_t>(spec.points));
    parallel_for(rows.size(), jobs, [&](std::size_t i) {
        const double f = spec.points == 1 ? spec.fmin
                                          : spec.fmin + (spec.fmax - spec.fmin) * static_cast<double>(i) /
                                                            static_cast<double>(spec.points - 1);
        rows[i].frequency_hz = f;
        rows[i].analytic_ohm = emt::input_impedance(circuit, f);
        if (spec.simulate) {
            rows[i].simulated_ohm = emt::simulated_impedance(circuit, f, spec.timestep);
        }
    });
    return rows;
}

double resolve_oracle(const StudySpec& spec, unsigned jobs) {
    if (spec.oracle.kind == OracleSpec::Kind::None) {
        throw Error(Errc::config_error, "oracle: missing required field");
    }
    return oracle_value(spec, make_handle(spec.objective), jobs);
}

std::vector<ComparisonRow> compare_methods(const StudySpec& spec, const RunOptions& options) {
    const ObjectiveHandle h = make_handle(spec.objective);
    const double oracle = resolve_oracle(spec, options.jobs);
    Outputs out(options);
    std::vector<ComparisonRow> rows;
    for (auto& m : run_methods(spec, h, oracle, options.jobs)) {
        out.write("trace_" + m.row.method + ".csv", [&](std::ostream& os) { write_trace_csv(os, m.trace); });
        rows.push_back(m.row);
    }
    out.write("comparison.csv", [&](std::ostream& os) { write_comparison_csv(os, rows); });
    return rows;
}

StudyReport run_study(const StudySpec& spec, const RunOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    StudyReport report;
    report.id = spec.id;
    report.kind = spec.kind;
    Outputs out(options);
    json summary;
    summary["id"] = spec.id;
    summary["study"] = to_string(spec.kind);
    summary["seed"] = spec.seed;
    summary["config"] = spec.echo;

    switch (spec.kind) {
        case StudyKind::BoGrid:
        case StudyKind::BoContinuous:
            run_bo_study(spec, options, make_handle(spec.objective), out, summary);
            break;
        case StudyKind::BaselineSuite: {
            const ObjectiveHandle h = make_handle(spec.objective);
            const double oracle = oracle_value(spec, h, options.jobs);
            summary["oracle"] = oracle;
            std::vector<ComparisonRow> rows;
            json methods = json::array();
            for (auto& m : run_methods(spec, h, oracle, options.jobs)) {
                out.write("trace_" + m.row.method + ".csv", [&](std::ostream& os) { write_trace_csv(os, m.trace); });
                methods.push_back({{"method", m.row.method},
                                   {"evaluations", m.row.evaluations},
                                   {"best_y", m.best},
                                   {"gap_percent", m.row.gap_percent},
                                   {"converged", m.row.converged}});
                rows.push_back(m.row);
            }
            out.write("comparison.csv", [&](std::ostream& os) { write_comparison_csv(os, rows); });
            summary["methods"] = std::move(methods);
            break;
        }
        case StudyKind::Exceedance:
            run_exceedance_study(spec, options, make_handle(spec.objective), out, summary);
            break;
        case StudyKind::MonteCarlo:
            run_monte_carlo_study(spec, options, make_handle(spec.objective), out, summary);
            break;
        case StudyKind::ImpedanceScan: {
            const auto& circuit = std::get<EnergizationProblem>(spec.objective.source).circuit;
            const auto rows = impedance_scan(circuit, spec.impedance, options.jobs);
            const auto peak = std::max_element(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
                return a.analytic_ohm < b.analytic_ohm;
            });
            summary["peak_frequency_hz"] = peak->frequency_hz;
            summary["peak_impedance_ohm"] = peak->analytic_ohm;
            if (spec.impedance.simulate) {
                double worst = 0.0;
                for (const auto& r : rows) {
                    worst = std::max(worst, std::abs(*r.simulated_ohm - r.analytic_ohm) / r.analytic_ohm);
                }
                summary["max_relative_deviation"] = worst;
            }
            out.write("impedance.csv", [&](std::ostream& os) { write_impedance_csv(os, rows); });
            break;
        }
    }

    summary["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (options.out_dir) {
        const auto path = *options.out_dir / "summary.json";
        out.manifest.push_back(path);
        json files = json::array();
        for (const auto& p : out.manifest) {
            files.push_back(p.filename().string());
        }
        summary["manifest"] = files;
        std::ofstream os(path);
        os << summary.dump(2) << '\n';
        if (!os) {
            throw Error(Errc::io_error, "cannot write " + path.string());
        }
    }
    report.summary = std::move(summary);
    report.manifest = std::move(out.manifest);
    return report;
}

}  // namespace emtbo
