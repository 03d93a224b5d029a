#include "bdsde/cli.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "bdsde/error.hpp"

#ifndef BDSDE_VERSION
#define BDSDE_VERSION "0.0.0"
#endif

namespace bdsde {

const char* to_string(Study study) noexcept {
    switch (study) {
        case Study::scheme: return "scheme";
        case Study::rate: return "rate";
        case Study::regularity: return "regularity";
        case Study::euler: return "euler";
        case Study::moments: return "moments";
    }
    return "unknown";
}

std::string version_string() { return "bdsde " BDSDE_VERSION; }

// ---------------------------------------------------------------------------
// Inline problems

ProblemSpec make_inline_problem(const InlineProblem& t) {
    auto require = [](const std::vector<double>& v, std::size_t n, const char* key) {
        if (v.size() != n)
            fail(ErrorKind::configuration,
                 std::string("problem.") + key + ": expected " + std::to_string(n) + " coefficients");
    };
    require(t.drift, 2, "drift");
    require(t.diffusion, 2, "diffusion");
    require(t.driver, 4, "driver");
    require(t.backward, 3, "backward");
    if (t.terminal.empty()) fail(ErrorKind::configuration, "problem.terminal: expected at least one coefficient");

    ProblemSpec s;
    s.name = "inline";
    s.horizon = t.horizon;
    s.x0 = Vector::Constant(1, t.x0);
    s.lipschitz = t.lipschitz;
    const auto b = t.drift;
    const auto sg = t.diffusion;
    const auto f = t.driver;
    const auto g = t.backward;
    s.drift = [b](const Vector& x) -> Vector { return Vector::Constant(1, b[0] + b[1] * x(0)); };
    s.diffusion = [sg](const Vector& x) -> Matrix { return Matrix::Constant(1, 1, sg[0] + sg[1] * x(0)); };
    s.driver = [f](double, const Vector& x, double y, const Vector& z) {
        return f[0] + f[1] * x(0) + f[2] * y + f[3] * z(0);
    };
    s.backward_driver = [g](double, const Vector& x, double y) -> Vector {
        return Vector::Constant(1, g[0] + g[1] * x(0) + g[2] * y);
    };
    Poly h = Poly::univariate(t.terminal);
    s.terminal = [h](const Vector& x) { return h(x); };
    s.terminal_poly = h;
    s.flags = {true, sg[1] == 0.0, true, true, true};
    if (b[1] == 0.0 && sg[1] == 0.0) {
        s.transition = ForwardTransition::additive;
    } else if (b[0] == 0.0 && sg[0] == 0.0) {
        s.transition = ForwardTransition::geometric;
        s.geometric = {b[1], sg[1]};
    }
    return s;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
    fail(ErrorKind::configuration, "config key '" + key + "': " + why + " (got '" + value + "')");
}

double parse_real(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(value, &used);
    } catch (const std::exception&) {
        bad_value(key, value, "expected a number");
    }
    if (used != value.size()) bad_value(key, value, "expected a number");
    return out;
}

long long parse_integer(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(value, &used);
    } catch (const std::exception&) {
        bad_value(key, value, "expected an integer");
    }
    if (used != value.size()) bad_value(key, value, "expected an integer");
    return out;
}

int parse_count(const std::string& key, const std::string& value, long long lo = 1) {
    const long long v = parse_integer(key, value);
    if (v < lo || v > 1'000'000'000) bad_value(key, value, "out of range");
    return static_cast<int>(v);
}

std::vector<std::string> split_list(const std::string& value) {
    std::string s = value;
    for (char& c : s)
        if (c == ',' || c == '{' || c == '}' || c == '[' || c == ']') c = ' ';
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string item; in >> item;) out.push_back(item);
    return out;
}

std::vector<double> parse_reals(const std::string& key, const std::string& value) {
    std::vector<double> out;
    for (const auto& item : split_list(value)) out.push_back(parse_real(key, item));
    return out;
}

InlineProblem& inline_table(RunConfig& cfg) {
    if (!cfg.inline_problem) cfg.inline_problem.emplace();
    return *cfg.inline_problem;
}

using Setter = void (*)(RunConfig&, const std::string& key, const std::string& value);

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"problem.name", [](RunConfig& c, const std::string&, const std::string& v) { c.problem = v; }},
        {"problem.horizon",
         [](RunConfig& c, const std::string& k, const std::string& v) { inline_table(c).horizon = parse_real(k, v); }},
        {"problem.x0",
         [](RunConfig& c, const std::string& k, const std::string& v) { inline_table(c).x0 = parse_real(k, v); }},
        {"problem.lipschitz",
         [](RunConfig& c, const std::string& k, const std::string& v) { inline_table(c).lipschitz = parse_real(k, v); }},
        {"problem.drift",
         [](RunConfig& c, const std::string& k, const std::string& v) { inline_table(c).drift = parse_reals(k, v); }},
        {"problem.diffusion",
         [](RunConfig& c, const std::string& k, const std::string& v) { inline_table(c).diffusion = parse_reals(k, v); }},
        {"problem.driver",
         [](RunConfig& c, const std::string& k, const std::string& v) { inline_table(c).driver = parse_reals(k, v); }},
        {"problem.backward",
         [](RunConfig& c, const std::string& k, const std::string& v) { inline_table(c).backward = parse_reals(k, v); }},
        {"problem.terminal",
         [](RunConfig& c, const std::string& k, const std::string& v) { inline_table(c).terminal = parse_reals(k, v); }},
        {"run.study",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             for (Study s : {Study::scheme, Study::rate, Study::regularity, Study::euler, Study::moments})
                 if (v == to_string(s)) {
                     c.study = s;
                     return;
                 }
             bad_value(k, v, "expected one of scheme, rate, regularity, euler, moments");
         }},
        {"run.n_list",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             c.n_list.clear();
             for (const auto& item : split_list(v)) c.n_list.push_back(parse_count(k, item));
             if (c.n_list.empty()) bad_value(k, v, "expected at least one step count");
         }},
        {"run.M", [](RunConfig& c, const std::string& k, const std::string& v) { c.samples = parse_count(k, v); }},
        {"run.b_reps", [](RunConfig& c, const std::string& k, const std::string& v) { c.b_reps = parse_count(k, v); }},
        {"run.seed",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             const long long s = parse_integer(k, v);
             if (s < 0) bad_value(k, v, "expected a non-negative integer");
             c.seed = static_cast<std::uint64_t>(s);
         }},
        {"run.threads", [](RunConfig& c, const std::string& k, const std::string& v) { c.threads = parse_count(k, v); }},
        {"run.kappa", [](RunConfig& c, const std::string& k, const std::string& v) { c.kappa = parse_count(k, v); }},
        {"backend.kind",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             if (v == "exact") c.backend.kind = Backend::exact;
             else if (v == "lsmc") c.backend.kind = Backend::lsmc;
             else bad_value(k, v, "expected exact or lsmc");
         }},
        {"backend.degree",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.backend.basis.degree = parse_count(k, v, 0); }},
        {"backend.ridge",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.backend.basis.ridge = parse_real(k, v); }},
        {"picard.tol", [](RunConfig& c, const std::string& k, const std::string& v) { c.picard.tol = parse_real(k, v); }},
        {"picard.max_iters",
         [](RunConfig& c, const std::string& k, const std::string& v) { c.picard.max_iters = parse_count(k, v); }},
        {"output.out_path",
         [](RunConfig& c, const std::string& k, const std::string& v) {
             if (v.empty()) bad_value(k, v, "expected a file path");
             c.out_path = v;
         }},
    };
    return table;
}

// A bare key resolves to the unique section that defines it.
std::string canonical_key(const std::string& key) {
    const auto& table = setters();
    if (table.count(key)) return key;
    if (key.find('.') == std::string::npos) {
        std::string hit;
        for (const auto& [name, setter] : table) {
            if (name.substr(name.find('.') + 1) == key) {
                if (!hit.empty()) fail(ErrorKind::configuration, "config key '" + key + "' is ambiguous");
                hit = name;
            }
        }
        if (!hit.empty()) return hit;
    }
    fail(ErrorKind::configuration, "unknown config key '" + key + "'");
}

}  // namespace

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    const std::string name = canonical_key(key);
    setters().at(name)(cfg, name, value);
    cfg.echo.emplace_back(name, value);
}

RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    std::string section;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) line.erase(comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                fail(ErrorKind::configuration, "line " + std::to_string(lineno) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorKind::configuration, "line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(ErrorKind::configuration, "line " + std::to_string(lineno) + ": empty key");
        set_config_value(cfg, section.empty() ? key : section + "." + key, value);
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::configuration, "cannot read config file '" + path + "'");
    return parse_config(in);
}

CatalogEntry resolve_problem(const RunConfig& cfg) {
    if (cfg.problem == "inline") {
        CatalogEntry e{make_inline_problem(cfg.inline_problem.value_or(InlineProblem{})), {}};
        e.oracle.kind = OracleKind::fine_grid_reference;
        try {
            e.spec.validate();
        } catch (const Error& err) {
            fail(ErrorKind::configuration, std::string("inline problem: ") + err.what());
        }
        return e;
    }
    if (cfg.inline_problem)
        fail(ErrorKind::configuration, "problem coefficient keys need problem.name = inline (got '" + cfg.problem + "')");
    try {
        return builtin_problem(cfg.problem);
    } catch (const Error& err) {
        fail(ErrorKind::configuration, std::string("config key 'problem.name': ") + err.what());
    }
}

void validate_config(const RunConfig& cfg, const CatalogEntry& problem) {
    auto reject = [](const std::string& msg) { fail(ErrorKind::configuration, msg); };
    const ProblemSpec& spec = problem.spec;
    if (cfg.n_list.empty()) reject("config key 'run.n_list': must not be empty");
    for (int n : cfg.n_list)
        if (n < 1) reject("config key 'run.n_list': step counts must be >= 1");
    const bool sweep = cfg.study == Study::rate || cfg.study == Study::regularity || cfg.study == Study::euler;
    if (sweep) {
        for (std::size_t i = 1; i < cfg.n_list.size(); ++i)
            if (cfg.n_list[i] <= cfg.n_list[i - 1]) reject("config key 'run.n_list': must be strictly ascending");
        if (cfg.n_list.size() < 3) reject("config key 'run.n_list': a rate fit needs at least three step counts");
    }
    const int n_max = *std::max_element(cfg.n_list.begin(), cfg.n_list.end());
    for (int n : cfg.n_list)
        if (n_max % n != 0) reject("config key 'run.n_list': every count must divide the largest");
    try {
        cfg.backend.basis.validate();
    } catch (const Error& e) {
        reject(std::string("config key 'backend.degree'/'backend.ridge': ") + e.what());
    }
    try {
        cfg.picard.validate();
    } catch (const Error& e) {
        reject(std::string("config key 'picard.tol'/'picard.max_iters': ") + e.what());
    }

    const bool closed_form = problem.oracle.kind == OracleKind::closed_form;
    switch (cfg.study) {
        case Study::scheme:
        case Study::rate:
            if (cfg.backend.kind == Backend::exact && !spec.flags.exact_backend_capable())
                reject("config key 'backend.kind': exact backend needs affine/polynomial structure, which problem " +
                       spec.name + " lacks");
            if (!closed_form) {
                if (!spec.flags.exact_backend_capable())
                    reject("problem " + spec.name + " has no closed form and cannot build a fine-grid reference");
                if (cfg.kappa < kMinReferenceRefinement)
                    reject("config key 'run.kappa': fine-grid reference needs kappa >= " +
                           std::to_string(kMinReferenceRefinement));
            }
            break;
        case Study::regularity:
            if (!closed_form) reject("regularity study needs a closed-form oracle; problem " + spec.name + " has none");
            if (cfg.kappa < 2) reject("config key 'run.kappa': regularity study needs kappa >= 2");
            break;
        case Study::euler:
            if (spec.transition == ForwardTransition::none)
                reject("euler study needs an exact forward transition; problem " + spec.name + " has none");
            break;
        case Study::moments:
            if (cfg.samples < 1000) reject("config key 'run.M': moment study needs M >= 1000");
            break;
    }
    for (int n : cfg.n_list) {
        if (cfg.study == Study::scheme || cfg.study == Study::rate) {
            if (spec.horizon / n * spec.lipschitz >= 1.0)
                reject("config key 'run.n_list': n = " + std::to_string(n) +
                       " violates the contraction condition mesh * lipschitz < 1");
        }
    }
}

// ---------------------------------------------------------------------------
// Parallel replications

void parallel_for(int count, int threads, const std::function<void(int)>& body) {
    if (count <= 0) return;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
    const int workers = std::max(1, std::min(threads, count));
    if (workers == 1) {
        for (int i = 0; i < count; ++i) {
            try {
                body(i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
                break;
            }
        }
    } else {
        std::mutex mutex;
        int next = 0;
        bool stop = false;
        auto worker = [&] {
            for (;;) {
                int i = 0;
                {
                    std::lock_guard lock(mutex);
                    if (stop || next >= count) return;
                    i = next++;
                }
                try {
                    body(i);
                } catch (...) {
                    errors[static_cast<std::size_t>(i)] = std::current_exception();
                    std::lock_guard lock(mutex);
                    stop = true;
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Oracle confirmation

OracleConfirmation confirm_oracle(const CatalogEntry& problem, std::uint64_t seed, const PicardConfig& picard,
                                  int paths, int samples) {
    if (problem.oracle.kind != OracleKind::closed_form)
        fail(ErrorKind::capability, "confirm_oracle: problem " + problem.spec.name + " has no closed form");
    const ProblemSpec& spec = problem.spec;
    const Partition grid = make_partition(spec.horizon, kConfirmationSteps);
    const BackendConfig exact{Backend::exact, {}};
    double sum_z0 = 0.0;
    double sum_y = 0.0;
    for (int b = 0; b < paths; ++b) {
        const PathBundle bundle =
            sample_bundle(grid, samples, spec.dim_x, spec.dim_b, seed, static_cast<std::uint32_t>(b));
        const ForwardPaths fwd = euler_paths(spec, grid, bundle);
        const SchemeSolution sol = backward_solve(spec, grid, bundle, fwd, exact, picard);
        const OracleField truth = evaluate_oracle(problem.oracle, grid, bundle);
        sum_z0 += (sol.Z[0] - truth.z[0]).squaredNorm();
        sum_y += (sol.Y - truth.y).squaredNorm();
    }
    OracleConfirmation c;
    c.steps = kConfirmationSteps;
    c.paths = paths;
    c.rms_z0 = std::sqrt(sum_z0 / (static_cast<double>(paths) * samples * spec.dim_x));
    c.rms_y = std::sqrt(sum_y / (static_cast<double>(paths) * samples * (kConfirmationSteps + 1)));
    c.tolerance = kConfirmationTolerance;
    c.passed = c.rms_z0 <= c.tolerance && c.rms_y <= c.tolerance;
    return c;
}

// ---------------------------------------------------------------------------
// Studies

namespace {

CsvRow base_row(const RunConfig& cfg, const ProblemSpec& spec, const char* backend) {
    CsvRow row;
    row.study = to_string(cfg.study);
    row.problem = spec.name;
    row.samples = cfg.samples;
    row.b_reps = cfg.b_reps;
    row.seed = cfg.seed;
    row.backend = backend;
    return row;
}

CsvRow slope_row(const RunConfig& cfg, const ProblemSpec& spec, const char* backend, const std::vector<double>& meshes,
                 const std::vector<double>& values) {
    CsvRow row = base_row(cfg, spec, backend);
    // An exact scheme has zero error at every n and no rate to fit.
    const bool positive = std::all_of(values.begin(), values.end(), [](double v) { return v > 0.0; });
    if (positive) row.slope = fit_rate(meshes, values).slope;
    return row;
}

// Replications of one scheme run at n steps; W is shared, B varies with b_index.
ErrorReport scheme_errors(const RunConfig& cfg, const CatalogEntry& problem, int n, int resolution) {
    const ProblemSpec& spec = problem.spec;
    const Partition grid = make_partition(spec.horizon, n);
    std::vector<ReplicateErrors> reps(static_cast<std::size_t>(cfg.b_reps));

    if (problem.oracle.kind == OracleKind::closed_form) {
        const PathBundle shared = sample_bundle(grid, cfg.samples, spec.dim_x, spec.dim_b, cfg.seed, 0, resolution);
        const ForwardPaths fwd = euler_paths(spec, grid, shared);
        parallel_for(cfg.b_reps, cfg.threads, [&](int r) {
            const PathBundle bundle = with_b_path(shared, grid, static_cast<std::uint32_t>(r));
            const SchemeSolution sol = backward_solve(spec, grid, bundle, fwd, cfg.backend, cfg.picard);
            reps[static_cast<std::size_t>(r)] = replicate_errors(sol, evaluate_oracle(problem.oracle, grid, bundle));
        });
    } else {
        const Partition fine = refine(grid, cfg.kappa);
        const PathBundle shared_fine =
            sample_bundle(fine, cfg.samples, spec.dim_x, spec.dim_b, cfg.seed, 0, resolution);
        const PathBundle shared = coarsen(shared_fine, cfg.kappa);
        const ForwardPaths fwd = euler_paths(spec, grid, shared);
        parallel_for(cfg.b_reps, cfg.threads, [&](int r) {
            const PathBundle fine_bundle = with_b_path(shared_fine, fine, static_cast<std::uint32_t>(r));
            PathBundle bundle = shared;
            bundle.dB = coarsen(fine_bundle, cfg.kappa).dB;
            bundle.b_index = fine_bundle.b_index;
            const SchemeSolution sol = backward_solve(spec, grid, bundle, fwd, cfg.backend, cfg.picard);
            const OracleField ref = reference_field(spec, grid, fine_bundle, cfg.kappa, cfg.picard);
            reps[static_cast<std::size_t>(r)] = replicate_errors(sol, ref);
        });
    }
    ErrorReport report = summarize_errors(reps, grid);
    report.samples = cfg.samples;
    report.b_reps = cfg.b_reps;
    report.seed = cfg.seed;
    report.backend = to_string(cfg.backend.kind);
    return report;
}

std::vector<CsvRow> scheme_study(const RunConfig& cfg, const CatalogEntry& problem) {
    const ProblemSpec& spec = problem.spec;
    const int n_max = *std::max_element(cfg.n_list.begin(), cfg.n_list.end());
    const char* backend = to_string(cfg.backend.kind);
    std::vector<CsvRow> rows;
    std::vector<double> meshes;
    std::vector<double> errors;
    for (int n : cfg.n_list) {
        const ErrorReport rep = scheme_errors(cfg, problem, n, n_max / n);
        CsvRow row = base_row(cfg, spec, backend);
        row.n = n;
        row.mesh = rep.mesh;
        row.err_y_sup = rep.err_y_sup;
        row.err_z_int = rep.err_z_int;
        row.err_total = rep.err_total;
        row.ci_halfwidth = rep.ci_halfwidth;
        rows.push_back(row);
        meshes.push_back(rep.mesh);
        errors.push_back(rep.err_total);
    }
    if (cfg.study == Study::rate) rows.push_back(slope_row(cfg, spec, backend, meshes, errors));
    return rows;
}

std::vector<CsvRow> regularity_study(const RunConfig& cfg, const CatalogEntry& problem) {
    const ProblemSpec& spec = problem.spec;
    const int n_max = cfg.n_list.back();
    const char* backend = to_string(cfg.backend.kind);
    std::vector<CsvRow> rows;
    std::vector<double> meshes;
    std::vector<double> stats;
    for (int n : cfg.n_list) {
        const Partition grid = make_partition(spec.horizon, n);
        const Partition fine = refine(grid, cfg.kappa);
        const PathBundle shared =
            sample_bundle(fine, cfg.samples, spec.dim_x, spec.dim_b, cfg.seed, 0, n_max / n);
        std::vector<RegularityParts> reps(static_cast<std::size_t>(cfg.b_reps));
        parallel_for(cfg.b_reps, cfg.threads, [&](int r) {
            const PathBundle bundle = with_b_path(shared, fine, static_cast<std::uint32_t>(r));
            reps[static_cast<std::size_t>(r)] =
                l2_regularity_replicate(spec, problem.oracle, grid, bundle, cfg.kappa, cfg.backend.basis);
        });
        const RegularityReport rep = l2_regularity(reps);
        CsvRow row = base_row(cfg, spec, backend);
        row.n = n;
        row.mesh = grid.mesh();
        row.err_y_sup = rep.y_part;
        row.err_z_int = rep.z_part;
        row.reg_stat = rep.reg_stat;
        rows.push_back(row);
        meshes.push_back(grid.mesh());
        stats.push_back(rep.reg_stat);
    }
    rows.push_back(slope_row(cfg, spec, backend, meshes, stats));
    return rows;
}

std::vector<CsvRow> euler_study(const RunConfig& cfg, const CatalogEntry& problem) {
    const ProblemSpec& spec = problem.spec;
    const auto table = euler_strong_error(spec, cfg.n_list, cfg.samples, cfg.seed);
    std::vector<CsvRow> rows;
    std::vector<double> meshes;
    std::vector<double> rms;
    for (const auto& e : table) {
        CsvRow row = base_row(cfg, spec, "euler");
        row.b_reps = 1;
        row.n = e.n;
        row.mesh = e.mesh;
        row.err_y_sup = e.mse_sup;
        row.err_total = e.rms;
        rows.push_back(row);
        meshes.push_back(e.mesh);
        rms.push_back(e.rms);
    }
    CsvRow slope = slope_row(cfg, spec, "euler", meshes, rms);
    slope.b_reps = 1;
    rows.push_back(slope);
    return rows;
}

// One row per (n, lag): mesh holds the lag's |t - s|, err_y_sup the mean
// square increment of X and err_total its ratio to |t - s|.
std::vector<CsvRow> moment_study(const RunConfig& cfg, const CatalogEntry& problem) {
    const ProblemSpec& spec = problem.spec;
    const int n_max = *std::max_element(cfg.n_list.begin(), cfg.n_list.end());
    std::vector<CsvRow> rows;
    for (int n : cfg.n_list) {
        const Partition grid = make_partition(spec.horizon, n);
        const PathBundle bundle = sample_bundle(grid, cfg.samples, spec.dim_x, spec.dim_b, cfg.seed, 0, n_max / n);
        const ForwardPaths fwd = euler_paths(spec, grid, bundle);
        const MomentTable table = moment_check(fwd.X, grid);
        for (const auto& m : table.rows) {
            CsvRow row = base_row(cfg, spec, "euler");
            row.b_reps = 1;
            row.n = n;
            row.mesh = m.dt;
            row.err_y_sup = m.mean_sq;
            row.err_total = m.ratio;
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace

StudyResult run_study(const RunConfig& cfg) {
    const CatalogEntry problem = resolve_problem(cfg);
    validate_config(cfg, problem);
    StudyResult result;
    const bool uses_oracle = cfg.study == Study::scheme || cfg.study == Study::rate || cfg.study == Study::regularity;
    if (uses_oracle && problem.oracle.requires_confirmation) {
        result.confirmation = confirm_oracle(problem, cfg.seed, cfg.picard);
        if (!result.confirmation->passed) {
            char msg[160];
            std::snprintf(msg, sizeof msg, "oracle for %s failed fine-grid confirmation (rms Z0 %.3g, rms Y %.3g)",
                          problem.spec.name.c_str(), result.confirmation->rms_z0, result.confirmation->rms_y);
            fail(ErrorKind::numeric, msg);
        }
    }
    switch (cfg.study) {
        case Study::scheme:
        case Study::rate: result.rows = scheme_study(cfg, problem); break;
        case Study::regularity: result.rows = regularity_study(cfg, problem); break;
        case Study::euler: result.rows = euler_study(cfg, problem); break;
        case Study::moments: result.rows = moment_study(cfg, problem); break;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Output

namespace {

void put_real(std::string& out, const std::optional<double>& v) {
    if (!v) return;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    out += buf;
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) fail(ErrorKind::configuration, "cannot write output file '" + path.string() + "'");
}

}  // namespace

std::string format_csv(const std::vector<CsvRow>& rows) {
    std::string out = kCsvHeader;
    out += '\n';
    for (const auto& r : rows) {
        out += r.study + ',' + r.problem + ',';
        if (r.n) out += std::to_string(*r.n);
        out += ',';
        put_real(out, r.mesh);
        out += ',' + std::to_string(r.samples) + ',' + std::to_string(r.b_reps) + ',' + std::to_string(r.seed) + ',' +
               r.backend + ',';
        put_real(out, r.err_y_sup);
        out += ',';
        put_real(out, r.err_z_int);
        out += ',';
        put_real(out, r.err_total);
        out += ',';
        put_real(out, r.reg_stat);
        out += ',';
        put_real(out, r.slope);
        out += ',';
        put_real(out, r.ci_halfwidth);
        out += '\n';
    }
    return out;
}

std::string manifest_path(const std::string& csv_path) {
    std::filesystem::path p(csv_path);
    const std::string stem = p.extension() == ".csv" ? p.stem().string() : p.filename().string();
    return (p.parent_path() / (stem + ".manifest.json")).string();
}

int exit_status(const Error& e) noexcept {
    switch (e.kind()) {
        case ErrorKind::numeric:
        case ErrorKind::convergence:
        case ErrorKind::conditioning: return 3;
        default: return 2;
    }
}

int run(const RunConfig& cfg, std::ostream& log) {
    const auto start = std::chrono::steady_clock::now();
    const std::string started_at = utc_timestamp();
    try {
        const StudyResult result = run_study(cfg);
        write_file(cfg.out_path, format_csv(result.rows));
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        nlohmann::ordered_json config = nlohmann::ordered_json::object();
        for (const auto& [key, value] : cfg.echo) config[key] = value;
        nlohmann::ordered_json effective = {
            {"problem", cfg.problem},
            {"study", to_string(cfg.study)},
            {"n_list", cfg.n_list},
            {"M", cfg.samples},
            {"b_reps", cfg.b_reps},
            {"seed", cfg.seed},
            {"threads", cfg.threads},
            {"kappa", cfg.kappa},
            {"backend", to_string(cfg.backend.kind)},
            {"degree", cfg.backend.basis.degree},
            {"ridge", cfg.backend.basis.ridge},
            {"picard_tol", cfg.picard.tol},
            {"picard_max_iters", cfg.picard.max_iters},
            {"out_path", cfg.out_path},
        };
        nlohmann::ordered_json manifest = {
            {"config", {{"entries", config}, {"effective", effective}}},
            {"version", version_string()},
            {"started_at", started_at},
            {"wall_seconds", wall},
        };
        if (result.confirmation) {
            const auto& c = *result.confirmation;
            manifest["oracle_confirmation"] = {{"steps", c.steps},         {"paths", c.paths},
                                               {"rms_z0", c.rms_z0},       {"rms_y", c.rms_y},
                                               {"tolerance", c.tolerance}, {"passed", c.passed}};
        }
        write_file(manifest_path(cfg.out_path), manifest.dump(2) + "\n");
        log << "wrote " << result.rows.size() << " rows to " << cfg.out_path << '\n';
        return 0;
    } catch (const Error& e) {
        log << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_status(e);
    } catch (const std::exception& e) {
        log << "error: " << e.what() << '\n';
        return 3;
    }
}

}  // namespace bdsde
