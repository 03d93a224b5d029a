#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bdsde/metrics.hpp"

namespace bdsde {

enum class Study { scheme, rate, regularity, euler, moments };

const char* to_string(Study study) noexcept;

/// One-dimensional problem given by coefficient table in the config:
///   b(x) = drift[0] + drift[1] x,  sigma(x) = diffusion[0] + diffusion[1] x,
///   f = driver[0] + driver[1] x + driver[2] y + driver[3] z,
///   g = backward[0] + backward[1] x + backward[2] y,
///   h = sum_k terminal[k] x^k.
struct InlineProblem {
    double horizon = 1.0;
    double x0 = 0.0;
    double lipschitz = 1.0;
    std::vector<double> drift{0.0, 0.0};
    std::vector<double> diffusion{1.0, 0.0};
    std::vector<double> driver{0.0, 0.0, 0.0, 0.0};
    std::vector<double> backward{0.0, 0.0, 0.0};
    std::vector<double> terminal{0.0, 1.0};
};

ProblemSpec make_inline_problem(const InlineProblem& table);

struct RunConfig {
    std::string problem = "P0";
    std::optional<InlineProblem> inline_problem;  // set when problem == "inline"
    Study study = Study::scheme;
    std::vector<int> n_list{16};
    int samples = 1000;
    int b_reps = 20;
    std::uint64_t seed = 1234;
    int threads = 1;
    BackendConfig backend;
    PicardConfig picard;
    int kappa = 16;  // sub-grid for regularity and fine-grid references
    std::string out_path = "bdsde_out.csv";
    /// Raw `section.key = value` pairs in file order, echoed into the manifest.
    std::vector<std::pair<std::string, std::string>> echo;
};

/// Parses `key = value` lines grouped by `[section]` headers; `#` and `;`
/// start comments. Throws Error{configuration} naming the offending key.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);

/// Applies an override the same way a config line would.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

CatalogEntry resolve_problem(const RunConfig& cfg);

/// Cross-checks the config against the problem it names. Throws
/// Error{configuration}.
void validate_config(const RunConfig& cfg, const CatalogEntry& problem);

/// Agreement between a closed-form oracle and the exact-backend scheme on a
/// 4096-step grid, over several B-paths.
struct OracleConfirmation {
    int steps = 0;
    int paths = 0;
    double rms_z0 = 0.0;  // Z at t = 0
    double rms_y = 0.0;   // Y over all grid times and samples
    double tolerance = 0.0;
    bool passed = false;
};

inline constexpr int kConfirmationSteps = 4096;
inline constexpr double kConfirmationTolerance = 1e-2;

OracleConfirmation confirm_oracle(const CatalogEntry& problem, std::uint64_t seed, const PicardConfig& picard,
                                  int paths = 8, int samples = 64);

/// One CSV row; empty optionals print as empty fields.
struct CsvRow {
    std::string study;
    std::string problem;
    std::optional<int> n;
    std::optional<double> mesh;
    int samples = 0;
    int b_reps = 0;
    std::uint64_t seed = 0;
    std::string backend;
    std::optional<double> err_y_sup;
    std::optional<double> err_z_int;
    std::optional<double> err_total;
    std::optional<double> reg_stat;
    std::optional<double> slope;
    std::optional<double> ci_halfwidth;
};

struct StudyResult {
    std::vector<CsvRow> rows;
    std::optional<OracleConfirmation> confirmation;
};

StudyResult run_study(const RunConfig& cfg);

inline constexpr const char* kCsvHeader =
    "study,problem,n,mesh,M,b_reps,seed,backend,err_y_sup,err_z_int,err_total,reg_stat,slope,ci_halfwidth";

std::string format_csv(const std::vector<CsvRow>& rows);

/// Manifest path belonging to a CSV path: "dir/name.csv" -> "dir/name.manifest.json".
std::string manifest_path(const std::string& csv_path);

std::string version_string();

/// Runs the study and writes the CSV plus manifest. Returns the process exit
/// status: 0 success, 2 configuration error, 3 numeric or convergence error.
int run(const RunConfig& cfg, std::ostream& log);

/// Maps an error to the exit status contract above.
int exit_status(const Error& e) noexcept;

/// Runs `body(i)` for i in [0, count) on up to `threads` workers. Results must
/// be written to per-index slots; the lowest-index exception is rethrown.
void parallel_for(int count, int threads, const std::function<void(int)>& body);

}  // namespace bdsde
