#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "loraflow/checkpoint.hpp"
#include "loraflow/condition.hpp"
#include "loraflow/iq.hpp"
#include "loraflow/model.hpp"
#include "loraflow/tensor.hpp"

namespace loraflow {

struct SweepGrid {
    std::vector<int> sf_list{7};
    std::vector<double> snr_db;  // sorted ascending
    std::vector<int64_t> nfe{1, 2, 4, 8, 16, 32};
    int64_t trials = 1000;
    uint64_t seed = 0;
    double bw = 125000.0;

    static std::vector<double> default_snrs();  // -40..-10 dB, step 2.5
    SweepGrid() : snr_db(default_snrs()) {}
    void validate() const;
};

struct BaselinePoint {
    int sf = 7;
    double snr_db = 0.0;
    double acc = 0.0;
    double ser = 0.0;
};

/// Monte Carlo dechirp accuracy/SER over uniformly random symbols,
/// deterministic given the grid seed (per-trial derived sub-seeds).
std::vector<BaselinePoint> run_baseline(const SweepGrid& grid);

/// Velocity source for the denoising sweep. `clean` carries the per-row
/// ground truth, consumed only by the oracle backend.
class DenoiseBackend {
public:
    virtual ~DenoiseBackend() = default;
    virtual Tensor velocity(const Tensor& x, double t, const CondVector& cond,
                            const std::vector<IqBuffer>& clean) = 0;
    virtual int64_t evals() const = 0;  // cumulative per-sample evaluations
};

/// Neural field from a checkpoint; asserts the eval-path condition vector is
/// all zeros.
class ModelBackend : public DenoiseBackend {
public:
    explicit ModelBackend(Checkpoint ck) : ck_(std::move(ck)) {}
    Tensor velocity(const Tensor& x, double t, const CondVector& cond,
                    const std::vector<IqBuffer>& clean) override;
    int64_t evals() const override { return evals_; }

private:
    Checkpoint ck_;
    int64_t evals_ = 0;
};

/// Ground-truth field (z1 - x) / (1 - t); Euler integration reaches z1
/// exactly for any step count.
class OracleBackend : public DenoiseBackend {
public:
    Tensor velocity(const Tensor& x, double t, const CondVector& cond,
                    const std::vector<IqBuffer>& clean) override;
    int64_t evals() const override { return evals_; }

private:
    int64_t evals_ = 0;
};

struct SweepRow {
    int sf = 7;
    double snr_db = 0.0;
    int64_t nfe = 1;
    double baseline_acc = 0.0;
    double denoised_acc = 0.0;
    double advantage = 0.0;
    double baseline_ser = 0.0;
    double denoised_ser = 0.0;
    double ser_advantage = 0.0;

    bool operator==(const SweepRow&) const = default;
};

struct AdvantageReport {
    std::vector<SweepRow> rows;  // ordered by (sf, snr, nfe)
    std::map<int, double> auc;   // per sf, advantage curve at the largest NFE
    std::map<std::pair<int, int64_t>, double> auc_by_nfe;

    bool operator==(const AdvantageReport&) const = default;
};

/// Denoise-then-dechirp sweep over the grid. Baseline and denoised runs see
/// the same per-trial symbols and noise, so the advantage columns are paired
/// comparisons.
AdvantageReport run_denoised(DenoiseBackend& backend, const SweepGrid& grid);

/// Trapezoidal area under the advantage curve, in dB units.
double auc_trapezoid(std::span<const double> snr_db, std::span<const double> advantage);

enum class ReportFormat { Csv, Json, Dat };
ReportFormat report_format_from_string(const std::string& s);

void emit_report(const AdvantageReport& report, const std::string& path, ReportFormat format);
AdvantageReport parse_report_csv(const std::string& path);
AdvantageReport parse_report_json(const std::string& path);

}  // namespace loraflow
