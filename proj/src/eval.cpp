#include "loraflow/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "loraflow/flow.hpp"
#include "loraflow/kernels.hpp"
#include "loraflow/modem.hpp"
#include "loraflow/rng.hpp"

namespace loraflow {

std::vector<double> SweepGrid::default_snrs() {
    std::vector<double> v;
    for (double s = -40.0; s <= -10.0 + 1e-9; s += 2.5) v.push_back(s);
    return v;
}

void SweepGrid::validate() const {
    if (trials < 1) throw std::invalid_argument("sweep grid: trials must be >= 1");
    if (sf_list.empty()) throw std::invalid_argument("sweep grid: sf_list empty");
    for (int sf : sf_list) LoRaParams{sf, bw, ChirpDirection::Up}.validate();
    if (snr_db.empty()) throw std::invalid_argument("sweep grid: snr list empty");
    for (size_t i = 1; i < snr_db.size(); ++i)
        if (snr_db[i] <= snr_db[i - 1])
            throw std::invalid_argument("sweep grid: SNRs must be sorted ascending");
    if (nfe.empty()) throw std::invalid_argument("sweep grid: nfe list empty");
    for (int64_t n : nfe)
        if (n < 1) throw std::invalid_argument("sweep grid: nfe must be >= 1");
}

namespace {

// One (symbol, received) draw shared by the baseline and denoised pipelines.
struct Trial {
    int64_t symbol;
    IqBuffer received;
};

Trial make_trial(const LoRaParams& params, double snr_db, uint64_t seed) {
    Rng rng(seed);
    Trial t;
    t.symbol = rng.uniform_int(0, params.symbol_len() - 1);
    t.received = add_awgn(modulate_symbol(params, t.symbol), snr_db, rng.next_u64());
    return t;
}

uint64_t trial_seed(const SweepGrid& grid, size_t sf_idx, size_t snr_idx, int64_t trial) {
    return derive_seed(grid.seed, static_cast<uint64_t>(sf_idx),
                       static_cast<uint64_t>(snr_idx), static_cast<uint64_t>(trial));
}

}  // namespace

std::vector<BaselinePoint> run_baseline(const SweepGrid& grid) {
    grid.validate();
    std::vector<BaselinePoint> out;
    for (size_t si = 0; si < grid.sf_list.size(); ++si) {
        const LoRaParams params{grid.sf_list[si], grid.bw, ChirpDirection::Up};
        for (size_t ni = 0; ni < grid.snr_db.size(); ++ni) {
            const double snr = grid.snr_db[ni];
            int64_t correct = 0;
#pragma omp parallel for schedule(static) reduction(+ : correct)
            for (int64_t k = 0; k < grid.trials; ++k) {
                const Trial t = make_trial(params, snr, trial_seed(grid, si, ni, k));
                correct += (dechirp_demod(params, t.received).symbol == t.symbol) ? 1 : 0;
            }
            BaselinePoint p;
            p.sf = params.sf;
            p.snr_db = snr;
            p.acc = static_cast<double>(correct) / static_cast<double>(grid.trials);
            p.ser = 1.0 - p.acc;
            out.push_back(p);
        }
    }
    return out;
}

Tensor ModelBackend::velocity(const Tensor& x, double t, const CondVector& cond,
                              const std::vector<IqBuffer>& clean) {
    (void)clean;
    if (!cond.is_zero())
        throw std::logic_error("evaluation path requires an all-zero condition vector");
    evals_ += x.dim(0);
    const std::vector<double> ts(x.dim(0), t);
    const std::vector<CondVector> conds(x.dim(0), cond);
    return velocity_batch(ck_.config, ck_.store, x, ts, conds);
}

Tensor OracleBackend::velocity(const Tensor& x, double t, const CondVector& cond,
                               const std::vector<IqBuffer>& clean) {
    (void)cond;
    const int64_t B = x.dim(0), T = x.dim(1);
    if (static_cast<int64_t>(clean.size()) != B)
        throw std::invalid_argument("oracle backend: missing ground truth");
    evals_ += B;
    Tensor v(x.shape);
    const double inv = 1.0 / (1.0 - t);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < T; ++i) {
            v.data[(b * T + i) * 2] = (clean[b][i].real() - x.data[(b * T + i) * 2]) * inv;
            v.data[(b * T + i) * 2 + 1] =
                (clean[b][i].imag() - x.data[(b * T + i) * 2 + 1]) * inv;
        }
    return v;
}

namespace {

constexpr int64_t kChunk = 128;

// Batched Euler integration from the common insertion time to t = 1.
void denoise_chunk(DenoiseBackend& backend, const LoRaParams& params, double snr_db,
                   std::vector<Trial>& trials, int64_t nfe, int64_t* correct) {
    const int64_t B = static_cast<int64_t>(trials.size());
    const int64_t T = params.symbol_len();
    const double t0 = snr_to_t(snr_db);
    Tensor x({B, T, 2});
    std::vector<IqBuffer> clean(B);
    for (int64_t b = 0; b < B; ++b) {
        const FlowState st = insert_received(trials[b].received, snr_db);
        for (int64_t i = 0; i < T; ++i) {
            x.data[(b * T + i) * 2] = st.x[i].real();
            x.data[(b * T + i) * 2 + 1] = st.x[i].imag();
        }
        clean[b] = modulate_symbol(params, trials[b].symbol);
    }
    const double dt = (1.0 - t0) / static_cast<double>(nfe);
    double t = t0;
    const CondVector zeros = CondVector::zeros();
    for (int64_t step = 0; step < nfe; ++step) {
        const Tensor v = backend.velocity(x, t, zeros, clean);
        kernels::axpy(x.data.data(), dt, v.data.data(), x.numel());
        t = t0 + dt * static_cast<double>(step + 1);
    }
    for (int64_t b = 0; b < B; ++b) {
        IqBuffer denoised(T);
        for (int64_t i = 0; i < T; ++i)
            denoised[i] = cplx(x.data[(b * T + i) * 2], x.data[(b * T + i) * 2 + 1]);
        *correct += (dechirp_demod(params, denoised).symbol == trials[b].symbol) ? 1 : 0;
    }
}

}  // namespace

AdvantageReport run_denoised(DenoiseBackend& backend, const SweepGrid& grid) {
    grid.validate();
    const std::vector<BaselinePoint> baseline = run_baseline(grid);
    AdvantageReport report;

    for (size_t si = 0; si < grid.sf_list.size(); ++si) {
        const LoRaParams params{grid.sf_list[si], grid.bw, ChirpDirection::Up};
        for (size_t ni = 0; ni < grid.snr_db.size(); ++ni) {
            const double snr = grid.snr_db[ni];
            const BaselinePoint& base = baseline[si * grid.snr_db.size() + ni];
            for (int64_t nfe : grid.nfe) {
                int64_t correct = 0;
                for (int64_t start = 0; start < grid.trials; start += kChunk) {
                    const int64_t n = std::min(kChunk, grid.trials - start);
                    std::vector<Trial> chunk;
                    chunk.reserve(n);
                    for (int64_t k = start; k < start + n; ++k)
                        chunk.push_back(make_trial(params, snr, trial_seed(grid, si, ni, k)));
                    denoise_chunk(backend, params, snr, chunk, nfe, &correct);
                }
                SweepRow row;
                row.sf = params.sf;
                row.snr_db = snr;
                row.nfe = nfe;
                row.baseline_acc = base.acc;
                row.baseline_ser = base.ser;
                row.denoised_acc =
                    static_cast<double>(correct) / static_cast<double>(grid.trials);
                row.denoised_ser = 1.0 - row.denoised_acc;
                row.advantage = row.denoised_acc - row.baseline_acc;
                row.ser_advantage = row.baseline_ser - row.denoised_ser;
                report.rows.push_back(row);
            }
        }
    }

    // AUC per (sf, nfe); the per-sf summary uses the largest NFE curve
    for (size_t si = 0; si < grid.sf_list.size(); ++si) {
        const int sf = grid.sf_list[si];
        for (int64_t nfe : grid.nfe) {
            std::vector<double> snr, adv;
            for (const SweepRow& r : report.rows)
                if (r.sf == sf && r.nfe == nfe) {
                    snr.push_back(r.snr_db);
                    adv.push_back(r.advantage);
                }
            if (snr.size() >= 2) report.auc_by_nfe[{sf, nfe}] = auc_trapezoid(snr, adv);
        }
        const int64_t max_nfe = *std::max_element(grid.nfe.begin(), grid.nfe.end());
        auto it = report.auc_by_nfe.find({sf, max_nfe});
        if (it != report.auc_by_nfe.end()) report.auc[sf] = it->second;
    }
    return report;
}

double auc_trapezoid(std::span<const double> snr_db, std::span<const double> advantage) {
    if (snr_db.size() != advantage.size())
        throw std::invalid_argument("auc: length mismatch");
    if (snr_db.size() < 2) throw std::invalid_argument("auc: need at least 2 points");
    double area = 0.0;
    for (size_t i = 1; i < snr_db.size(); ++i)
        area += 0.5 * (advantage[i] + advantage[i - 1]) * (snr_db[i] - snr_db[i - 1]);
    return area;
}

// ---- report emission ---------------------------------------------------------

namespace {

constexpr const char* kCsvHeader =
    "sf,snr_db,nfe,baseline_acc,denoised_acc,advantage,baseline_ser,denoised_ser,"
    "ser_advantage";

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

nlohmann::json row_json(const SweepRow& r) {
    return {{"sf", r.sf},
            {"snr_db", r.snr_db},
            {"nfe", r.nfe},
            {"baseline_acc", r.baseline_acc},
            {"denoised_acc", r.denoised_acc},
            {"advantage", r.advantage},
            {"baseline_ser", r.baseline_ser},
            {"denoised_ser", r.denoised_ser},
            {"ser_advantage", r.ser_advantage}};
}

}  // namespace

ReportFormat report_format_from_string(const std::string& s) {
    if (s == "csv") return ReportFormat::Csv;
    if (s == "json") return ReportFormat::Json;
    if (s == "dat") return ReportFormat::Dat;
    throw std::invalid_argument("unknown report format: " + s);
}

void emit_report(const AdvantageReport& report, const std::string& path, ReportFormat format) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open report path: " + path);
    switch (format) {
        case ReportFormat::Csv: {
            os << kCsvHeader << "\n";
            for (const SweepRow& r : report.rows) {
                os << r.sf << ',' << fmt_double(r.snr_db) << ',' << r.nfe << ','
                   << fmt_double(r.baseline_acc) << ',' << fmt_double(r.denoised_acc) << ','
                   << fmt_double(r.advantage) << ',' << fmt_double(r.baseline_ser) << ','
                   << fmt_double(r.denoised_ser) << ',' << fmt_double(r.ser_advantage) << "\n";
            }
            break;
        }
        case ReportFormat::Json: {
            nlohmann::json j;
            j["rows"] = nlohmann::json::array();
            for (const SweepRow& r : report.rows) j["rows"].push_back(row_json(r));
            j["auc"] = nlohmann::json::object();
            for (const auto& [sf, a] : report.auc) j["auc"][std::to_string(sf)] = a;
            j["auc_by_nfe"] = nlohmann::json::array();
            for (const auto& [key, a] : report.auc_by_nfe)
                j["auc_by_nfe"].push_back(
                    {{"sf", key.first}, {"nfe", key.second}, {"auc", a}});
            os << j.dump(2) << "\n";
            break;
        }
        case ReportFormat::Dat: {
            // gnuplot heatmap blocks: snr_db nfe advantage, one block per sf
            int current_sf = -1;
            int64_t current_nfe = -1;
            for (const SweepRow& r : report.rows) {
                if (r.sf != current_sf) {
                    if (current_sf != -1) os << "\n\n";
                    os << "# sf " << r.sf << "\n";
                    current_sf = r.sf;
                    current_nfe = -1;
                }
                if (current_nfe != -1 && r.nfe != current_nfe) os << "\n";
                current_nfe = r.nfe;
                os << fmt_double(r.snr_db) << ' ' << r.nfe << ' ' << fmt_double(r.advantage)
                   << "\n";
            }
            break;
        }
    }
    os.close();
    if (!os) throw std::runtime_error("report write failed: " + path);
}

AdvantageReport parse_report_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open report: " + path);
    std::string line;
    if (!std::getline(is, line) || line != kCsvHeader)
        throw std::runtime_error("bad report header in " + path);
    AdvantageReport report;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 9) throw std::runtime_error("bad report row: " + line);
        SweepRow r;
        r.sf = std::stoi(fields[0]);
        r.snr_db = std::stod(fields[1]);
        r.nfe = std::stoll(fields[2]);
        r.baseline_acc = std::stod(fields[3]);
        r.denoised_acc = std::stod(fields[4]);
        r.advantage = std::stod(fields[5]);
        r.baseline_ser = std::stod(fields[6]);
        r.denoised_ser = std::stod(fields[7]);
        r.ser_advantage = std::stod(fields[8]);
        report.rows.push_back(r);
    }
    return report;
}

AdvantageReport parse_report_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open report: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("bad report json: " + std::string(e.what()));
    }
    AdvantageReport report;
    for (const auto& rj : j.at("rows")) {
        SweepRow r;
        r.sf = rj.at("sf").get<int>();
        r.snr_db = rj.at("snr_db").get<double>();
        r.nfe = rj.at("nfe").get<int64_t>();
        r.baseline_acc = rj.at("baseline_acc").get<double>();
        r.denoised_acc = rj.at("denoised_acc").get<double>();
        r.advantage = rj.at("advantage").get<double>();
        r.baseline_ser = rj.at("baseline_ser").get<double>();
        r.denoised_ser = rj.at("denoised_ser").get<double>();
        r.ser_advantage = rj.at("ser_advantage").get<double>();
        report.rows.push_back(r);
    }
    if (j.contains("auc"))
        for (const auto& [sf, a] : j.at("auc").items())
            report.auc[std::stoi(sf)] = a.get<double>();
    if (j.contains("auc_by_nfe"))
        for (const auto& e : j.at("auc_by_nfe"))
            report.auc_by_nfe[{e.at("sf").get<int>(), e.at("nfe").get<int64_t>()}] =
                e.at("auc").get<double>();
    return report;
}

}  // namespace loraflow
