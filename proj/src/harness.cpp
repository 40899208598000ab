#include "netmis/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "netmis/error.hpp"

namespace netmis {
namespace harness {

std::string estimator_name(Estimator e) {
    switch (e) {
        case Estimator::SPE: return "SPE";
        case Estimator::Naive1: return "Naive1";
        case Estimator::Naive2: return "Naive2";
        case Estimator::SingleProxy: return "SingleProxy";
    }
    return "?";
}

std::vector<estim::EffectQuery> ExperimentConfig::effective_queries() const {
    if (!queries.empty()) return queries;
    using estim::EffectKind;
    return {{EffectKind::Treatment, 0, 0, 3},
            {EffectKind::Treatment, 0, 1, 3},
            {EffectKind::Spillover, 1, 0, 3},
            {EffectKind::Spillover, 1, 1, 3}};
}

std::string effect_label(const estim::EffectQuery& q) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "tau_%c(%g,%g,%g)",
                  q.kind == estim::EffectKind::Treatment ? 'd' : 's', q.s, q.z, q.n);
    return buf;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, sep)) out.push_back(tok);
    return out;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    auto e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw BadArgs("config: expected boolean, got '" + v + "'");
}

estim::EffectQuery parse_query(const std::string& spec) {
    auto parts = split(spec, ':');
    if (parts.size() != 2) throw BadArgs("config: effect query must be kind:s,z,n");
    auto nums = split(parts[1], ',');
    if (nums.size() != 3) throw BadArgs("config: effect query must be kind:s,z,n");
    estim::EffectQuery q;
    std::string kind = trim(parts[0]);
    if (kind == "d" || kind == "treatment")
        q.kind = estim::EffectKind::Treatment;
    else if (kind == "s" || kind == "spillover")
        q.kind = estim::EffectKind::Spillover;
    else
        throw BadArgs("config: unknown effect kind '" + kind + "'");
    q.s = std::stod(nums[0]);
    q.z = std::stod(nums[1]);
    q.n = std::stod(nums[2]);
    return q;
}

}  // namespace

void apply_config_line(ExperimentConfig& cfg, const std::string& rawkey,
                       const std::string& rawval) {
    const std::string key = trim(rawkey), val = trim(rawval);
    if (key == "n") cfg.sim.n = std::stoi(val);
    else if (key == "reps") cfg.reps = std::stoi(val);
    else if (key == "rdeg") cfg.sim.r_deg = std::stod(val);
    else if (key == "seed") cfg.sim.seed = std::stoull(val);
    else if (key == "p_treat") cfg.sim.p_treat = std::stod(val);
    else if (key == "p_z") cfg.sim.p_z = std::stod(val);
    else if (key == "beta") {
        auto v = split(val, ',');
        if (v.size() != 3) throw BadArgs("config: beta needs 3 values");
        for (int i = 0; i < 3; ++i) cfg.sim.beta[i] = std::stod(v[i]);
    } else if (key == "theta_true") {
        auto v = split(val, ',');
        if (v.size() != 7) throw BadArgs("config: theta_true needs 7 values");
        for (int i = 0; i < 7; ++i) cfg.sim.theta_true[i] = std::stod(v[i]);
    } else if (key == "pomega") cfg.sim.proxy1.p_omega = std::stod(val);
    else if (key == "pu") cfg.sim.proxy1.p_u_miss = std::stod(val);
    else if (key == "pv") cfg.sim.proxy1.p_v_rate = std::stod(val);
    else if (key == "pomega2") cfg.sim.proxy2.p_omega = std::stod(val);
    else if (key == "pu2") cfg.sim.proxy2.p_u_miss = std::stod(val);
    else if (key == "pv2") cfg.sim.proxy2.p_v_rate = std::stod(val);
    else if (key == "copula_rho") {
        cfg.sim.proxy1.copula_rho = std::stod(val);
        cfg.sim.proxy2.copula_rho = cfg.sim.proxy1.copula_rho;
    } else if (key == "eps_idio_sd") cfg.sim.eps_idio_sd = std::stod(val);
    else if (key == "peer_v_sd") cfg.sim.peer_v_sd = std::stod(val);
    else if (key == "mode") {
        if (val == "nfn") cfg.spe.mode = ident::Mode::NoFalseNegative;
        else if (val == "nfp") cfg.spe.mode = ident::Mode::NoFalsePositive;
        else throw BadArgs("config: mode must be nfn or nfp");
        cfg.mode_set = true;
    } else if (key == "onetype_proxy") cfg.spe.cond_proxy = std::stoi(val);
    else if (key == "bandwidth_exp") cfg.spe.bandwidth_exp = std::stod(val);
    else if (key == "h") cfg.spe.h = std::stod(val);
    else if (key == "eps_trim") cfg.spe.eps_trim = std::stod(val);
    else if (key == "eps_trim_joint") cfg.spe.eps_trim_joint = std::stod(val);
    else if (key == "delta_correction") cfg.spe.delta_correction = parse_bool(val);
    else if (key == "fd_step") cfg.spe.fd_step = std::stod(val);
    else if (key == "kappa") cfg.spe.recover.kappa = std::stod(val);
    else if (key == "k_override") cfg.spe.recover.k_override = std::stoi(val);
    else if (key == "imag_tol") cfg.spe.recover.imag_tol = std::stod(val);
    else if (key == "threads") cfg.threads = std::stoi(val);
    else if (key == "out") cfg.out_path = val;
    else if (key == "estimators") {
        cfg.estimators.clear();
        for (auto& name : split(val, ',')) {
            std::string t = trim(name);
            if (t == "SPE") cfg.estimators.push_back(Estimator::SPE);
            else if (t == "Naive1") cfg.estimators.push_back(Estimator::Naive1);
            else if (t == "Naive2") cfg.estimators.push_back(Estimator::Naive2);
            else if (t == "SingleProxy") cfg.estimators.push_back(Estimator::SingleProxy);
            else throw BadArgs("config: unknown estimator '" + t + "'");
        }
    } else if (key == "effects") {
        cfg.queries.clear();
        for (auto& spec : split(val, ';')) cfg.queries.push_back(parse_query(trim(spec)));
    } else {
        throw BadArgs("config: unknown key '" + key + "'");
    }
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw BadArgs("config: line " + std::to_string(lineno) + " is not key = value");
        apply_config_line(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

int resolve_threads(int requested) {
    int t = requested > 0 ? requested
                          : static_cast<int>(std::thread::hardware_concurrency());
    if (t < 1) t = 1;
    if (const char* env = std::getenv("NETMIS_THREADS")) {
        int cap = std::atoi(env);
        if (cap > 0) t = std::min(t, cap);
    }
    return t;
}

namespace {

struct RepResult {
    // per estimator: per query (estimate, se); nullopt means failed
    std::map<std::string, std::vector<std::pair<double, double>>> rows;
    std::map<std::string, std::string> failures;
    DatasetStats stats;
};

DatasetStats dataset_stats(const simgen::SimData& data) {
    DatasetStats st;
    const int n = data.sample.n();
    st.avg_deg_latent = data.deg_star.cast<double>().mean();
    st.max_deg_latent = data.deg_star.maxCoeff();
    st.avg_deg1 = data.sample.deg1.cast<double>().mean();
    st.avg_deg2 = data.sample.deg2.cast<double>().mean();
    st.avg_s1 = data.sample.s1.cast<double>().mean();
    st.avg_s2 = data.sample.s2.cast<double>().mean();
    st.flips1_10 = static_cast<double>(data.flips1[0]);
    st.flips1_01 = static_cast<double>(data.flips1[1]);
    st.flips2_10 = static_cast<double>(data.flips2[0]);
    st.flips2_01 = static_cast<double>(data.flips2[1]);
    st.latent_links = static_cast<double>(data.latent.total_links());
    (void)n;
    return st;
}

std::uint64_t rep_seed(std::uint64_t root, int rep) {
    std::uint64_t sm = root ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(rep) + 1));
    return splitmix64(sm);
}

}  // namespace

McSummary run_montecarlo(const ExperimentConfig& cfg) {
    const auto queries = cfg.effective_queries();
    const auto model = estim::CasfModel::default_linear();
    const bool wants_spe =
        std::find(cfg.estimators.begin(), cfg.estimators.end(), Estimator::SPE) !=
        cfg.estimators.end();
    if (wants_spe && !cfg.mode_set)
        throw BadArgs("montecarlo: SPE requires an explicit one-type mode (nfn or nfp)");

    // effect truths through the same contrast code path as the estimates
    estim::ThetaFit truth_fit;
    truth_fit.theta_hat.resize(7);
    for (int i = 0; i < 7; ++i) truth_fit.theta_hat[i] = cfg.sim.theta_true[i];
    std::vector<double> truths;
    for (const auto& e : estim::effects(truth_fit, model, queries)) truths.push_back(e.value);

    std::vector<RepResult> results(cfg.reps);
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            int rep = next.fetch_add(1);
            if (rep >= cfg.reps) return;
            simgen::SimConfig sc = cfg.sim;
            sc.seed = rep_seed(cfg.sim.seed, rep);
            simgen::SimData data = simgen::simulate(sc);
            RepResult& rr = results[rep];
            rr.stats = dataset_stats(data);
            estim::SpeOptions opts = cfg.spe;
            if (opts.p_treat < 0.0) opts.p_treat = cfg.sim.p_treat;
            for (Estimator est : cfg.estimators) {
                const std::string name = estimator_name(est);
                try {
                    std::vector<std::pair<double, double>> row;
                    if (est == Estimator::SPE) {
                        auto spe = estim::fit_spe(data.sample, data.nbrs, model, opts);
                        for (const auto& e : estim::effects(spe.fit, model, queries))
                            row.emplace_back(e.value, e.std_error);
                    } else if (est == Estimator::Naive1 || est == Estimator::Naive2) {
                        auto fit = estim::naive_ols(data.sample,
                                                    est == Estimator::Naive1 ? 1 : 2,
                                                    model, data.nbrs);
                        for (const auto& e : estim::effects(fit, model, queries))
                            row.emplace_back(e.value, e.std_error);
                    } else {
                        // nonparametric cell-mean contrasts from proxy 1
                        Eigen::VectorXd zv(1);
                        double h = opts.h > 0.0
                                       ? opts.h
                                       : std::pow(cfg.sim.n, -opts.bandwidth_exp);
                        for (const auto& q : queries) {
                            zv[0] = q.z;
                            double v;
                            if (q.kind == estim::EffectKind::Treatment)
                                v = estim::single_proxy_casf(data.sample, 1, 1, (int)q.s,
                                                             zv, (int)q.n, h) -
                                    estim::single_proxy_casf(data.sample, 1, 0, (int)q.s,
                                                             zv, (int)q.n, h);
                            else
                                v = estim::single_proxy_casf(data.sample, 1, 0, (int)q.s,
                                                             zv, (int)q.n, h) -
                                    estim::single_proxy_casf(data.sample, 1, 0, 0, zv,
                                                             (int)q.n, h);
                            row.emplace_back(v, std::nan(""));
                        }
                    }
                    rr.rows[name] = std::move(row);
                } catch (const Error& e) {
                    rr.failures[name] = e.what();
                }
            }
        }
    };
    int nthreads = resolve_threads(cfg.threads);
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    // aggregate in replication order
    McSummary sum;
    sum.queries = queries;
    sum.truths = truths;
    sum.reps = cfg.reps;
    for (Estimator est : cfg.estimators) {
        const std::string name = estimator_name(est);
        for (size_t qi = 0; qi < queries.size(); ++qi)
            sum.table[{name, effect_label(queries[qi])}] = {};
        sum.used[name] = 0;
    }
    for (int rep = 0; rep < cfg.reps; ++rep) {
        const RepResult& rr = results[rep];
        for (Estimator est : cfg.estimators) {
            const std::string name = estimator_name(est);
            auto it = rr.rows.find(name);
            if (it == rr.rows.end()) {
                auto fit = rr.failures.find(name);
                sum.excluded.emplace_back(
                    rep, name + ": " + (fit == rr.failures.end() ? "?" : fit->second));
                continue;
            }
            sum.used[name]++;
            for (size_t qi = 0; qi < queries.size(); ++qi) {
                auto& cell = sum.table[{name, effect_label(queries[qi])}];
                cell.raw.push_back(it->second[qi].first);
                cell.raw_se.push_back(it->second[qi].second);
            }
        }
        // dataset statistics averaged over all replications
        sum.stats.avg_deg_latent += rr.stats.avg_deg_latent / cfg.reps;
        sum.stats.max_deg_latent += rr.stats.max_deg_latent / cfg.reps;
        sum.stats.avg_deg1 += rr.stats.avg_deg1 / cfg.reps;
        sum.stats.avg_deg2 += rr.stats.avg_deg2 / cfg.reps;
        sum.stats.avg_s1 += rr.stats.avg_s1 / cfg.reps;
        sum.stats.avg_s2 += rr.stats.avg_s2 / cfg.reps;
        sum.stats.flips1_10 += rr.stats.flips1_10 / cfg.reps;
        sum.stats.flips1_01 += rr.stats.flips1_01 / cfg.reps;
        sum.stats.flips2_10 += rr.stats.flips2_10 / cfg.reps;
        sum.stats.flips2_01 += rr.stats.flips2_01 / cfg.reps;
        sum.stats.latent_links += rr.stats.latent_links / cfg.reps;
    }
    for (size_t qi = 0; qi < queries.size(); ++qi) {
        for (Estimator est : cfg.estimators) {
            auto& cell = sum.table[{estimator_name(est), effect_label(queries[qi])}];
            const auto& raw = cell.raw;
            if (raw.empty()) continue;
            const int m = static_cast<int>(raw.size());
            double truth = truths[qi];
            double mean = 0.0;
            for (double v : raw) mean += v;
            mean /= m;
            cell.bias = mean - truth;
            double var = 0.0, mse = 0.0;
            int hits = 0, with_se = 0;
            for (size_t r = 0; r < raw.size(); ++r) {
                var += (raw[r] - mean) * (raw[r] - mean);
                mse += (raw[r] - truth) * (raw[r] - truth);
                if (!std::isnan(cell.raw_se[r])) {
                    ++with_se;
                    if (std::abs(raw[r] - truth) <= 1.96 * cell.raw_se[r]) ++hits;
                }
            }
            cell.sd = m > 1 ? std::sqrt(var / (m - 1)) : 0.0;
            cell.mse = mse / m;
            cell.coverage = with_se > 0 ? static_cast<double>(hits) / with_se
                                        : std::nan("");
        }
    }
    return sum;
}

namespace {

void write_double(std::ostream& os, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
}

}  // namespace

void export_dataset(const simgen::SimData& data, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("export_dataset: cannot write " + path);
    os << "y,d,z,s1,deg1,s2,deg2,pos_x,pos_y\n";
    const Sample& s = data.sample;
    for (int i = 0; i < s.n(); ++i) {
        write_double(os, s.y[i]);
        os << ',' << s.d[i] << ',' << s.z(i, 0) << ',' << s.s1[i] << ',' << s.deg1[i]
           << ',' << s.s2[i] << ',' << s.deg2[i] << ',';
        write_double(os, s.positions(i, 0));
        os << ',';
        write_double(os, s.positions(i, 1));
        os << '\n';
    }
    if (!os) throw IoError("export_dataset: write failed for " + path);
}

void export_results(const McSummary& sum, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("export_results: cannot write " + path);
    os << "estimator,effect,truth,bias,sd,mse,cr,used\n";
    for (const auto& [key, cell] : sum.table) {
        size_t qi = 0;
        for (; qi < sum.queries.size(); ++qi)
            if (effect_label(sum.queries[qi]) == key.second) break;
        os << key.first << ',' << key.second << ',';
        write_double(os, sum.truths[qi]);
        os << ',';
        write_double(os, cell.bias);
        os << ',';
        write_double(os, cell.sd);
        os << ',';
        write_double(os, cell.mse);
        os << ',';
        write_double(os, cell.coverage);
        os << ',' << cell.raw.size() << '\n';
    }
    if (!os) throw IoError("export_results: write failed for " + path);
}

void export_effects(const std::vector<std::pair<std::string, estim::EffectEstimate>>& rows,
                    const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("export_effects: cannot write " + path);
    os << "estimator,effect,estimate,se\n";
    for (const auto& [name, e] : rows) {
        os << name << ',' << effect_label(e.query) << ',';
        write_double(os, e.value);
        os << ',';
        write_double(os, e.std_error);
        os << '\n';
    }
    if (!os) throw IoError("export_effects: write failed for " + path);
}

IngestResult ingest_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw IoError("ingest_csv: cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw SchemaError("ingest_csv: empty file");
    auto cols = split(trim(header), ',');
    std::map<std::string, int> col;
    std::vector<int> z_cols;
    for (size_t i = 0; i < cols.size(); ++i) {
        std::string name = trim(cols[i]);
        col[name] = static_cast<int>(i);
        if (name == "z" || name.rfind("z_", 0) == 0) z_cols.push_back(static_cast<int>(i));
    }
    for (const char* req : {"y", "d", "s1", "deg1", "s2", "deg2"})
        if (!col.count(req))
            throw SchemaError("ingest_csv: missing required column '" + std::string(req) + "'");
    if (z_cols.empty()) throw SchemaError("ingest_csv: no covariate column (z or z_*)");

    std::vector<std::vector<std::string>> rows;
    std::string line;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() != cols.size())
            throw SchemaError("ingest_csv: row " + std::to_string(lineno) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(cols.size()));
        rows.push_back(std::move(fields));
    }
    const int n = static_cast<int>(rows.size());
    IngestResult out;
    Sample& s = out.sample;
    s.y.resize(n);
    s.d.resize(n);
    s.z.resize(n, static_cast<int>(z_cols.size()));
    s.s1.resize(n);
    s.deg1.resize(n);
    s.s2.resize(n);
    s.deg2.resize(n);

    auto num = [&](int r, int c, const char* what) {
        try {
            return std::stod(rows[r][c]);
        } catch (...) {
            throw SchemaError("ingest_csv: row " + std::to_string(r + 2) + ": bad " +
                              std::string(what));
        }
    };
    for (int i = 0; i < n; ++i) {
        s.y[i] = num(i, col["y"], "y");
        double d = num(i, col["d"], "d");
        if (d != 0.0 && d != 1.0)
            throw IntegrityError("ingest_csv: row " + std::to_string(i + 2) +
                                 ": non-binary d");
        s.d[i] = static_cast<int>(d);
        for (size_t k = 0; k < z_cols.size(); ++k) s.z(i, k) = num(i, z_cols[k], "z");
        auto ival = [&](const char* name) {
            double v = num(i, col[name], name);
            if (v < 0 || v != std::floor(v))
                throw IntegrityError("ingest_csv: row " + std::to_string(i + 2) + ": " +
                                     std::string(name) + " must be a nonnegative integer");
            return static_cast<int>(v);
        };
        s.s1[i] = ival("s1");
        s.deg1[i] = ival("deg1");
        s.s2[i] = ival("s2");
        s.deg2[i] = ival("deg2");
        if (s.s1[i] > s.deg1[i] || s.s2[i] > s.deg2[i])
            throw IntegrityError("ingest_csv: row " + std::to_string(i + 2) +
                                 ": treated-neighbor count exceeds degree");
    }
    // z columns: declared continuous via schema, otherwise discrete when integral
    s.z_discrete.assign(z_cols.size(), true);
    for (size_t k = 0; k < z_cols.size(); ++k) {
        std::string name = trim(cols[z_cols[k]]);
        if (std::find(schema.z_continuous.begin(), schema.z_continuous.end(), name) !=
            schema.z_continuous.end()) {
            s.z_discrete[k] = false;
            continue;
        }
        for (int i = 0; i < n; ++i)
            if (s.z(i, k) != std::floor(s.z(i, k))) {
                s.z_discrete[k] = false;
                break;
            }
    }
    if (col.count("pos_x") && col.count("pos_y")) {
        s.positions.resize(n, 2);
        for (int i = 0; i < n; ++i) {
            s.positions(i, 0) = num(i, col["pos_x"], "pos_x");
            s.positions(i, 1) = num(i, col["pos_y"], "pos_y");
        }
    }
    if (col.count("cluster_id")) {
        s.cluster.resize(n);
        for (int i = 0; i < n; ++i)
            s.cluster[i] = static_cast<int>(num(i, col["cluster_id"], "cluster_id"));
        out.nbrs = DepNeighborhoods::from_clusters(s.cluster);
    } else if (s.has_positions() && schema.rdeg_for_neighborhoods > 0) {
        double r = std::sqrt(schema.rdeg_for_neighborhoods / n);
        out.nbrs = simgen::build_dep_neighborhoods(s.positions, r);
    }
    s.validate();
    return out;
}

}  // namespace harness
}  // namespace netmis
