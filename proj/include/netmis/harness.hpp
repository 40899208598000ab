#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "netmis/estim.hpp"
#include "netmis/simgen.hpp"

namespace netmis {
namespace harness {

enum class Estimator { SPE, Naive1, Naive2, SingleProxy };

std::string estimator_name(Estimator e);

struct ExperimentConfig {
    simgen::SimConfig sim;
    int reps = 200;
    estim::SpeOptions spe;
    bool mode_set = false;  // SPE requires an explicit one-type mode
    std::vector<Estimator> estimators{Estimator::SPE, Estimator::Naive1,
                                      Estimator::Naive2};
    std::vector<estim::EffectQuery> queries;  // empty -> the four defaults
    std::string out_path;
    int threads = 0;  // 0: hardware default, capped by NETMIS_THREADS

    std::vector<estim::EffectQuery> effective_queries() const;
};

/// Flat key = value config document; command-line flags override file values.
ExperimentConfig parse_config_file(const std::string& path);
void apply_config_line(ExperimentConfig& cfg, const std::string& key,
                       const std::string& value);

struct EffectCellStats {
    double bias = 0.0, sd = 0.0, mse = 0.0, coverage = 0.0;
    std::vector<double> raw;       // per-replication estimates
    std::vector<double> raw_se;
};

struct DatasetStats {
    double avg_deg_latent = 0.0, max_deg_latent = 0.0;
    double avg_deg1 = 0.0, avg_deg2 = 0.0;
    double avg_s1 = 0.0, avg_s2 = 0.0;
    double flips1_10 = 0.0, flips1_01 = 0.0;  // 1->0 and 0->1 ordered pairs
    double flips2_10 = 0.0, flips2_01 = 0.0;
    double latent_links = 0.0;                // ordered-pair count

    double misclass_ratio1() const {
        return latent_links > 0 ? (flips1_10 + flips1_01) / latent_links : 0.0;
    }
    double misclass_ratio2() const {
        return latent_links > 0 ? (flips2_10 + flips2_01) / latent_links : 0.0;
    }
};

struct McSummary {
    std::map<std::pair<std::string, std::string>, EffectCellStats> table;
    std::vector<estim::EffectQuery> queries;
    std::vector<double> truths;
    DatasetStats stats;
    int reps = 0;
    std::map<std::string, int> used;                    // per estimator
    std::vector<std::pair<int, std::string>> excluded;  // (rep, reason)
};

/// Simulate -> estimate -> aggregate, deterministically in replication
/// order; replications run on per-index substreams so results do not depend
/// on the worker count.
McSummary run_montecarlo(const ExperimentConfig& cfg);

/// Effect label used in result tables, e.g. "tau_s(1,0,3)".
std::string effect_label(const estim::EffectQuery& q);

struct CsvSchema {
    std::vector<std::string> z_continuous;  // header names forced continuous
    double rdeg_for_neighborhoods = -1.0;   // >0: rebuild L1-ball neighborhoods
};

struct IngestResult {
    Sample sample;
    std::optional<DepNeighborhoods> nbrs;
};

/// Reads a dataset CSV (header: y,d,z*,s1,deg1,s2,deg2[,cluster_id]
/// [,pos_x,pos_y]). Integer-valued z columns default to discrete.
IngestResult ingest_csv(const std::string& path, const CsvSchema& schema = {});

void export_dataset(const simgen::SimData& data, const std::string& path);
void export_results(const McSummary& summary, const std::string& path);
void export_effects(const std::vector<std::pair<std::string, estim::EffectEstimate>>& rows,
                    const std::string& path);

int resolve_threads(int requested);

}  // namespace harness
}  // namespace netmis
