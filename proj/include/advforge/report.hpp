#pragma once

#include "advforge/bench.hpp"

#include <string>
#include <vector>

namespace advforge {

/// Header `attack,source\target,<model ids...>`; cells are percentages with
/// two decimals, `n/a` for rows with zero successes.
std::string portability_matrix_csv(const PortabilityMatrix& matrix);

/// Header `model,attack,success_rate,n_success,mean_l2,std_l2,mean_linf,
/// std_linf,mean_pass,std_pass`; std columns are population standard
/// deviations; empty cells when a group has zero successes.
std::string summary_csv(const std::vector<RobustnessSummary>& summaries);

std::string correlation_json(const CorrelationResult& result);

/// Gnuplot-style whitespace-separated plot data.
std::string fig2a_pass_success_dat(const std::vector<RobustnessSummary>& summaries);
std::string fig2b_norms_dat(const std::vector<RobustnessSummary>& summaries);
std::string fig3_matrix_dat(const std::vector<PortabilityMatrix>& matrices);
std::string correlation_scatter_dat(const std::vector<CorrelationResult>& results);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace advforge
