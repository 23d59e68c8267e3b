#include "advforge/report.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace advforge {

namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

}  // namespace

std::string portability_matrix_csv(const PortabilityMatrix& matrix) {
  std::ostringstream os;
  os << "attack,source\\target";
  for (const auto& id : matrix.model_ids) os << ',' << id;
  os << '\n';
  for (size_t si = 0; si < matrix.model_ids.size(); ++si) {
    os << attack_name(matrix.attack) << ',' << matrix.model_ids[si];
    for (size_t ti = 0; ti < matrix.model_ids.size(); ++ti) {
      const double rate = matrix.rates(static_cast<Eigen::Index>(si), static_cast<Eigen::Index>(ti));
      os << ',' << (std::isnan(rate) ? std::string("n/a") : fmt("%.2f", rate * 100.0));
    }
    os << '\n';
  }
  return os.str();
}

std::string summary_csv(const std::vector<RobustnessSummary>& summaries) {
  std::ostringstream os;
  os << "model,attack,success_rate,n_success,mean_l2,std_l2,mean_linf,std_linf,mean_pass,std_pass\n";
  for (const auto& s : summaries) {
    os << s.model_id << ',' << attack_name(s.attack) << ',' << fmt("%.6f", s.success_rate) << ','
       << s.n_success;
    const auto cell = [&](const std::optional<double>& v) {
      os << ',' << (v ? fmt("%.6f", *v) : std::string());
    };
    cell(s.mean_l2);
    cell(s.std_l2);
    cell(s.mean_linf);
    cell(s.std_linf);
    cell(s.mean_pass);
    cell(s.std_pass);
    os << '\n';
  }
  return os.str();
}

std::string correlation_json(const CorrelationResult& result) {
  nlohmann::json j;
  j["attack"] = attack_name(result.attack);
  if (result.rho)
    j["rho"] = *result.rho;
  else
    j["rho"] = nullptr;
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : result.pairs) {
    nlohmann::json pj;
    pj["model"] = p.model_id;
    pj["accuracy"] = p.accuracy;
    pj["mean_l2"] = p.mean_l2;
    pairs.push_back(std::move(pj));
  }
  j["pairs"] = std::move(pairs);
  return j.dump(2) + "\n";
}

std::string fig2a_pass_success_dat(const std::vector<RobustnessSummary>& summaries) {
  std::ostringstream os;
  os << "# model attack success_rate mean_pass std_pass\n";
  for (const auto& s : summaries)
    os << s.model_id << ' ' << attack_name(s.attack) << ' ' << fmt("%.6f", s.success_rate) << ' '
       << (s.mean_pass ? fmt("%.6f", *s.mean_pass) : "nan") << ' '
       << (s.std_pass ? fmt("%.6f", *s.std_pass) : "nan") << '\n';
  return os.str();
}

std::string fig2b_norms_dat(const std::vector<RobustnessSummary>& summaries) {
  std::ostringstream os;
  os << "# model attack mean_l2 std_l2 mean_linf std_linf\n";
  for (const auto& s : summaries)
    os << s.model_id << ' ' << attack_name(s.attack) << ' '
       << (s.mean_l2 ? fmt("%.6f", *s.mean_l2) : "nan") << ' '
       << (s.std_l2 ? fmt("%.6f", *s.std_l2) : "nan") << ' '
       << (s.mean_linf ? fmt("%.6f", *s.mean_linf) : "nan") << ' '
       << (s.std_linf ? fmt("%.6f", *s.std_linf) : "nan") << '\n';
  return os.str();
}

std::string fig3_matrix_dat(const std::vector<PortabilityMatrix>& matrices) {
  std::ostringstream os;
  os << "# attack source target rate_percent\n";
  for (const auto& m : matrices)
    for (size_t si = 0; si < m.model_ids.size(); ++si)
      for (size_t ti = 0; ti < m.model_ids.size(); ++ti) {
        const double rate = m.rates(static_cast<Eigen::Index>(si), static_cast<Eigen::Index>(ti));
        os << attack_name(m.attack) << ' ' << m.model_ids[si] << ' ' << m.model_ids[ti] << ' '
           << (std::isnan(rate) ? "nan" : fmt("%.2f", rate * 100.0)) << '\n';
      }
  return os.str();
}

std::string correlation_scatter_dat(const std::vector<CorrelationResult>& results) {
  std::ostringstream os;
  os << "# attack model accuracy mean_l2\n";
  for (const auto& r : results)
    for (const auto& p : r.pairs)
      os << attack_name(r.attack) << ' ' << p.model_id << ' ' << fmt("%.6f", p.accuracy) << ' '
         << fmt("%.6f", p.mean_l2) << '\n';
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace advforge
