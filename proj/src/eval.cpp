#include <algorithm>
#include <iomanip>
#include <sstream>

#include "deepicp/bench.hpp"

namespace deepicp::bench {

EvalReport evaluate(const std::vector<EvalPair>& pairs, const std::string& method_name,
                    const RegistrationMethod& method) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: no pairs");
  EvalReport report;
  report.method = method_name;
  for (const EvalPair& pair : pairs) {
    const RigidTransform estimate = method(pair.source, pair.target, pair.prior);
    report.pair_ids.push_back(pair.id);
    report.errors.push_back(registration_error(estimate, pair.ground_truth));
  }
  double sum_a = 0.0, sum_t = 0.0;
  for (const RegistrationError& e : report.errors) {
    sum_a += e.angular_deg;
    sum_t += e.translational_m;
    report.max_angular_deg = std::max(report.max_angular_deg, e.angular_deg);
    report.max_translational_m = std::max(report.max_translational_m, e.translational_m);
  }
  report.mean_angular_deg = sum_a / static_cast<double>(report.errors.size());
  report.mean_translational_m = sum_t / static_cast<double>(report.errors.size());
  return report;
}

std::string render_table(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << std::left << std::setw(20) << "Method"
     << std::right << std::setw(14) << "Ang Mean(deg)" << std::setw(14) << "Ang Max(deg)"
     << std::setw(14) << "Trans Mean(m)" << std::setw(14) << "Trans Max(m)" << "\n";
  os << std::string(76, '-') << "\n";
  os << std::fixed << std::setprecision(4);
  for (const EvalReport& r : reports) {
    os << std::left << std::setw(20) << r.method << std::right << std::setw(14)
       << r.mean_angular_deg << std::setw(14) << r.max_angular_deg << std::setw(14)
       << r.mean_translational_m << std::setw(14) << r.max_translational_m << "\n";
  }
  return os.str();
}

std::string render_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "method,pair_id,angular_deg,translational_m\n";
  os << std::setprecision(12);
  for (const EvalReport& r : reports) {
    for (std::size_t i = 0; i < r.errors.size(); ++i) {
      os << r.method << "," << r.pair_ids[i] << "," << r.errors[i].angular_deg << ","
         << r.errors[i].translational_m << "\n";
    }
  }
  return os.str();
}

}  // namespace deepicp::bench
