#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace unreg {

/// One stage of a run. Stage 0 holds the initial metrics.
struct TraceRow {
  std::string algorithm;
  double lambda = 0;
  std::int64_t stage = 0;
  double passes = 0;
  double trainLoss = 0;
  std::optional<double> excessLoss;
  double gradNorm = 0;
  std::optional<double> certifiedGap;
  std::optional<double> testError;
  std::optional<double> wallSeconds;
  bool diverged = false;
  bool converged = true;
};

class ConvergenceTrace {
 public:
  /// Rejects rows that break stage numbering or decrease the pass count.
  void append(TraceRow row) {
    const auto expected = static_cast<std::int64_t>(rows_.size());
    if (row.stage != expected) throw std::logic_error("ConvergenceTrace: stages must be consecutive from 0");
    if (!rows_.empty() && row.passes < rows_.back().passes) {
      throw std::logic_error("ConvergenceTrace: passes must be non-decreasing");
    }
    rows_.push_back(std::move(row));
  }

  const std::vector<TraceRow>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }
  const TraceRow& back() const { return rows_.back(); }
  bool diverged() const { return !rows_.empty() && rows_.back().diverged; }

 private:
  std::vector<TraceRow> rows_;
};

inline constexpr const char* kTraceSchema = "# unreg-trace v1";
inline constexpr const char* kTraceHeader =
    "algorithm,lambda,stage,passes,train_loss,excess_loss,grad_norm,certified_gap,test_error,"
    "wall_seconds,diverged,converged";

/// Round-trip exact formatting; empty for absent and "nan"/"inf" spelled out.
inline std::string formatReal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string formatOptional(const std::optional<double>& v) { return v ? formatReal(*v) : std::string(); }

inline void writeTraceHeader(std::ostream& out) { out << kTraceSchema << '\n' << kTraceHeader << '\n'; }

/// The wall-clock column is only written when includeTiming is set, so the
/// default output is reproducible byte for byte.
inline void writeTraceRows(std::ostream& out, const ConvergenceTrace& trace, bool includeTiming = false) {
  for (const auto& r : trace.rows()) {
    out << r.algorithm << ',' << formatReal(r.lambda) << ',' << r.stage << ',' << formatReal(r.passes) << ','
        << formatReal(r.trainLoss) << ',' << formatOptional(r.excessLoss) << ',' << formatReal(r.gradNorm) << ','
        << formatOptional(r.certifiedGap) << ',' << formatOptional(r.testError) << ','
        << (includeTiming ? formatOptional(r.wallSeconds) : std::string()) << ',' << (r.diverged ? 1 : 0) << ','
        << (r.converged ? 1 : 0) << '\n';
  }
}

inline void writeTraceCsv(std::ostream& out, const ConvergenceTrace& trace, bool includeTiming = false) {
  writeTraceHeader(out);
  writeTraceRows(out, trace, includeTiming);
}

}  // namespace unreg
