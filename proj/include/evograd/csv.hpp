#pragma once

#include <iosfwd>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "evograd/metrics.hpp"
#include "json.hpp"

namespace evograd {

inline constexpr const char* kCsvHeader = "run_id,seed,step,metric_name,value";

/// 17 significant digits, shortest "%g" form.
std::string format_double(double v);

struct MetricRow {
  std::string run_id;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::string metric;
  double value = 0.0;
};

/// Expands a record into long-format rows. Wall-clock is included only when
/// `with_time` is set so that untimed outputs stay byte-stable.
std::vector<MetricRow> to_rows(const MetricsRecord& r, bool with_time);

/// Writes the header once, then rows. Safe to share between threads.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}
  void write(std::span<const MetricRow> rows);
  void write(std::span<const MetricsRecord> records, bool with_time);

 private:
  void header_locked();
  std::ostream& os_;
  std::mutex mu_;
  bool header_done_ = false;
};

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses a harness CSV. Errors name the 1-based line.
std::vector<MetricRow> parse_metrics_csv(std::istream& is);

/// For each run id: per metric, mean and population std across seeds of the
/// value at each seed's last step carrying that metric.
nlohmann::ordered_json summarize(std::span<const MetricRow> rows);
nlohmann::ordered_json summarize_file(const std::string& path);

}  // namespace evograd
