#include "evograd/csv.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace evograd {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<MetricRow> to_rows(const MetricsRecord& r, bool with_time) {
  std::vector<MetricRow> out;
  auto put = [&](const std::string& name, double v) { out.push_back({r.run_id, r.seed, r.step, name, v}); };
  if (r.loss_train) put("loss_train", *r.loss_train);
  if (r.loss_val) put("loss_val", *r.loss_val);
  if (r.accuracy) put("accuracy", *r.accuracy);
  if (r.lambda) put("lambda", *r.lambda);
  if (r.hypergrad_norm) put("hypergrad_norm", *r.hypergrad_norm);
  if (r.has_cost) {
    put("tape_nodes", double(r.tape_nodes));
    put("stored_bytes", double(r.stored_bytes));
    put("forward_count", double(r.forward_count));
    put("backward_count", double(r.backward_count));
  }
  if (with_time && r.wall_ms) put("wall_ms", *r.wall_ms);
  for (const auto& [name, v] : r.extra) put(name, v);
  return out;
}

void CsvWriter::header_locked() {
  if (!header_done_) {
    os_ << kCsvHeader << '\n';
    header_done_ = true;
  }
}

void CsvWriter::write(std::span<const MetricRow> rows) {
  std::lock_guard lock(mu_);
  header_locked();
  for (const auto& r : rows)
    os_ << r.run_id << ',' << r.seed << ',' << r.step << ',' << r.metric << ',' << format_double(r.value) << '\n';
}

void CsvWriter::write(std::span<const MetricsRecord> records, bool with_time) {
  std::vector<MetricRow> rows;
  for (const auto& r : records) {
    auto more = to_rows(r, with_time);
    rows.insert(rows.end(), more.begin(), more.end());
  }
  write(rows);
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

template <class T>
bool parse_int(const std::string& s, T& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  if constexpr (std::is_signed_v<T>) {
    const long long v = std::strtoll(s.c_str(), &end, 10);
    out = static_cast<T>(v);
  } else {
    if (s[0] == '-') return false;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    out = static_cast<T>(v);
  }
  return errno == 0 && end && *end == '\0';
}

}  // namespace

std::vector<MetricRow> parse_metrics_csv(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) throw CsvError("csv: empty input, expected header '" + std::string(kCsvHeader) + "'");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw CsvError("csv: line 1: bad header '" + line + "'");
  std::vector<MetricRow> rows;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_fields(line);
    const std::string where = "csv: line " + std::to_string(lineno) + ": ";
    if (f.size() != 5) throw CsvError(where + "expected 5 fields, got " + std::to_string(f.size()));
    MetricRow r;
    r.run_id = f[0];
    if (r.run_id.empty()) throw CsvError(where + "empty run_id");
    if (!parse_int(f[1], r.seed)) throw CsvError(where + "bad seed '" + f[1] + "'");
    if (!parse_int(f[2], r.step)) throw CsvError(where + "bad step '" + f[2] + "'");
    r.metric = f[3];
    if (r.metric.empty()) throw CsvError(where + "empty metric_name");
    char* end = nullptr;
    r.value = std::strtod(f[4].c_str(), &end);
    if (f[4].empty() || !end || *end != '\0') throw CsvError(where + "bad value '" + f[4] + "'");
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw CsvError("csv: no data rows");
  return rows;
}

nlohmann::ordered_json summarize(std::span<const MetricRow> rows) {
  if (rows.empty()) throw CsvError("summarize: no rows");
  // run -> metric -> seed -> (step, value) at the largest step
  std::map<std::string, std::map<std::string, std::map<std::uint64_t, std::pair<std::int64_t, double>>>> last;
  std::map<std::string, std::map<std::uint64_t, std::int64_t>> final_step;
  for (const auto& r : rows) {
    auto& slot = last[r.run_id][r.metric];
    auto it = slot.find(r.seed);
    if (it == slot.end() || r.step >= it->second.first) slot[r.seed] = {r.step, r.value};
    auto& fs = final_step[r.run_id][r.seed];
    fs = std::max(fs, r.step);
  }
  nlohmann::ordered_json out;
  out["std_convention"] = "population";
  auto& runs = out["runs"];
  runs = nlohmann::ordered_json::object();
  for (const auto& [run, metrics] : last) {
    nlohmann::ordered_json jr;
    std::vector<std::uint64_t> seeds;
    std::int64_t step = 0;
    for (const auto& [seed, s] : final_step[run]) {
      seeds.push_back(seed);
      step = std::max(step, s);
    }
    jr["seeds"] = seeds;
    jr["final_step"] = step;
    auto& jm = jr["metrics"];
    jm = nlohmann::ordered_json::object();
    for (const auto& [metric, per_seed] : metrics) {
      double m = 0.0;
      for (const auto& [seed, sv] : per_seed) m += sv.second;
      m /= double(per_seed.size());
      double ss = 0.0;
      for (const auto& [seed, sv] : per_seed) ss += (sv.second - m) * (sv.second - m);
      jm[metric] = {{"mean", m}, {"std", std::sqrt(ss / double(per_seed.size()))}, {"n", per_seed.size()}};
    }
    runs[run] = std::move(jr);
  }
  return out;
}

nlohmann::ordered_json summarize_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError("summarize: cannot open " + path);
  const auto rows = parse_metrics_csv(in);
  return summarize(rows);
}

}  // namespace evograd
