#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "picar/report.hpp"

namespace picar {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("cannot format double");
  return std::string(buf, end);
}

double parse_double(const std::string& text) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw std::invalid_argument("not a number: '" + text + "'");
  }
  return v;
}

namespace {

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, sep)) fields.push_back(field);
  if (!line.empty() && line.back() == sep) fields.emplace_back();
  return fields;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path,
                                                const std::string& header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw std::runtime_error(path.string() + ": expected header '" + header + "'");
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(split(line));
  }
  return rows;
}

constexpr const char* kTimingHeader = "iter,capture_ms,preprocess_ms,infer_ms,actuate_ms,total_ms,missed";
constexpr const char* kSummaryHeader = "experiment,metric,stage,value";

}  // namespace

void write_timing_csv(std::span<const TimingSample> samples, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << kTimingHeader << '\n';
  for (const auto& s : samples) {
    out << s.iter << ',' << format_double(s.capture_ms) << ',' << format_double(s.preprocess_ms)
        << ',' << format_double(s.infer_ms) << ',' << format_double(s.actuate_ms) << ','
        << format_double(s.total_ms) << ',' << (s.missed ? 1 : 0) << '\n';
  }
}

std::vector<TimingSample> read_timing_csv(const std::filesystem::path& path) {
  std::vector<TimingSample> samples;
  for (const auto& f : read_rows(path, kTimingHeader)) {
    if (f.size() != 7) throw std::runtime_error(path.string() + ": timing row needs 7 fields");
    TimingSample s;
    s.iter = std::stoull(f[0]);
    s.capture_ms = parse_double(f[1]);
    s.preprocess_ms = parse_double(f[2]);
    s.infer_ms = parse_double(f[3]);
    s.actuate_ms = parse_double(f[4]);
    s.total_ms = parse_double(f[5]);
    s.missed = f[6] == "1";
    samples.push_back(s);
  }
  return samples;
}

void write_summary_csv(std::span<const SummaryRow> rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    out << r.experiment << ',' << r.metric << ',' << r.stage << ',' << format_double(r.value)
        << '\n';
  }
}

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path) {
  std::vector<SummaryRow> rows;
  for (const auto& f : read_rows(path, kSummaryHeader)) {
    if (f.size() != 4) throw std::runtime_error(path.string() + ": summary row needs 4 fields");
    rows.push_back({f[0], f[1], f[2], parse_double(f[3])});
  }
  return rows;
}

std::vector<SummaryRow> summary_rows(const std::string& experiment, const TimingReport& report) {
  std::vector<SummaryRow> rows;
  const std::pair<const char*, const Stats*> stages[] = {
      {"capture", &report.capture}, {"preprocess", &report.preprocess},
      {"infer", &report.infer},     {"actuate", &report.actuate},
      {"total", &report.total}};
  for (const auto& [name, st] : stages) {
    rows.push_back({experiment, "count", name, static_cast<double>(st->count)});
    rows.push_back({experiment, "mean", name, st->mean});
    rows.push_back({experiment, "min", name, st->min});
    rows.push_back({experiment, "max", name, st->max});
    rows.push_back({experiment, "p99", name, st->p99});
    rows.push_back({experiment, "stdev", name, st->stdev});
  }
  rows.push_back({experiment, "deadline_misses", "total", static_cast<double>(report.deadline_misses)});
  return rows;
}

Stats stats_from_rows(std::span<const SummaryRow> rows, const std::string& experiment,
                      const std::string& stage) {
  Stats s;
  bool found = false;
  for (const auto& r : rows) {
    if (r.experiment != experiment || r.stage != stage) continue;
    found = true;
    if (r.metric == "count") s.count = static_cast<std::size_t>(r.value);
    else if (r.metric == "mean") s.mean = r.value;
    else if (r.metric == "min") s.min = r.value;
    else if (r.metric == "max") s.max = r.value;
    else if (r.metric == "p99") s.p99 = r.value;
    else if (r.metric == "stdev") s.stdev = r.value;
  }
  if (!found) throw std::invalid_argument("no rows for " + experiment + "/" + stage);
  return s;
}

void write_loss_csv(std::span<const double> losses, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out << i << ',' << format_double(losses[i]) << '\n';
}

}  // namespace picar
