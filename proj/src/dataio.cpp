#include "conformer/dataio.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "conformer/rng.hpp"

namespace conformer::data {

namespace {

int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  int64_t era = (y >= 0 ? y : y - 399) / 400;
  unsigned yoe = static_cast<unsigned>(y - era * 400);
  unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

void civil_from_days(int64_t z, int& y, int& m, int& d) {
  z += 719468;
  int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  unsigned doe = static_cast<unsigned>(z - era * 146097);
  unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  int64_t yy = static_cast<int64_t>(yoe) + era * 400;
  unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
  y = static_cast<int>(yy + (m <= 2));
}

int64_t floordiv(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

CalendarCodes calendar_codes(int64_t t) {
  int64_t days = floordiv(t, 86400);
  int64_t sod = t - days * 86400;
  int y, m, d;
  civil_from_days(days, y, m, d);
  CalendarCodes c;
  c.minute = static_cast<int>((sod / 60) % 60);
  c.hour = static_cast<int>(sod / 3600);
  c.weekday = static_cast<int>(((days % 7) + 7 + 3) % 7);  // 1970-01-01 is a Thursday
  c.day = d;
  c.month = m;
  return c;
}

std::vector<CalendarCodes> calendar_features(const std::vector<int64_t>& ts) {
  std::vector<CalendarCodes> out;
  out.reserve(ts.size());
  for (int64_t t : ts) out.push_back(calendar_codes(t));
  return out;
}

int64_t timestamp_from_civil(int year, int month, int day, int hour, int minute,
                             int second) {
  return days_from_civil(year, month, day) * 86400 + hour * 3600 + minute * 60 +
         second;
}

std::string format_timestamp(int64_t t) {
  int64_t days = floordiv(t, 86400);
  int64_t sod = t - days * 86400;
  int y, m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d %02d:%02d:%02d", y, m, d,
                static_cast<int>(sod / 3600), static_cast<int>((sod / 60) % 60),
                static_cast<int>(sod % 60));
  return buf;
}

num::Tensor calendar_marks(const SeriesFrame& frame, int r0, int r1) {
  if (r0 < 0 || r1 < r0 || r1 > frame.length())
    throw DataError("calendar_marks: bad row range");
  num::Tensor out = num::Tensor::zeros({r1 - r0, kNumScales});
  double* p = out.mutable_data();
  for (int i = r0; i < r1; ++i) {
    CalendarCodes c = calendar_codes(frame.timestamps[static_cast<size_t>(i)]);
    double* row = p + static_cast<long>(i - r0) * kNumScales;
    row[0] = c.minute;
    row[1] = c.hour;
    row[2] = c.weekday;
    row[3] = c.day - 1;
    row[4] = c.month - 1;
  }
  return out;
}

namespace {

// strict "YYYY-MM-DD HH:MM[:SS]"
bool parse_timestamp(const std::string& s, int64_t& out) {
  int y, mo, d, h, mi, se = 0;
  char sep;
  std::istringstream is(s);
  is >> y >> sep >> mo;
  if (!is || sep != '-') return false;
  is >> sep >> d;
  if (!is || sep != '-') return false;
  is >> h >> sep >> mi;
  if (!is || sep != ':') return false;
  if (is.peek() == ':') {
    is.get();
    is >> se;
    if (!is) return false;
  }
  is >> std::ws;
  if (!is.eof()) return false;
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 ||
      mi > 59 || se < 0 || se > 60)
    return false;
  out = timestamp_from_civil(y, mo, d, h, mi, se);
  return true;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

SeriesFrame load_csv(const std::string& path, const std::string& target_name,
                     int64_t interval_seconds) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("load_csv: empty file " + path);
  auto header = split_csv_line(line);
  if (header.empty() || header[0] != "date")
    throw DataError("load_csv: first column must be named 'date'");
  int d_x = static_cast<int>(header.size()) - 1;
  if (d_x < 1) throw DataError("load_csv: no value columns");

  SeriesFrame frame;
  frame.variable_names.assign(header.begin() + 1, header.end());
  frame.interval_seconds = interval_seconds;
  frame.target_index = -1;
  for (int j = 0; j < d_x; ++j)
    if (frame.variable_names[static_cast<size_t>(j)] == target_name)
      frame.target_index = j;
  if (frame.target_index < 0)
    throw DataError("load_csv: missing target column '" + target_name + "'");

  std::vector<double> vals;
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != d_x + 1)
      throw DataError("load_csv: row " + std::to_string(row + 2) +
                      " has wrong column count");
    int64_t ts;
    if (!parse_timestamp(cells[0], ts))
      throw DataError("load_csv: unparseable timestamp '" + cells[0] + "'");
    if (!frame.timestamps.empty()) {
      int64_t prev = frame.timestamps.back();
      if (ts <= prev) throw DataError("load_csv: non-increasing timestamps");
      if (interval_seconds > 0 && ts - prev != interval_seconds)
        throw DataError("load_csv: irregular sampling interval at row " +
                        std::to_string(row + 2));
    }
    frame.timestamps.push_back(ts);
    for (int j = 1; j <= d_x; ++j) {
      const std::string& cell = cells[static_cast<size_t>(j)];
      char* end = nullptr;
      double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || (end && *end != '\0') || !std::isfinite(v))
        throw DataError("load_csv: bad numeric cell '" + cell + "' at row " +
                        std::to_string(row + 2));
      vals.push_back(v);
    }
    ++row;
  }
  if (row == 0) throw DataError("load_csv: no data rows");
  frame.values = num::Tensor::from({row, d_x}, std::move(vals));
  return frame;
}

void save_csv(const SeriesFrame& frame, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_csv: cannot open " + path);
  out << "date";
  for (const auto& n : frame.variable_names) out << "," << n;
  out << "\n";
  char buf[40];
  for (int i = 0; i < frame.length(); ++i) {
    out << format_timestamp(frame.timestamps[static_cast<size_t>(i)]);
    for (int j = 0; j < frame.dims(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", frame.values.at({i, j}));
      out << "," << buf;
    }
    out << "\n";
  }
}

StandardizeStats fit_stats(const SeriesFrame& frame, int r0, int r1) {
  if (r0 < 0 || r1 <= r0 || r1 > frame.length())
    throw DataError("fit_stats: empty training range");
  int d = frame.dims();
  int n = r1 - r0;
  StandardizeStats s;
  s.mean = num::Tensor::zeros({d});
  s.std = num::Tensor::zeros({d});
  for (int j = 0; j < d; ++j) {
    double m = 0;
    for (int i = r0; i < r1; ++i) m += frame.values.at({i, j});
    m /= n;
    double v = 0;
    for (int i = r0; i < r1; ++i) {
      double dd = frame.values.at({i, j}) - m;
      v += dd * dd;
    }
    v /= n;
    double sd = std::sqrt(v);
    if (sd < 1e-8) {
      std::fprintf(stderr,
                   "dataio: variable %s has near-zero variance; std floored\n",
                   frame.variable_names[static_cast<size_t>(j)].c_str());
      sd = 1e-8;
    }
    s.mean.mutable_data()[j] = m;
    s.std.mutable_data()[j] = sd;
  }
  return s;
}

SeriesFrame standardize(const SeriesFrame& frame, const StandardizeStats& s) {
  SeriesFrame out = frame;
  out.values = num::Tensor::zeros(frame.values.shape());
  int L = frame.length(), d = frame.dims();
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < d; ++j)
      out.values.mutable_data()[static_cast<long>(i) * d + j] =
          (frame.values.at({i, j}) - s.mean[j]) / s.std[j];
  return out;
}

num::Tensor destandardize(const num::Tensor& values, const StandardizeStats& s) {
  if (values.rank() != 2 || values.dim(1) != s.mean.dim(0))
    throw DataError("destandardize: shape mismatch");
  num::Tensor out = num::Tensor::zeros(values.shape());
  int n = values.dim(0), d = values.dim(1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      out.mutable_data()[static_cast<long>(i) * d + j] =
          values.at({i, j}) * s.std[j] + s.mean[j];
  return out;
}

int window_count(int L, int L_x, int L_y) { return L - L_x - L_y + 1; }

std::vector<int> window_starts(const SeriesFrame& frame, const WindowSpec& spec) {
  if (spec.L_tok < 0 || spec.L_tok > spec.L_x)
    throw DataError("window: L_tok must lie in [0, L_x]");
  int n = window_count(frame.length(), spec.L_x, spec.L_y);
  if (n < 1) throw DataError("series too short");
  std::vector<int> out;
  for (int s = 0; s < n; s += spec.stride) out.push_back(s);
  return out;
}

WindowSample make_window(const SeriesFrame& frame, const WindowSpec& spec,
                         int start) {
  int L = frame.length(), d = frame.dims();
  if (start < 0 || start + spec.L_x + spec.L_y > L)
    throw DataError("make_window: window out of range");
  WindowSample w;
  w.start = start;
  w.enc_x = frame.values.view_leading(start, start + spec.L_x).clone();
  w.enc_marks = calendar_marks(frame, start, start + spec.L_x);
  int dec_len = spec.L_tok + spec.L_y;
  int tok0 = start + spec.L_x - spec.L_tok;
  w.dec_x = num::Tensor::zeros({dec_len, d});
  for (int i = 0; i < spec.L_tok; ++i)
    for (int j = 0; j < d; ++j)
      w.dec_x.mutable_data()[static_cast<long>(i) * d + j] =
          frame.values.at({tok0 + i, j});
  w.dec_marks = calendar_marks(frame, tok0, tok0 + dec_len);
  int t0 = start + spec.L_x;
  if (spec.mode == TargetMode::Multivariate) {
    w.target = frame.values.view_leading(t0, t0 + spec.L_y).clone();
  } else {
    w.target = num::Tensor::zeros({spec.L_y, 1});
    for (int i = 0; i < spec.L_y; ++i)
      w.target.mutable_data()[i] = frame.values.at({t0 + i, frame.target_index});
  }
  return w;
}

SplitRanges split_fractions(int L, double f_train, double f_val, double f_test) {
  if (f_train <= 0 || f_val <= 0 || f_test <= 0)
    throw DataError("split: fractions must be positive");
  if (std::abs(f_train + f_val + f_test - 1.0) > 1e-9)
    throw DataError("split: fractions must sum to 1");
  SplitRanges r;
  r.train_end = static_cast<int>(std::floor(L * f_train));
  r.val_end = static_cast<int>(std::floor(L * (f_train + f_val)));
  if (r.train_end == 0 || r.val_end == r.train_end || r.val_end == L)
    throw DataError("split: empty split");
  return r;
}

SplitRanges split_months(const SeriesFrame& frame, int train_months,
                         int val_months, int test_months) {
  if (train_months < 1 || val_months < 1 || test_months < 1)
    throw DataError("split: month counts must be positive");
  int64_t days0 = floordiv(frame.timestamps.front(), 86400);
  int y0, m0, d0;
  civil_from_days(days0, y0, m0, d0);
  SplitRanges r{-1, -1};
  int needed = train_months + val_months + test_months;
  for (int i = 0; i < frame.length(); ++i) {
    int64_t days = floordiv(frame.timestamps[static_cast<size_t>(i)], 86400);
    int y, m, d;
    civil_from_days(days, y, m, d);
    int midx = (y - y0) * 12 + (m - m0);
    if (midx >= needed)
      throw DataError("split: frame spans more months than the split");
    if (r.train_end < 0 && midx >= train_months) r.train_end = i;
    if (r.val_end < 0 && midx >= train_months + val_months) r.val_end = i;
  }
  if (r.train_end < 0 || r.val_end < 0) throw DataError("split: empty split");
  return r;
}

std::vector<int> windows_in_range(const SeriesFrame& frame,
                                  const WindowSpec& spec, int row_lo,
                                  int row_hi) {
  std::vector<int> out;
  int n = window_count(frame.length(), spec.L_x, spec.L_y);
  for (int s = 0; s < n; s += spec.stride) {
    int last_target = s + spec.L_x + spec.L_y - 1;
    if (last_target >= row_lo && last_target < row_hi) out.push_back(s);
  }
  return out;
}

SeriesFrame synth_generate(const SynthSpec& spec) {
  if (spec.d_x < 1) throw DataError("synth: d_x must be >= 1");
  if (spec.periods.empty()) throw DataError("synth: need at least one period");
  SeriesFrame frame;
  frame.interval_seconds = 3600;
  frame.target_index = 0;
  int64_t t0 = timestamp_from_civil(2020, 1, 1, 0, 0, 0);
  frame.timestamps.resize(static_cast<size_t>(spec.L));
  for (int i = 0; i < spec.L; ++i)
    frame.timestamps[static_cast<size_t>(i)] = t0 + 3600ll * i;
  frame.values = num::Tensor::zeros({spec.L, spec.d_x});
  num::Rng rng(spec.seed);
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  for (int j = 0; j < spec.d_x; ++j) {
    double period = spec.periods[static_cast<size_t>(j) % spec.periods.size()];
    frame.variable_names.push_back("v" + std::to_string(j));
    for (int i = 0; i < spec.L; ++i) {
      double v = std::sin(kTwoPi * i / period) +
                 spec.trend_slope * static_cast<double>(i) / spec.L;
      if (spec.noise_std > 0) v += spec.noise_std * rng.normal();
      frame.values.mutable_data()[static_cast<long>(i) * spec.d_x + j] = v;
    }
  }
  return frame;
}

}  // namespace conformer::data
