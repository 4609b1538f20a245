#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "conformer/tensor.hpp"

namespace conformer::data {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A timestamped multivariate series. Immutable after construction and
// shareable read-only across threads.
struct SeriesFrame {
  std::vector<int64_t> timestamps;  // epoch seconds (UTC), strictly increasing
  num::Tensor values;               // [L x d_x]
  std::vector<std::string> variable_names;
  int target_index = 0;
  int64_t interval_seconds = 0;  // 0 = not enforced

  int length() const { return values.defined() ? values.dim(0) : 0; }
  int dims() const { return values.defined() ? values.dim(1) : 0; }
};

struct StandardizeStats {
  num::Tensor mean;  // [d_x]
  num::Tensor std;   // [d_x], strictly positive (floored)
};

// ---- civil calendar (UTC, no leap seconds) ----

struct CalendarCodes {
  int minute;   // 0..59
  int hour;     // 0..23
  int weekday;  // Monday = 0
  int day;      // 1..31
  int month;    // 1..12
};

CalendarCodes calendar_codes(int64_t epoch_seconds);
std::vector<CalendarCodes> calendar_features(const std::vector<int64_t>& ts);
int64_t timestamp_from_civil(int year, int month, int day, int hour, int minute,
                             int second);
std::string format_timestamp(int64_t epoch_seconds);  // YYYY-MM-DD HH:MM:SS

// Embedding-ready mark matrix [n x 5] for rows [r0, r1): columns are
// minute, hour, weekday, day-1, month-1 (all zero-based).
num::Tensor calendar_marks(const SeriesFrame& frame, int r0, int r1);
constexpr int kNumScales = 5;
// per-scale table sizes in mark column order
constexpr int kScaleCardinality[kNumScales] = {60, 24, 7, 31, 12};

// ---- CSV I/O ----
// Schema: header row, first column "date" with "YYYY-MM-DD HH:MM[:SS]",
// remaining columns decimal numbers.
SeriesFrame load_csv(const std::string& path, const std::string& target_name,
                     int64_t interval_seconds);
void save_csv(const SeriesFrame& frame, const std::string& path);

// ---- standardization (population statistics over the training range) ----
StandardizeStats fit_stats(const SeriesFrame& frame, int r0, int r1);
SeriesFrame standardize(const SeriesFrame& frame, const StandardizeStats& s);
num::Tensor destandardize(const num::Tensor& values, const StandardizeStats& s);

// ---- windowing ----

enum class TargetMode { Multivariate, Univariate };

struct WindowSpec {
  int L_x = 48;
  int L_y = 24;
  int L_tok = 24;
  int stride = 1;
  TargetMode mode = TargetMode::Multivariate;
};

// One training example. dec_x carries the last L_tok encoder rows followed
// by zero-filled slots for the L_y targets; marks cover the true timestamps
// of every decoder position (the calendar is known ahead).
struct WindowSample {
  num::Tensor enc_x;      // [L_x x d_x]
  num::Tensor enc_marks;  // [L_x x 5]
  num::Tensor dec_x;      // [(L_tok+L_y) x d_x]
  num::Tensor dec_marks;  // [(L_tok+L_y) x 5]
  num::Tensor target;     // [L_y x d_t]
  int start = 0;          // first encoder row in the frame
};

int window_count(int L, int L_x, int L_y);
std::vector<int> window_starts(const SeriesFrame& frame, const WindowSpec& spec);
WindowSample make_window(const SeriesFrame& frame, const WindowSpec& spec,
                         int start);

// ---- chronological splits ----
// Row ranges: train [0, train_end), val [train_end, val_end), test
// [val_end, L). A window belongs to the split containing its last target
// row; its input may reach back across the boundary.
struct SplitRanges {
  int train_end = 0;
  int val_end = 0;
};

SplitRanges split_fractions(int L, double f_train, double f_val, double f_test);
SplitRanges split_months(const SeriesFrame& frame, int train_months,
                         int val_months, int test_months);
std::vector<int> windows_in_range(const SeriesFrame& frame,
                                  const WindowSpec& spec, int row_lo,
                                  int row_hi);

// ---- synthetic data ----
struct SynthSpec {
  uint64_t seed = 7;
  int L = 2000;
  int d_x = 4;
  std::vector<double> periods = {24, 24, 48, 96};
  double trend_slope = 0.0;
  double noise_std = 0.1;
};

// variable j = sin(2*pi*t/period_j) + trend_slope*t/L + gaussian noise,
// hourly timestamps from a fixed epoch; deterministic per seed.
SeriesFrame synth_generate(const SynthSpec& spec);

}  // namespace conformer::data
