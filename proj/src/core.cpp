#include "dynerr/core.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dynerr {

namespace {

constexpr std::array<char, 4> kMagic = {'D', 'Y', 'T', 'R'};
constexpr std::uint32_t kBinaryVersion = 1;
constexpr const char* kCsvTag = "# dynerr-csv v1";

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::string& what) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (!in) throw IoError("truncated binary dataset while reading " + what);
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  return std::bit_cast<T>(bytes);
}

std::string render_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string stem_of(const std::filesystem::path& path) { return path.stem().string(); }

TrajectoryDataset load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw IoError(path.string() + ": bad magic, not a DYTR file");
  const auto version = read_le<std::uint32_t>(in, "version");
  if (version != kBinaryVersion) {
    throw IoError(path.string() + ": unsupported DYTR version " + std::to_string(version));
  }
  const auto nt = read_le<std::uint64_t>(in, "N_t");
  const auto ns = read_le<std::uint64_t>(in, "N_s");
  const auto dt = read_le<double>(in, "dt");
  const auto start = read_le<std::uint64_t>(in, "start_index");
  if (nt == 0 || ns == 0) throw IoError(path.string() + ": header declares an empty matrix");
  std::vector<double> data(nt * ns);
  for (std::uint64_t i = 0; i < nt; ++i) {
    for (std::uint64_t j = 0; j < ns; ++j) {
      const double v = read_le<double>(in, "row " + std::to_string(i));
      if (!std::isfinite(v)) {
        throw IoError(path.string() + ": non-finite value at row " + std::to_string(i) +
                      ", column " + std::to_string(j));
      }
      data[i * ns + j] = v;
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError(path.string() + ": trailing bytes after declared matrix");
  }
  return TrajectoryDataset(stem_of(path), dt, Matrix(nt, ns, std::move(data)), start);
}

// Parses "key=value" tokens following the CSV tag.
bool header_value(const std::string& header, const std::string& key, std::string& out) {
  std::istringstream tokens(header);
  std::string tok;
  while (tokens >> tok) {
    if (tok.rfind(key + "=", 0) == 0) {
      out = tok.substr(key.size() + 1);
      return true;
    }
  }
  return false;
}

template <typename T>
T parse_number(const std::string& text, const std::string& what) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw IoError("malformed " + what + ": '" + text + "'");
  return value;
}

TrajectoryDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header) || header.rfind(kCsvTag, 0) != 0) {
    throw IoError(path.string() + ": malformed header, expected '" + kCsvTag + " ...'");
  }
  std::string nt_s, ns_s, dt_s, start_s = "0";
  if (!header_value(header, "nt", nt_s) || !header_value(header, "ns", ns_s) ||
      !header_value(header, "dt", dt_s)) {
    throw IoError(path.string() + ": malformed header, missing nt/ns/dt");
  }
  header_value(header, "start", start_s);
  const auto nt = parse_number<std::uint64_t>(nt_s, "header nt");
  const auto ns = parse_number<std::uint64_t>(ns_s, "header ns");
  const auto dt = parse_number<double>(dt_s, "header dt");
  const auto start = parse_number<std::uint64_t>(start_s, "header start");
  if (nt == 0 || ns == 0) throw IoError(path.string() + ": header declares an empty matrix");

  std::vector<double> data;
  data.reserve(nt * ns);
  std::string line;
  std::uint64_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (row >= nt) throw IoError(path.string() + ": more rows than header nt=" + nt_s);
    std::uint64_t col = 0;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      const std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos
                                                                          : comma - pos);
      if (col >= ns) {
        throw IoError(path.string() + ": ragged row " + std::to_string(row) + ", more than " +
                      ns_s + " columns");
      }
      double v = 0.0;
      const char* first = cell.data();
      const char* last = cell.data() + cell.size();
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last) {
        throw IoError(path.string() + ": malformed number '" + cell + "' at row " +
                      std::to_string(row) + ", column " + std::to_string(col));
      }
      if (!std::isfinite(v)) {
        throw IoError(path.string() + ": non-finite value '" + cell + "' at row " +
                      std::to_string(row) + ", column " + std::to_string(col));
      }
      data.push_back(v);
      ++col;
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (col != ns) {
      throw IoError(path.string() + ": ragged row " + std::to_string(row) + ", expected " +
                    ns_s + " columns, got " + std::to_string(col));
    }
    ++row;
  }
  if (row != nt) {
    throw IoError(path.string() + ": expected " + nt_s + " rows, found " + std::to_string(row));
  }
  return TrajectoryDataset(stem_of(path), dt, Matrix(nt, ns, std::move(data)), start);
}

void save_binary(const TrajectoryDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  write_le<std::uint32_t>(out, kBinaryVersion);
  write_le<std::uint64_t>(out, ds.n_times());
  write_le<std::uint64_t>(out, ds.n_space());
  write_le<double>(out, ds.dt());
  write_le<std::uint64_t>(out, ds.start_index());
  if constexpr (std::endian::native == std::endian::little) {
    const auto flat = ds.states().flat();
    out.write(reinterpret_cast<const char*>(flat.data()),
              static_cast<std::streamsize>(flat.size_bytes()));
  } else {
    for (double v : ds.states().flat()) write_le<double>(out, v);
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void save_csv(const TrajectoryDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kCsvTag << " nt=" << ds.n_times() << " ns=" << ds.n_space()
      << " dt=" << render_double(ds.dt());
  if (ds.start_index() != 0) out << " start=" << ds.start_index();
  out << '\n';
  const Matrix& m = ds.states();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << render_double(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::size_t floor_count(double frac, std::size_t n) {
  // Guard against 0.7 * 100 landing a hair under 70.
  return static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
}

}  // namespace

TrajectoryDataset::TrajectoryDataset(std::string name, double dt, Matrix states,
                                     std::uint64_t start_index)
    : name_(std::move(name)), dt_(dt), states_(std::move(states)), start_index_(start_index) {
  if (states_.rows() == 0 || states_.cols() == 0) {
    throw InvalidArgument("dataset '" + name_ + "' must have N_t >= 1 and N_s >= 1");
  }
  if (!(dt_ > 0.0) || !std::isfinite(dt_)) {
    throw InvalidArgument("dataset '" + name_ + "' must have finite dt > 0");
  }
  const auto flat = states_.flat();
  for (std::size_t k = 0; k < flat.size(); ++k) {
    if (!std::isfinite(flat[k])) {
      throw InvalidArgument("dataset '" + name_ + "' has a non-finite entry at row " +
                            std::to_string(k / states_.cols()) + ", column " +
                            std::to_string(k % states_.cols()));
    }
  }
}

TrajectoryDataset TrajectoryDataset::slice(std::size_t first, std::size_t count) const {
  return TrajectoryDataset(name_, dt_, states_.slice_rows(first, count), start_index_ + first);
}

FileFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? FileFormat::kCsv : FileFormat::kBinary;
}

TrajectoryDataset load_dataset(const std::filesystem::path& path, FileFormat format) {
  if (!std::filesystem::exists(path)) throw IoError("no such file: " + path.string());
  return format == FileFormat::kCsv ? load_csv(path) : load_binary(path);
}

void save_dataset(const TrajectoryDataset& dataset, const std::filesystem::path& path,
                  FileFormat format) {
  if (format == FileFormat::kCsv) {
    save_csv(dataset, path);
  } else {
    save_binary(dataset, path);
  }
}

NormStats compute_norm_stats(const TrajectoryDataset& train) {
  const auto flat = train.states().flat();
  const double n = static_cast<double>(flat.size());
  double sum = 0.0;
  for (double v : flat) sum += v;
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : flat) ss += (v - mean) * (v - mean);
  NormStats stats{mean, std::sqrt(ss / n)};
  if (!(stats.std > 0.0)) throw InvalidArgument("training data is constant (std = 0)");
  return stats;
}

void validate(const NormStats& stats) {
  if (!std::isfinite(stats.mean) || !std::isfinite(stats.std) || !(stats.std > 0.0)) {
    throw InvalidArgument("normalization stats need finite mean and std > 0");
  }
}

TrajectoryDataset zscore(const TrajectoryDataset& dataset, const NormStats& stats) {
  validate(stats);
  Matrix out = dataset.states();
  for (double& v : out.flat()) v = (v - stats.mean) / stats.std;
  return TrajectoryDataset(dataset.name(), dataset.dt(), std::move(out), dataset.start_index());
}

TrajectoryDataset inverse_zscore(const TrajectoryDataset& dataset, const NormStats& stats) {
  validate(stats);
  Matrix out = dataset.states();
  for (double& v : out.flat()) v = v * stats.std + stats.mean;
  return TrajectoryDataset(dataset.name(), dataset.dt(), std::move(out), dataset.start_index());
}

void validate(const SplitSpec& spec) {
  for (double f : {spec.train_frac, spec.val_frac, spec.test_frac}) {
    if (!(f > 0.0 && f < 1.0)) throw InvalidArgument("split fractions must lie in (0, 1)");
  }
  if (std::abs(spec.train_frac + spec.val_frac + spec.test_frac - 1.0) > 1e-12) {
    throw InvalidArgument("split fractions must sum to 1");
  }
}

SplitResult split(const TrajectoryDataset& dataset, const SplitSpec& spec) {
  validate(spec);
  const std::size_t n = dataset.n_times();
  if (n < 3) throw InvalidArgument("split needs N_t >= 3");
  const std::size_t n_train = floor_count(spec.train_frac, n);
  const std::size_t n_val = floor_count(spec.val_frac, n);
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw InvalidArgument("dataset of " + std::to_string(n) + " rows is too short to split");
  }
  const std::size_t n_test = n - n_train - n_val;
  return SplitResult{dataset.slice(0, n_train), dataset.slice(n_train, n_val),
                     dataset.slice(n_train + n_val, n_test)};
}

}  // namespace dynerr
