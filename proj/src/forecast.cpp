#include "dynerr/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <queue>
#include <utility>

#include "dynerr/parallel.hpp"

namespace dynerr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kLeafSize = 16;

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

using Candidate = std::pair<double, std::size_t>;  // (squared distance, position)

// Bounded max-heap keeping the k lexicographically smallest candidates.
class KBest {
 public:
  explicit KBest(std::size_t k) : k_(k) {}

  void offer(double d2, std::size_t pos) {
    const Candidate c{d2, pos};
    if (heap_.size() < k_) {
      heap_.push(c);
    } else if (c < heap_.top()) {
      heap_.pop();
      heap_.push(c);
    }
  }
  bool full() const { return heap_.size() >= k_; }
  double worst() const { return heap_.top().first; }

  std::vector<Candidate> sorted() {
    std::vector<Candidate> out;
    while (!heap_.empty()) {
      out.push_back(heap_.top());
      heap_.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

 private:
  std::size_t k_;
  std::priority_queue<Candidate> heap_;
};

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void ForecastTask::validate() const {
  if (m < 1 || n < 1 || l < 1) throw InvalidArgument("forecast task needs m, n, l >= 1");
}

std::vector<double> persistence_forecast(const Matrix& window, std::size_t /*n*/) {
  if (window.rows() == 0) throw InvalidArgument("persistence forecast needs a non-empty window");
  const auto last = window.row(window.rows() - 1);
  return {last.begin(), last.end()};
}

std::vector<double> PersistenceForecaster::predict(const Matrix& window, std::size_t n) const {
  return persistence_forecast(window, n);
}

// kd-tree over flattened reference windows with per-node bounding boxes.
struct AnalogForecaster::Tree {
  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t left = 0;
    std::size_t right = 0;
    bool leaf = true;
  };

  const Matrix* reference = nullptr;
  std::size_t m = 0;
  std::size_t dim = 0;
  std::vector<std::size_t> order;  // window positions, permuted by the build
  std::vector<Node> nodes;
  std::vector<double> lo;  // nodes.size() * dim
  std::vector<double> hi;

  std::span<const double> point(std::size_t pos) const { return reference->rows_span(pos, m); }

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes.size();
    nodes.push_back({begin, end, 0, 0, true});
    lo.resize((id + 1) * dim, std::numeric_limits<double>::infinity());
    hi.resize((id + 1) * dim, -std::numeric_limits<double>::infinity());
    for (std::size_t i = begin; i < end; ++i) {
      const auto p = point(order[i]);
      for (std::size_t d = 0; d < dim; ++d) {
        lo[id * dim + d] = std::min(lo[id * dim + d], p[d]);
        hi[id * dim + d] = std::max(hi[id * dim + d], p[d]);
      }
    }
    if (end - begin <= kLeafSize) return id;

    std::size_t split_dim = 0;
    double spread = -1.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double s = hi[id * dim + d] - lo[id * dim + d];
      if (s > spread) {
        spread = s;
        split_dim = d;
      }
    }
    if (spread <= 0.0) return id;  // all points identical
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order.begin() + static_cast<std::ptrdiff_t>(begin),
                     order.begin() + static_cast<std::ptrdiff_t>(mid),
                     order.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       const double va = point(a)[split_dim];
                       const double vb = point(b)[split_dim];
                       return va < vb || (va == vb && a < b);
                     });
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes[id].leaf = false;
    nodes[id].left = left;
    nodes[id].right = right;
    return id;
  }

  double box_bound(std::size_t id, std::span<const double> q) const {
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double l = lo[id * dim + d];
      const double h = hi[id * dim + d];
      const double diff = q[d] < l ? l - q[d] : (q[d] > h ? q[d] - h : 0.0);
      s += diff * diff;
    }
    return s;
  }

  template <typename Admissible>
  void search(std::size_t id, std::span<const double> q, KBest& best,
              const Admissible& admissible) const {
    const Node& node = nodes[id];
    if (node.leaf) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t pos = order[i];
        if (!admissible(pos)) continue;
        best.offer(squared_distance(point(pos), q), pos);
      }
      return;
    }
    const double bl = box_bound(node.left, q);
    const double br = box_bound(node.right, q);
    const std::size_t first = bl <= br ? node.left : node.right;
    const std::size_t second = bl <= br ? node.right : node.left;
    const double b_first = std::min(bl, br);
    const double b_second = std::max(bl, br);
    // Bounds are summed in a different order than exact distances, so prune
    // with a little slack to never drop an exact tie.
    auto prunable = [&](double bound) {
      return best.full() && bound > best.worst() * (1.0 + 1e-9) + 1e-300;
    };
    if (!prunable(b_first)) search(first, q, best, admissible);
    if (!prunable(b_second)) search(second, q, best, admissible);
  }
};

AnalogForecaster::AnalogForecaster(Matrix reference, std::size_t k, std::size_t m, Search search)
    : reference_(std::move(reference)), k_(k), m_(m), search_(search) {
  if (k_ < 1) throw InvalidArgument("analog forecaster needs k >= 1");
  if (m_ < 1) throw InvalidArgument("analog forecaster needs m >= 1");
  if (reference_.rows() <= m_) throw InvalidArgument("analog reference is shorter than the window");
  if (search_ == Search::kTree) {
    tree_ = std::make_unique<Tree>();
    tree_->reference = &reference_;
    tree_->m = m_;
    tree_->dim = m_ * reference_.cols();
    const std::size_t n_windows = reference_.rows() - m_ + 1;
    tree_->order.resize(n_windows);
    for (std::size_t p = 0; p < n_windows; ++p) tree_->order[p] = p;
    tree_->build(0, n_windows);
  }
}

AnalogForecaster::AnalogForecaster(const ReferenceAttractor& reference, std::size_t k,
                                   std::size_t m, Search search)
    : AnalogForecaster(reference.states(), k, m, search) {}

AnalogForecaster::~AnalogForecaster() = default;

AnalogForecaster::AnalogForecaster(AnalogForecaster&& other) noexcept
    : reference_(std::move(other.reference_)),
      k_(other.k_),
      m_(other.m_),
      search_(other.search_),
      tree_(std::move(other.tree_)) {
  if (tree_) tree_->reference = &reference_;
}

std::vector<std::size_t> AnalogForecaster::neighbours(std::span<const double> window_flat,
                                                      std::size_t n,
                                                      const std::optional<RowRange>& exclude) const {
  if (window_flat.size() != m_ * reference_.cols()) {
    throw InvalidArgument("analog query window has the wrong shape");
  }
  if (n < 1) throw InvalidArgument("lead n must be >= 1");
  const std::size_t n_ref = reference_.rows();
  if (n_ref < m_ + n) throw InvalidArgument("no admissible analog candidates: reference too short");
  const std::size_t last_pos = n_ref - m_ - n;  // successor row last_pos + m - 1 + n < n_ref
  auto admissible = [&](std::size_t pos) {
    if (pos > last_pos) return false;
    if (exclude && pos < exclude->end && pos + m_ > exclude->begin) return false;
    return true;
  };

  KBest best(k_);
  if (search_ == Search::kTree) {
    tree_->search(0, window_flat, best, admissible);
  } else {
    for (std::size_t pos = 0; pos <= last_pos; ++pos) {
      if (!admissible(pos)) continue;
      best.offer(squared_distance(reference_.rows_span(pos, m_), window_flat), pos);
    }
  }
  const auto chosen = best.sorted();
  if (chosen.empty()) throw InvalidArgument("no admissible analog candidates");
  std::vector<std::size_t> out;
  out.reserve(chosen.size());
  for (const auto& c : chosen) out.push_back(c.second);
  return out;
}

std::vector<double> AnalogForecaster::predict(const Matrix& window, std::size_t n,
                                              const std::optional<RowRange>& exclude) const {
  if (window.rows() != m_ || window.cols() != reference_.cols()) {
    throw InvalidArgument("analog query window must be " + std::to_string(m_) + " x " +
                          std::to_string(reference_.cols()));
  }
  const auto pos = neighbours(window.flat(), n, exclude);
  std::vector<double> out(reference_.cols(), 0.0);
  for (std::size_t p : pos) {
    const auto succ = reference_.row(p + m_ - 1 + n);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += succ[j];
  }
  const double count = static_cast<double>(pos.size());
  for (double& v : out) v /= count;
  return out;
}

std::vector<double> AnalogForecaster::predict(const Matrix& window, std::size_t n) const {
  return predict(window, n, std::nullopt);
}

std::vector<double> analog_forecast(const AnalogForecaster& forecaster, const Matrix& window,
                                    std::size_t n) {
  return forecaster.predict(window, n);
}

std::vector<std::size_t> evenly_spaced_starts(std::size_t n_admissible, std::size_t n_starts) {
  if (n_starts == 0) throw InvalidArgument("need at least one start");
  if (n_starts > n_admissible) {
    throw InvalidArgument("requested " + std::to_string(n_starts) + " starts but only " +
                          std::to_string(n_admissible) + " are admissible");
  }
  std::vector<std::size_t> out(n_starts);
  if (n_starts == 1) return {0};
  for (std::size_t i = 0; i < n_starts; ++i) {
    out[i] = static_cast<std::size_t>(
        (static_cast<unsigned long long>(i) * (n_admissible - 1)) / (n_starts - 1));
  }
  return out;
}

ForecastPair direct_eval(const Forecaster& forecaster, const TrajectoryDataset& test,
                         const ForecastTask& task, std::size_t max_pairs, std::size_t threads) {
  task.validate();
  if (task.l != 1) throw InvalidArgument("direct evaluation needs output length l = 1");
  const std::size_t t = test.n_times();
  if (t <= task.m + task.n - 1) {
    throw InvalidArgument("window m=" + std::to_string(task.m) + " plus lead n=" +
                          std::to_string(task.n) + " does not fit a test set of " +
                          std::to_string(t) + " rows");
  }
  const std::size_t n_admissible = t - task.m - task.n + 1;
  const std::vector<std::size_t> starts =
      max_pairs == 0 || max_pairs >= n_admissible ? evenly_spaced_starts(n_admissible, n_admissible)
                                                  : evenly_spaced_starts(n_admissible, max_pairs);
  const std::size_t ns = test.n_space();
  Matrix pred(starts.size(), ns);
  Matrix truth(starts.size(), ns);
  parallel_for(
      starts.size(),
      [&](std::size_t i) {
        const std::size_t s = starts[i];
        const Matrix window = test.states().slice_rows(s, task.m);
        const auto p = forecaster.predict(window, task.n);
        if (p.size() != ns) throw InvalidArgument("forecaster returned a state of the wrong size");
        std::copy(p.begin(), p.end(), pred.row(i).begin());
        const auto y = test.states().row(s + task.m - 1 + task.n);
        std::copy(y.begin(), y.end(), truth.row(i).begin());
      },
      threads);
  const std::uint64_t offset = test.start_index() + task.m - 1 + task.n;
  return ForecastPair{TrajectoryDataset(test.name() + "_pred", test.dt(), std::move(pred), offset),
                      TrajectoryDataset(test.name() + "_truth", test.dt(), std::move(truth), offset),
                      task.n};
}

RolloutResult recursive_rollout(const Forecaster& forecaster, const Matrix& init_window,
                                std::size_t steps) {
  if (steps < 1) throw InvalidArgument("rollout needs steps >= 1");
  if (init_window.rows() == 0) throw InvalidArgument("rollout needs a non-empty initial window");
  RolloutResult res;
  res.states = Matrix(0, init_window.cols());
  Matrix window = init_window;
  const std::size_t m = window.rows();
  const std::size_t ns = window.cols();
  for (std::size_t step = 1; step <= steps; ++step) {
    const auto next = forecaster.predict(window, 1);
    if (next.size() != ns) throw InvalidArgument("forecaster returned a state of the wrong size");
    if (!std::all_of(next.begin(), next.end(), [](double v) { return std::isfinite(v); })) {
      res.crash_step = step;
      break;
    }
    res.states.append_row(next);
    // Slide: drop the oldest row, append the prediction.
    auto flat = window.flat();
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(ns), flat.end(), flat.begin());
    std::copy(next.begin(), next.end(), window.row(m - 1).begin());
  }
  return res;
}

RolloutStudy rollout_study(const Forecaster& forecaster, const TrajectoryDataset& test,
                           const ReferenceAttractor& ref, const RolloutStudyConfig& config,
                           std::size_t threads) {
  validate_quantile(config.q);
  if (config.m < 1 || config.steps < 1) throw InvalidArgument("rollout study needs m, steps >= 1");
  for (std::size_t t : config.eval_steps) {
    if (t < 1 || t > config.steps) {
      throw InvalidArgument("eval step " + std::to_string(t) + " outside [1, " +
                            std::to_string(config.steps) + "]");
    }
  }
  const std::size_t t_rows = test.n_times();
  if (t_rows < config.m + config.steps) {
    throw InvalidArgument("test set of " + std::to_string(t_rows) + " rows cannot hold m + steps");
  }
  RolloutStudy study;
  study.starts = evenly_spaced_starts(t_rows - config.m - config.steps + 1, config.n_starts);

  std::vector<RolloutResult> runs(study.starts.size());
  parallel_for(
      study.starts.size(),
      [&](std::size_t i) {
        runs[i] = recursive_rollout(forecaster, test.states().slice_rows(study.starts[i], config.m),
                                    config.steps);
      },
      threads);
  for (const auto& r : runs) study.crash_steps.push_back(r.crash_step);

  const std::size_t ns = test.n_space();
  for (std::size_t t : config.eval_steps) {
    EvalTimeResult et;
    et.step = t;
    et.lt = config.lt_steps ? static_cast<double>(t) / static_cast<double>(config.lt_steps) : kNaN;
    Matrix pred(0, ns);
    Matrix truth(0, ns);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      if (runs[i].states.rows() < t) continue;  // crashed before t
      pred.append_row(runs[i].states.row(t - 1));
      truth.append_row(test.states().row(study.starts[i] + config.m - 1 + t));
    }
    et.survivors = pred.rows();
    et.mean_mse = et.std_mse = kNaN;
    if (et.survivors == 0) {
      et.error = "no surviving trajectories";
      study.times.push_back(std::move(et));
      continue;
    }
    ForecastPair pair{TrajectoryDataset(test.name() + "_rollout", test.dt(), std::move(pred)),
                      TrajectoryDataset(test.name() + "_truth", test.dt(), std::move(truth)), t};
    const auto errs = per_state_squared_error(pair);
    double sum = 0.0;
    for (double e : errs) sum += e;
    et.mean_mse = sum / static_cast<double>(errs.size());
    double ss = 0.0;
    for (double e : errs) ss += (e - et.mean_mse) * (e - et.mean_mse);
    et.std_mse = std::sqrt(ss / static_cast<double>(errs.size()));
    try {
      const auto pred_idx = compute_indices(ref, pair.pred, config.q, threads);
      const auto true_idx = compute_indices(ref, pair.truth, config.q, threads);
      et.report = build_report(pair, pred_idx, true_idx, std::nullopt, config.n_bins);
    } catch (const Error& e) {
      et.error = e.what();
    }
    study.times.push_back(std::move(et));
  }
  return study;
}

void write_rollout_csv(const RolloutStudy& study, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,lt,mean_mse,std_mse,mse_d,mse_theta,wd,survivors\n";
  for (const auto& t : study.times) {
    const double mse_d = t.report ? t.report->mse_d : kNaN;
    const double mse_theta = t.report ? t.report->mse_theta : kNaN;
    const double wd = t.report ? t.report->wd : kNaN;
    out << t.step << ',' << fmt17(t.lt) << ',' << fmt17(t.mean_mse) << ',' << fmt17(t.std_mse)
        << ',' << fmt17(mse_d) << ',' << fmt17(mse_theta) << ',' << fmt17(wd) << ','
        << t.survivors << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace dynerr
