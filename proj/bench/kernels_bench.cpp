// Serial reference vs OpenMP kernels on model-sized shapes. Prints one line
// per kernel with best-of-N wall time and whether outputs match bit for bit.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metaclust/kernels.hpp"

using namespace metaclust::kernels;

namespace {

std::vector<double> randn(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double best_ms(int reps, const std::function<void()>& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void report(const std::string& name, double serial_ms, double omp_ms, bool same) {
  std::printf("%-28s serial %9.3f ms  omp %9.3f ms  speedup %5.2fx  %s\n", name.c_str(), serial_ms,
              omp_ms, serial_ms / omp_ms, same ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel timings"};
  std::size_t n = 200, hidden = 256;
  int reps = 5;
  app.add_option("--n", n, "instances per episode");
  app.add_option("--hidden", hidden, "hidden width");
  app.add_option("--reps", reps, "repetitions, best time kept");
  CLI11_PARSE(app, argc, argv);

  std::mt19937_64 rng(7);
  std::printf("threads %d, n %zu, hidden %zu\n", max_threads(), n, hidden);
  bool ok = true;

  {
    // hidden layer forward: (n x h) * (h x h)^T
    const GemmShape s{n, hidden, hidden, false, true};
    auto a = randn(n * hidden, rng), b = randn(hidden * hidden, rng);
    std::vector<double> c1(n * hidden), c2(n * hidden);
    const double ts = best_ms(reps, [&] { serial::gemm(s, a, b, c1); });
    const double to = best_ms(reps, [&] { omp::gemm(s, a, b, c2); });
    report("gemm forward", ts, to, c1 == c2);
    ok = ok && c1 == c2;
  }
  {
    // weight gradient: (n x h)^T * (n x h)
    const GemmShape s{hidden, hidden, n, true, false};
    auto a = randn(n * hidden, rng), b = randn(n * hidden, rng);
    std::vector<double> c1(hidden * hidden), c2(hidden * hidden);
    const double ts = best_ms(reps, [&] { serial::gemm(s, a, b, c1); });
    const double to = best_ms(reps, [&] { omp::gemm(s, a, b, c2); });
    report("gemm weight gradient", ts, to, c1 == c2);
    ok = ok && c1 == c2;
  }
  {
    const std::size_t k = 10, dim = 10;
    auto a = randn(n * dim, rng), b = randn(k * dim, rng);
    std::vector<double> d1(n * k), d2(n * k);
    const double ts = best_ms(reps, [&] { serial::row_sqdist(n, k, dim, a, b, d1); });
    const double to = best_ms(reps, [&] { omp::row_sqdist(n, k, dim, a, b, d2); });
    report("row_sqdist", ts, to, d1 == d2);
    ok = ok && d1 == d2;
  }
  {
    const std::size_t k = 10;
    auto a = randn(n * k, rng), g = randn(n * n, rng);
    std::vector<double> d1(n * n), d2(n * n), g1(n * k), g2(n * k);
    const double ts = best_ms(reps, [&] { serial::pairwise_l1(n, k, a, d1); });
    const double to = best_ms(reps, [&] { omp::pairwise_l1(n, k, a, d2); });
    report("pairwise_l1", ts, to, d1 == d2);
    const double bs = best_ms(reps, [&] { serial::pairwise_l1_backward(n, k, a, g, g1); });
    const double bo = best_ms(reps, [&] { omp::pairwise_l1_backward(n, k, a, g, g2); });
    report("pairwise_l1 backward", bs, bo, g1 == g2);
    ok = ok && d1 == d2 && g1 == g2;
  }
  return ok ? 0 : 1;
}
