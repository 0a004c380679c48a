#include "contactflow/parallel.hpp"

namespace contactflow {

namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int threads) { g_threads.store(std::max(1, threads)); }

int num_threads() { return g_threads.load(); }

}  // namespace contactflow
