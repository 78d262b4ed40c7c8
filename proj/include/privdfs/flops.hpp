#pragma once

#include <cstdint>

namespace privdfs {

// Instrumented FLOP counter. Layers add 2 ops per multiply-accumulate at
// output-element granularity whenever a counter is installed; the closed-form
// accounting in metrics.hpp must agree with it exactly.
inline thread_local std::int64_t* g_flops_counter = nullptr;

inline void add_flops(std::int64_t n) {
    if (g_flops_counter) *g_flops_counter += n;
}

struct FlopScope {
    std::int64_t count = 0;
    std::int64_t* prev;
    FlopScope() : prev(g_flops_counter) { g_flops_counter = &count; }
    ~FlopScope() { g_flops_counter = prev; }
    FlopScope(const FlopScope&) = delete;
    FlopScope& operator=(const FlopScope&) = delete;
};

}  // namespace privdfs
