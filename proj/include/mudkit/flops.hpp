// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace mudkit {

/// Per-call FLOP counts for the three kernel classes of the cost model:
/// GEMM-class work (Gram formation, k x k into k x d applies), triangular
/// solves, and norm reductions. Scalar/elementwise work is not counted.
///
/// Both fields store 2 FLOPs per multiply-add pair. The headline cost
/// figures count GEMMs that way but quote TRSM in multiply-add units, so
/// model_flops() reports gemm_flops + trsm_flops/2 and leaves reductions
/// out; total_flops() is the plain sum. Ledgers are per call: every kernel
/// takes an optional ledger pointer and there is no global counter.
struct FlopLedger {
    std::uint64_t gemm_flops = 0;
    std::uint64_t trsm_flops = 0;
    std::uint64_t reduction_flops = 0;

    /// Cost-model total: GEMM FLOPs plus TRSM multiply-adds, reductions excluded.
    std::uint64_t model_flops() const { return gemm_flops + trsm_flops / 2; }

    /// Plain sum of all counted FLOPs.
    std::uint64_t total_flops() const { return gemm_flops + trsm_flops + reduction_flops; }

    FlopLedger& operator+=(const FlopLedger& o) {
        gemm_flops += o.gemm_flops;
        trsm_flops += o.trsm_flops;
        reduction_flops += o.reduction_flops;
        return *this;
    }
};

}  // namespace mudkit
